#include "mtseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtseg::kernels::scalar {
namespace {

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<long>(i) * lda;
    T* ci = c + static_cast<long>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<long>(j) * ldb;
      T sum = 0;
      for (int p = 0; p < k; ++p) sum += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + sum : sum;
    }
  }
}

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<long>(i) * ldc;
    if (!accumulate) std::fill(ci, ci + n, T(0));
    const T* ai = a + static_cast<long>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b + static_cast<long>(p) * ldb;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  if (!accumulate) {
    for (int i = 0; i < m; ++i) std::fill(c + static_cast<long>(i) * ldc, c + static_cast<long>(i) * ldc + n, T(0));
  }
  for (int p = 0; p < k; ++p) {
    const T* ap = a + static_cast<long>(p) * lda;
    const T* bp = b + static_cast<long>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const T api = ap[i];
      T* ci = c + static_cast<long>(i) * ldc;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <typename T>
T dot(int n, const T* x, const T* y) {
  T sum = 0;
  for (int i = 0; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

template <typename T>
void axpy(int n, T alpha, const T* x, T* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void softmax(int n, T* x) {
  if (n <= 0) return;
  T mx = *std::max_element(x, x + n);
  if (mx == -std::numeric_limits<T>::infinity()) mx = 0;
  T sum = 0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  const T inv = T(1) / sum;
  for (int i = 0; i < n; ++i) x[i] *= inv;
}

template <typename T>
void log_softmax(int n, const T* x, T* out) {
  if (n <= 0) return;
  const T mx = *std::max_element(x, x + n);
  T sum = 0;
  for (int i = 0; i < n; ++i) sum += std::exp(x[i] - mx);
  const T lse = mx + std::log(sum);
  for (int i = 0; i < n; ++i) out[i] = x[i] - lse;
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  static const KernelTable<T> t{&gemm_nt<T>, &gemm_nn<T>, &gemm_tn<T>, &dot<T>,
                                &axpy<T>,    &softmax<T>, &log_softmax<T>};
  return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace mtseg::kernels::scalar
