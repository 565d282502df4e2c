// Compiled with -mavx2 -mfma. Nothing in here may run before the dispatcher
// has confirmed CPU support.
#include "mtseg/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace mtseg::kernels::avx2 {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr int width = 8;
  static type zero() { return _mm256_setzero_ps(); }
  static type set1(float v) { return _mm256_set1_ps(v); }
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type fma(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static type add(type a, type b) { return _mm256_add_ps(a, b); }
  static float hsum(type v) {
    const __m128 x128 = _mm_add_ps(_mm256_extractf128_ps(v, 1), _mm256_castps256_ps128(v));
    const __m128 x64 = _mm_add_ps(x128, _mm_movehl_ps(x128, x128));
    const __m128 x32 = _mm_add_ss(x64, _mm_shuffle_ps(x64, x64, 0x55));
    return _mm_cvtss_f32(x32);
  }
};

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr int width = 4;
  static type zero() { return _mm256_setzero_pd(); }
  static type set1(double v) { return _mm256_set1_pd(v); }
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type fma(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static type add(type a, type b) { return _mm256_add_pd(a, b); }
  static double hsum(type v) {
    const __m128d x128 = _mm_add_pd(_mm256_extractf128_pd(v, 1), _mm256_castpd256_pd128(v));
    return _mm_cvtsd_f64(_mm_add_sd(x128, _mm_unpackhi_pd(x128, x128)));
  }
};

template <typename T>
T dot(int n, const T* x, const T* y) {
  using V = Vec<T>;
  constexpr int w = V::width;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  int i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    acc0 = V::fma(V::load(x + i), V::load(y + i), acc0);
    acc1 = V::fma(V::load(x + i + w), V::load(y + i + w), acc1);
  }
  for (; i + w <= n; i += w) acc0 = V::fma(V::load(x + i), V::load(y + i), acc0);
  T sum = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

template <typename T>
void axpy(int n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr int w = V::width;
  const auto va = V::set1(alpha);
  int i = 0;
  for (; i + w <= n; i += w) V::store(y + i, V::fma(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// 2x4 register block of dot products; rows of A against rows of B.
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  using V = Vec<T>;
  constexpr int w = V::width;
  const int kv = k - k % w;
  auto finish = [&](T* dst, T sum) { *dst = accumulate ? *dst + sum : sum; };
  int i = 0;
  for (; i + 2 <= m; i += 2) {
    const T* a0 = a + static_cast<long>(i) * lda;
    const T* a1 = a0 + lda;
    T* c0 = c + static_cast<long>(i) * ldc;
    T* c1 = c0 + ldc;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + static_cast<long>(j) * ldb;
      const T* b1 = b0 + ldb;
      const T* b2 = b1 + ldb;
      const T* b3 = b2 + ldb;
      auto s00 = V::zero(), s01 = V::zero(), s02 = V::zero(), s03 = V::zero();
      auto s10 = V::zero(), s11 = V::zero(), s12 = V::zero(), s13 = V::zero();
      for (int p = 0; p < kv; p += w) {
        const auto x0 = V::load(a0 + p);
        const auto x1 = V::load(a1 + p);
        auto y = V::load(b0 + p);
        s00 = V::fma(x0, y, s00);
        s10 = V::fma(x1, y, s10);
        y = V::load(b1 + p);
        s01 = V::fma(x0, y, s01);
        s11 = V::fma(x1, y, s11);
        y = V::load(b2 + p);
        s02 = V::fma(x0, y, s02);
        s12 = V::fma(x1, y, s12);
        y = V::load(b3 + p);
        s03 = V::fma(x0, y, s03);
        s13 = V::fma(x1, y, s13);
      }
      T r[8] = {V::hsum(s00), V::hsum(s01), V::hsum(s02), V::hsum(s03),
                V::hsum(s10), V::hsum(s11), V::hsum(s12), V::hsum(s13)};
      for (int p = kv; p < k; ++p) {
        r[0] += a0[p] * b0[p];
        r[1] += a0[p] * b1[p];
        r[2] += a0[p] * b2[p];
        r[3] += a0[p] * b3[p];
        r[4] += a1[p] * b0[p];
        r[5] += a1[p] * b1[p];
        r[6] += a1[p] * b2[p];
        r[7] += a1[p] * b3[p];
      }
      for (int q = 0; q < 4; ++q) {
        finish(c0 + j + q, r[q]);
        finish(c1 + j + q, r[4 + q]);
      }
    }
    for (; j < n; ++j) {
      const T* bj = b + static_cast<long>(j) * ldb;
      finish(c0 + j, dot(k, a0, bj));
      finish(c1 + j, dot(k, a1, bj));
    }
  }
  for (; i < m; ++i) {
    const T* ai = a + static_cast<long>(i) * lda;
    T* ci = c + static_cast<long>(i) * ldc;
    for (int j = 0; j < n; ++j) finish(ci + j, dot(k, ai, b + static_cast<long>(j) * ldb));
  }
}

// Accumulates a 4-vector wide strip of C in registers while walking k.
// `a_at(i, p)` abstracts over normal and transposed A.
template <typename T, typename AAt>
void gemm_strips(int m, int n, int k, AAt a_at, const T* b, int ldb, T* c, int ldc,
                 bool accumulate) {
  using V = Vec<T>;
  constexpr int w = V::width;
  constexpr int strip = 4 * w;
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<long>(i) * ldc;
    int j = 0;
    for (; j + strip <= n; j += strip) {
      auto s0 = accumulate ? V::load(ci + j) : V::zero();
      auto s1 = accumulate ? V::load(ci + j + w) : V::zero();
      auto s2 = accumulate ? V::load(ci + j + 2 * w) : V::zero();
      auto s3 = accumulate ? V::load(ci + j + 3 * w) : V::zero();
      for (int p = 0; p < k; ++p) {
        const auto x = V::set1(a_at(i, p));
        const T* bp = b + static_cast<long>(p) * ldb + j;
        s0 = V::fma(x, V::load(bp), s0);
        s1 = V::fma(x, V::load(bp + w), s1);
        s2 = V::fma(x, V::load(bp + 2 * w), s2);
        s3 = V::fma(x, V::load(bp + 3 * w), s3);
      }
      V::store(ci + j, s0);
      V::store(ci + j + w, s1);
      V::store(ci + j + 2 * w, s2);
      V::store(ci + j + 3 * w, s3);
    }
    for (; j + w <= n; j += w) {
      auto s = accumulate ? V::load(ci + j) : V::zero();
      for (int p = 0; p < k; ++p)
        s = V::fma(V::set1(a_at(i, p)), V::load(b + static_cast<long>(p) * ldb + j), s);
      V::store(ci + j, s);
    }
    for (; j < n; ++j) {
      T s = accumulate ? ci[j] : T(0);
      for (int p = 0; p < k; ++p) s += a_at(i, p) * b[static_cast<long>(p) * ldb + j];
      ci[j] = s;
    }
  }
}

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  gemm_strips<T>(
      m, n, k, [=](int i, int p) { return a[static_cast<long>(i) * lda + p]; }, b, ldb, c, ldc,
      accumulate);
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  gemm_strips<T>(
      m, n, k, [=](int i, int p) { return a[static_cast<long>(p) * lda + i]; }, b, ldb, c, ldc,
      accumulate);
}

// Cephes-style single precision exp, valid on [-88.38, 88.38] after clamping.
inline __m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(x, _mm256_set1_ps(88.3762626647949f));
  x = _mm256_max_ps(x, _mm256_set1_ps(-88.3762626647949f));
  __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  const __m256 z = _mm256_mul_ps(x, x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, z, x);
  y = _mm256_add_ps(y, _mm256_set1_ps(1.0f));
  __m256i e = _mm256_cvttps_epi32(fx);
  e = _mm256_add_epi32(e, _mm256_set1_epi32(127));
  e = _mm256_slli_epi32(e, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(e));
}

float max_ps(int n, const float* x) {
  int i = 0;
  float mx = x[0];
  if (n >= 8) {
    __m256 vm = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
    alignas(32) float tmp[8];
    _mm256_store_ps(tmp, vm);
    mx = *std::max_element(tmp, tmp + 8);
  }
  for (; i < n; ++i) mx = std::max(mx, x[i]);
  return mx;
}

void softmax_f(int n, float* x) {
  if (n <= 0) return;
  float mx = max_ps(n, x);
  if (std::isinf(mx) && mx < 0) mx = 0;
  const __m256 vmx = _mm256_set1_ps(mx);
  __m256 vs = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 e = exp_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), vmx));
    _mm256_storeu_ps(x + i, e);
    vs = _mm256_add_ps(vs, e);
  }
  float sum = Vec<float>::hsum(vs);
  for (; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  const float inv = 1.0f / sum;
  const __m256 vinv = _mm256_set1_ps(inv);
  for (i = 0; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), vinv));
  for (; i < n; ++i) x[i] *= inv;
}

void log_softmax_f(int n, const float* x, float* out) {
  if (n <= 0) return;
  const float mx = max_ps(n, x);
  const __m256 vmx = _mm256_set1_ps(mx);
  __m256 vs = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) vs = _mm256_add_ps(vs, exp_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), vmx)));
  float sum = Vec<float>::hsum(vs);
  for (; i < n; ++i) sum += std::exp(x[i] - mx);
  const float lse = mx + std::log(sum);
  const __m256 vl = _mm256_set1_ps(lse);
  for (i = 0; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), vl));
  for (; i < n; ++i) out[i] = x[i] - lse;
}

}  // namespace

template <>
const KernelTable<float>& table<float>() {
  static const KernelTable<float> t{&gemm_nt<float>, &gemm_nn<float>, &gemm_tn<float>,
                                    &dot<float>,     &axpy<float>,    &softmax_f,
                                    &log_softmax_f};
  return t;
}

// Double precision exp stays scalar; only the linear algebra is vectorized.
template <>
const KernelTable<double>& table<double>() {
  static const KernelTable<double> t{&gemm_nt<double>,
                                     &gemm_nn<double>,
                                     &gemm_tn<double>,
                                     &dot<double>,
                                     &axpy<double>,
                                     scalar::table<double>().softmax,
                                     scalar::table<double>().log_softmax};
  return t;
}

}  // namespace mtseg::kernels::avx2
