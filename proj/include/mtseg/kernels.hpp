#pragma once

// Dense arithmetic kernels used by the transformer. Every kernel has a
// portable scalar reference and, on x86-64, an AVX2/FMA variant. The variant
// is picked once at startup from CPUID (override with MTSEG_ISA=scalar|avx2)
// and can be switched at runtime for equivalence testing.
//
// Matrices are row-major with an explicit leading dimension, BLAS style.

#include <string_view>

namespace mtseg::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa active_isa() noexcept;
// Throws std::invalid_argument if the ISA is not available on this CPU/build.
void set_isa(Isa isa);

template <typename T>
struct KernelTable {
  // C[m,n] (+)= A[m,k] * B[n,k]^T
  void (*gemm_nt)(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                  bool accumulate);
  // C[m,n] (+)= A[m,k] * B[k,n]
  void (*gemm_nn)(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                  bool accumulate);
  // C[m,n] (+)= A[k,m]^T * B[k,n]
  void (*gemm_tn)(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                  bool accumulate);
  T (*dot)(int n, const T* x, const T* y);
  // y += alpha * x
  void (*axpy)(int n, T alpha, const T* x, T* y);
  // in place, numerically stable
  void (*softmax)(int n, T* x);
  // out may alias x
  void (*log_softmax)(int n, const T* x, T* out);
};

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_isa());
}

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}

namespace avx2 {
// Only defined when the build enables AVX2 variants.
template <typename T>
const KernelTable<T>& table();
}

template <typename T>
inline void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                    bool accumulate = false) {
  active<T>().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
template <typename T>
inline void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                    bool accumulate = false) {
  active<T>().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
template <typename T>
inline void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                    bool accumulate = false) {
  active<T>().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
template <typename T>
inline T dot(int n, const T* x, const T* y) {
  return active<T>().dot(n, x, y);
}
template <typename T>
inline void axpy(int n, T alpha, const T* x, T* y) {
  active<T>().axpy(n, alpha, x, y);
}
template <typename T>
inline void softmax(int n, T* x) {
  active<T>().softmax(n, x);
}
template <typename T>
inline void log_softmax(int n, const T* x, T* out) {
  active<T>().log_softmax(n, x, out);
}

}  // namespace mtseg::kernels
