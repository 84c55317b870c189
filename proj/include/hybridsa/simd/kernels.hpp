#pragma once

// Dense double-precision kernels behind every matrix product in the library.
//
// Each backend provides the same table of functions. The scalar backend is
// the reference; vector backends are selected once at startup from the CPU
// feature set (override with HYBRIDSA_SIMD=scalar|avx2|neon) and are tested
// for equivalence against it. All gemm variants accumulate into C.

#include <cstddef>
#include <string_view>

namespace hybridsa::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  Backend backend;

  /// sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  /// C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);

  /// C(m x n) += A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);

  /// C(m x n) += A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
};

namespace scalar {
const KernelTable& table();
}
#if defined(HYBRIDSA_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif
#if defined(HYBRIDSA_HAVE_NEON)
namespace neon {
const KernelTable& table();
}
#endif

/// True when the backend was compiled in and the running CPU supports it.
bool backend_supported(Backend backend);

/// Table for a specific backend; throws std::invalid_argument if unsupported.
const KernelTable& kernels_for(Backend backend);

/// The active table. Resolved on first call.
const KernelTable& kernels();

Backend active_backend();
void set_backend(Backend backend);

std::string_view backend_name(Backend backend);
Backend parse_backend(std::string_view name);

}  // namespace hybridsa::simd
