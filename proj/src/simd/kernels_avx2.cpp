// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include "hybridsa/simd/kernels.hpp"

namespace hybridsa::simd::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Shared micro-kernel for the "broadcast A, stream B rows" products.
// kTransA selects whether A is stored as (m x k) or (k x m).
template <bool kTransA>
inline void gemm_broadcast(std::size_t m, std::size_t n, std::size_t k, const double* a,
                           std::size_t lda, const double* b, std::size_t ldb, double* c,
                           std::size_t ldc) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return kTransA ? a[p * lda + i] : a[i * lda + p];
  };
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * ldc;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d acc0 = _mm256_loadu_pd(c_row + j);
      __m256d acc1 = _mm256_loadu_pd(c_row + j + 4);
      __m256d acc2 = _mm256_loadu_pd(c_row + j + 8);
      __m256d acc3 = _mm256_loadu_pd(c_row + j + 12);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(a_at(i, p));
        const double* b_row = b + p * ldb + j;
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + 4), acc1);
        acc2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + 8), acc2);
        acc3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + 12), acc3);
      }
      _mm256_storeu_pd(c_row + j, acc0);
      _mm256_storeu_pd(c_row + j + 4, acc1);
      _mm256_storeu_pd(c_row + j + 8, acc2);
      _mm256_storeu_pd(c_row + j + 12, acc3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_loadu_pd(c_row + j);
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_fmadd_pd(_mm256_set1_pd(a_at(i, p)), _mm256_loadu_pd(b + p * ldb + j), acc);
      }
      _mm256_storeu_pd(c_row + j, acc);
    }
    for (; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a_at(i, p) * b[p * ldb + j];
      c_row[j] += sum;
    }
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_broadcast<false>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_broadcast<true>(m, n, k, a, lda, b, ldb, c, ldc);
}

// Row-by-row dot products, four B rows at a time so each A load is reused.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a + i * lda;
    double* c_row = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd();
      __m256d s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(a_row + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double t0 = hsum(s0);
      double t1 = hsum(s1);
      double t2 = hsum(s2);
      double t3 = hsum(s3);
      for (; p < k; ++p) {
        t0 += a_row[p] * b0[p];
        t1 += a_row[p] * b1[p];
        t2 += a_row[p] * b2[p];
        t3 += a_row[p] * b3[p];
      }
      c_row[j] += t0;
      c_row[j + 1] += t1;
      c_row[j + 2] += t2;
      c_row[j + 3] += t3;
    }
    for (; j < n; ++j) c_row[j] += dot(a_row, b + j * ldb, k);
  }
}

constexpr KernelTable kTable{Backend::kAvx2, dot, axpy, gemm_nn, gemm_nt, gemm_tn};

}  // namespace

const KernelTable& table() { return kTable; }

}  // namespace hybridsa::simd::avx2
