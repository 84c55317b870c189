// AArch64 Advanced SIMD; always present on that architecture.

#include <arm_neon.h>

#include "hybridsa/simd/kernels.hpp"

namespace hybridsa::simd::neon {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

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
    for (; j + 8 <= n; j += 8) {
      float64x2_t acc0 = vld1q_f64(c_row + j);
      float64x2_t acc1 = vld1q_f64(c_row + j + 2);
      float64x2_t acc2 = vld1q_f64(c_row + j + 4);
      float64x2_t acc3 = vld1q_f64(c_row + j + 6);
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(a_at(i, p));
        const double* b_row = b + p * ldb + j;
        acc0 = vfmaq_f64(acc0, av, vld1q_f64(b_row));
        acc1 = vfmaq_f64(acc1, av, vld1q_f64(b_row + 2));
        acc2 = vfmaq_f64(acc2, av, vld1q_f64(b_row + 4));
        acc3 = vfmaq_f64(acc3, av, vld1q_f64(b_row + 6));
      }
      vst1q_f64(c_row + j, acc0);
      vst1q_f64(c_row + j + 2, acc1);
      vst1q_f64(c_row + j + 4, acc2);
      vst1q_f64(c_row + j + 6, acc3);
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

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot(a + i * lda, b + j * ldb, k);
  }
}

constexpr KernelTable kTable{Backend::kNeon, dot, axpy, gemm_nn, gemm_nt, gemm_tn};

}  // namespace

const KernelTable& table() { return kTable; }

}  // namespace hybridsa::simd::neon
