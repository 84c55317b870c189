#include "hybridsa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hybridsa/simd/kernels.hpp"

namespace hybridsa {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Matrix::reshape(std::size_t rows, std::size_t cols) {
  if (rows * cols != data_.size()) {
    throw std::invalid_argument("reshape changes element count");
  }
  rows_ = rows;
  cols_ = cols;
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c, bool accumulate) {
  const std::size_t m = ta == Trans::kNo ? a.rows() : a.cols();
  const std::size_t k = ta == Trans::kNo ? a.cols() : a.rows();
  const std::size_t kb = tb == Trans::kNo ? b.rows() : b.cols();
  const std::size_t n = tb == Trans::kNo ? b.cols() : b.rows();
  if (k != kb) {
    throw std::invalid_argument("gemm inner dimension mismatch: " + shape_string(a) + " vs " +
                                shape_string(b));
  }
  if (!accumulate || c.rows() != m || c.cols() != n) {
    if (accumulate && !c.empty()) {
      throw std::invalid_argument("gemm accumulator has shape " + shape_string(c));
    }
    c = Matrix(m, n);
  }
  if (m == 0 || n == 0 || k == 0) return;
  const auto& kern = simd::kernels();
  if (ta == Trans::kNo && tb == Trans::kNo) {
    kern.gemm_nn(m, n, k, a.data(), a.cols(), b.data(), b.cols(), c.data(), n);
  } else if (ta == Trans::kNo && tb == Trans::kYes) {
    kern.gemm_nt(m, n, k, a.data(), a.cols(), b.data(), b.cols(), c.data(), n);
  } else if (ta == Trans::kYes && tb == Trans::kNo) {
    kern.gemm_tn(m, n, k, a.data(), a.cols(), b.data(), b.cols(), c.data(), n);
  } else {
    // Aᵀ·Bᵀ is not on any hot path.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (std::size_t p = 0; p < k; ++p) sum += a(p, i) * b(j, p);
        c(i, j) += sum;
      }
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c;
  gemm(a, Trans::kNo, b, Trans::kNo, c, false);
  return c;
}

void add_row_vector(Matrix& m, const Matrix& bias) {
  if (bias.size() != m.cols()) throw std::invalid_argument("bias width mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias[c];
  }
}

void accumulate_column_sums(const Matrix& m, Matrix& out) {
  if (out.size() != m.cols()) throw std::invalid_argument("column-sum width mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c];
  }
}

void add_in_place(Matrix& dst, const Matrix& src) {
  if (!dst.same_shape(src)) {
    throw std::invalid_argument("shape mismatch: " + shape_string(dst) + " vs " +
                                shape_string(src));
  }
  simd::kernels().axpy(1.0, src.data(), dst.data(), dst.size());
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace hybridsa
