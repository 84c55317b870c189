#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hybridsa {

/// Row-major dense matrix of doubles. Vectors are 1 x n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  void set_zero() { fill(0.0); }

  /// Reinterpret with a new shape of the same element count.
  void reshape(std::size_t rows, std::size_t cols);

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

enum class Trans { kNo, kYes };

/// C = op(A) * op(B) (+ C when accumulate). Routed through the active SIMD kernels.
void gemm(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c, bool accumulate);

Matrix matmul(const Matrix& a, const Matrix& b);

/// Adds the row vector `bias` (1 x cols) to every row of m.
void add_row_vector(Matrix& m, const Matrix& bias);

/// Accumulates column sums of m into `out` (1 x cols).
void accumulate_column_sums(const Matrix& m, Matrix& out);

void add_in_place(Matrix& dst, const Matrix& src);

double max_abs(const Matrix& m);

bool all_finite(const Matrix& m);

}  // namespace hybridsa
