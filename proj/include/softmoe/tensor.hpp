#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace softmoe {

/// Thrown when operand shapes are incompatible. The message carries both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Always at least 1x1.
class Matrix {
 public:
  Matrix() : Matrix(1, 1) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool all_finite() const noexcept;
  std::string shape_str() const;

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

/// a * b. Throws ShapeError unless a.cols() == b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without forming a^T.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T without forming b^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Softmax down each column (normalizes over rows). Used for dispatch weights.
Matrix softmax_over_rows_per_column(const Matrix& logits);
/// Softmax across each row (normalizes over columns). Used for combine weights.
Matrix softmax_over_columns_per_row(const Matrix& logits);

/// Stable softmax of a vector, written into out (same length).
void softmax_inplace(std::span<double> v);

double frobenius_norm(const Matrix& x);
double sum(const Matrix& x);

/// out row i = input row perm[i]. perm must be a bijection on [0, rows).
Matrix permute_rows(const Matrix& x, std::span<const std::size_t> perm);
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

/// Largest |a - b| entry; throws on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace softmoe
