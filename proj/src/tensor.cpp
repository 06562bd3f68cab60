#include "softmoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace softmoe {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

[[noreturn]] void shape_fail(const char* what, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(what) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("Matrix: rows and cols must be >= 1");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw ShapeError("Matrix: rows and cols must be >= 1");
  if (data_.size() != rows * cols) throw ShapeError("Matrix: data length does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  if (rows_ == 0 || cols_ == 0) throw ShapeError("Matrix: rows and cols must be >= 1");
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t nc = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.data() + i * nc;
    for (std::size_t p = 0; p < inner; ++p) {
      const double av = a(i, p);
      const double* br = b.data() + p * nc;
      for (std::size_t j = 0; j < nc; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  const std::size_t nc = b.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* br = b.data() + p * nc;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a(p, i);
      double* o = out.data() + i * nc;
      for (std::size_t j = 0; j < nc; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < ar.size(); ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix softmax_over_rows_per_column(const Matrix& logits) {
  require_finite(logits, "softmax_over_rows_per_column");
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    double mx = logits(0, j);
    for (std::size_t i = 1; i < logits.rows(); ++i) mx = std::max(mx, logits(i, j));
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      out(i, j) = std::exp(logits(i, j) - mx);
      total += out(i, j);
    }
    for (std::size_t i = 0; i < logits.rows(); ++i) out(i, j) /= total;
  }
  return out;
}

void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    total += x;
  }
  for (double& x : v) x /= total;
}

Matrix softmax_over_columns_per_row(const Matrix& logits) {
  require_finite(logits, "softmax_over_columns_per_row");
  Matrix out = logits;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

double frobenius_norm(const Matrix& x) {
  double acc = 0.0;
  for (double v : x.flat()) acc += v * v;
  return std::sqrt(acc);
}

double sum(const Matrix& x) {
  double acc = 0.0;
  for (double v : x.flat()) acc += v;
  return acc;
}

namespace {

void require_bijection(std::span<const std::size_t> perm, std::size_t n) {
  if (perm.size() != n) throw std::invalid_argument("permutation length does not match row count");
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw std::invalid_argument("permutation is not a bijection");
    seen[p] = true;
  }
}

}  // namespace

Matrix permute_rows(const Matrix& x, std::span<const std::size_t> perm) {
  require_bijection(perm, x.rows());
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto src = x.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  require_bijection(perm, perm.size());
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.flat()[i] - b.flat()[i]));
  return worst;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(what, a, b);
}

}  // namespace softmoe
