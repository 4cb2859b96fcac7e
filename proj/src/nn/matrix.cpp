#include "txscam/nn/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace txscam::nn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ShapeMismatch("data length does not match " + shape_str());
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeMismatch("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::string Matrix::shape_str() const { return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")"; }

Matrix& Matrix::operator+=(const Matrix& o) {
  if (!same_shape(o)) throw ShapeMismatch("add " + shape_str() + " += " + o.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (auto& x : data_) x *= s;
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul " + a.shape_str() + " x " + b.shape_str());
  Matrix c(a.rows(), b.cols());
  const std::size_t n = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.data().data() + i * m;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data().data() + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
    throw ShapeMismatch("A^T B " + a.shape_str() + " " + b.shape_str() + " -> " + c.shape_str());
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* brow = b.data().data() + r * m;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = a(r, i);
      if (ari == 0.0) continue;
      double* crow = c.data().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += ari * brow[j];
    }
  }
}

void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows())
    throw ShapeMismatch("A B^T " + a.shape_str() + " " + b.shape_str() + " -> " + c.shape_str());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data().data() + i * n;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data().data() + j * n;
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += arow[k] * brow[k];
      c(i, j) += s;
    }
  }
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("compare " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace txscam::nn
