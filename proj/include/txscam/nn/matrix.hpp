#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "txscam/errors.hpp"

namespace txscam::nn {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Matrix transposed() const;
  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator*=(double s) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// C = A B. Throws ShapeMismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
/// C += A^T B (shapes checked).
void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& c);
/// C += A B^T (shapes checked).
void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& c);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace txscam::nn
