// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double-precision matrices and the handful of kernels the
// transformer, its backward pass and the mask pipeline are built from.
// Every kernel validates that its result is finite and throws NumericalError
// naming the kernel otherwise.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace arcl {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  /// Elementwise value equality (what "bit-identical" means for finite data).
  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A stack of equally shaped matrices (per layer or per head).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t depth, std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit Tensor3(std::vector<Matrix> slices);

  std::size_t depth() const noexcept { return slices_.size(); }
  std::size_t rows() const noexcept { return slices_.empty() ? 0 : slices_.front().rows(); }
  std::size_t cols() const noexcept { return slices_.empty() ? 0 : slices_.front().cols(); }

  Matrix& operator[](std::size_t i) noexcept { return slices_[i]; }
  const Matrix& operator[](std::size_t i) const noexcept { return slices_[i]; }
  std::span<const Matrix> slices() const noexcept { return slices_; }

  bool operator==(const Tensor3& other) const = default;

 private:
  std::vector<Matrix> slices_;
};

/// Throws NumericalError mentioning `op` if any entry is NaN or Inf.
void require_finite(const Matrix& m, std::string_view op);
bool all_finite(std::span<const double> values) noexcept;

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double factor);
double frobenius_norm(const Matrix& a);

/// In-place a += b (used for gradient accumulation).
void add_inplace(Matrix& a, const Matrix& b);

/// Row-wise softmax, stabilized by subtracting each row's maximum.
Matrix softmax_rows(const Matrix& a);

/// Columns [first, first + count) of `a`.
Matrix col_block(const Matrix& a, std::size_t first, std::size_t count);
/// Writes `block` into columns [first, first + block.cols()) of `a`.
void set_col_block(Matrix& a, std::size_t first, const Matrix& block);

}  // namespace arcl
