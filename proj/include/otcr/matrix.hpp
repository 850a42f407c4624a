#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace otcr {

// Dense row-major matrix of doubles. Problem sizes here are minibatch
// scale, so there is no sparse or strided variant.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Takes ownership of `data`; throws DimensionError on a size mismatch and
  // NumericalError on a non-finite entry.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  Matrix transpose() const;
  // Rows listed in `idx`, in that order.
  Matrix select_rows(std::span<const std::size_t> idx) const;
  // Leading `k` columns.
  Matrix left_cols(std::size_t k) const;

  bool all_finite() const noexcept;
  // Throws NumericalError naming `what` if any entry is NaN/Inf.
  void require_finite(const char* what) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

// Frobenius inner product <a, b>.
double frobenius_dot(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double mean(const Matrix& a);

std::vector<double> row_sums(const Matrix& a);
std::vector<double> col_sums(const Matrix& a);

// Squared Euclidean distances between the rows of `a` (n x d) and the rows
// of `b` (m x d): out(i, j) = sum_c (a(i,c) - b(j,c))^2.
Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b);
// Same as pairwise_sq_dist(a, a) but exactly symmetric with a zero diagonal.
Matrix pairwise_sq_dist(const Matrix& a);

}  // namespace otcr
