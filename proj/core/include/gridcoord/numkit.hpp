#pragma once

// Small dense linear-algebra kernel. Row-major storage, LU with partial
// pivoting. Sizes in this project stay at a few hundred rows.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gridcoord::numkit {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const noexcept { return data_; }

  /// Copies a 1-column (or 1-row) matrix out as a plain vector.
  std::vector<double> to_vector() const;

  Matrix transposed() const;
  Matrix block(std::span<const std::size_t> row_idx, std::span<const std::size_t> col_idx) const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
std::vector<double> operator*(const Matrix& a, std::span<const double> x);

double norm_inf(const Matrix& a);
double norm_fro(const Matrix& a);
double norm2(std::span<const double> v);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Solves A X = B by LU with partial pivoting. Throws SingularMatrix when a
/// pivot falls below 1e-12 in magnitude.
Matrix solve_linear(const Matrix& a, const Matrix& b);
std::vector<double> solve_linear(const Matrix& a, std::span<const double> b);
Matrix inverse(const Matrix& a);

/// Kronecker product: entry (i*B.rows+k, j*B.cols+l) = A(i,j)*B(k,l).
Matrix kron(const Matrix& a, const Matrix& b);

/// Column-major stack of A into a rows*cols x 1 matrix.
Matrix vec(const Matrix& a);
/// Inverse of vec: fills a rows x cols matrix column by column.
Matrix reshape(std::span<const double> v, std::size_t rows, std::size_t cols);

Matrix diag_op(std::span<const double> v);

}  // namespace gridcoord::numkit
