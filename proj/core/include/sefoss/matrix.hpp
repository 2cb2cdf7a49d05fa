#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sefoss {

// Dense row-major matrix of doubles. This is the plain value type of the
// project: parameters, batches, gradients and checkpoints are all built
// from it. Autodiff lives in tensor.hpp on top of this.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix row_vector(std::vector<double> values);
  static Matrix scalar(double value);
  static Matrix identity(std::size_t n);
  static Matrix filled(std::size_t rows, std::size_t cols, double value);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data() + r * cols_, cols_};
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// out += a * b, shapes m x k, k x n, m x n.
void add_matmul_nn(Matrix& out, const Matrix& a, const Matrix& b);
// out += a * b^T, shapes m x k, n x k, m x n.
void add_matmul_nt(Matrix& out, const Matrix& a, const Matrix& b);
// out += a^T * b, shapes m x k, m x n, k x n.
void add_matmul_tn(Matrix& out, const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);

// y += alpha * x
void axpy(Matrix& y, double alpha, const Matrix& x);
// y = alpha * y + beta * x
void blend(Matrix& y, double alpha, double beta, const Matrix& x);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace sefoss
