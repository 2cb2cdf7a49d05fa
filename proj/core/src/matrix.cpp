#include "sefoss/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sefoss {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: values size " +
                                std::to_string(values_.size()) +
                                " does not match shape " +
                                std::to_string(rows_) + "x" +
                                std::to_string(cols_));
  }
}

Matrix Matrix::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(1, n, std::move(values));
}

Matrix Matrix::scalar(double value) { return Matrix(1, 1, {value}); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::filled(std::size_t rows, std::size_t cols, double value) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = value;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

void check_matmul_shapes(const char* name, std::size_t ak, std::size_t bk) {
  if (ak != bk) {
    throw std::invalid_argument(std::string(name) + ": inner dimensions " +
                                std::to_string(ak) + " and " +
                                std::to_string(bk) + " do not agree");
  }
}

}  // namespace

void add_matmul_nn(Matrix& out, const Matrix& a, const Matrix& b) {
  check_matmul_shapes("matmul", a.cols(), b.rows());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict out_row = out.data() + i * n;
    const double* __restrict a_row = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      const double* __restrict b_row = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

void add_matmul_nt(Matrix& out, const Matrix& a, const Matrix& b) {
  check_matmul_shapes("matmul_nt", a.cols(), b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict a_row = a.data() + i * k;
    double* __restrict out_row = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* __restrict b_row = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      out_row[j] += acc;
    }
  }
}

void add_matmul_tn(Matrix& out, const Matrix& a, const Matrix& b) {
  check_matmul_shapes("matmul_tn", a.rows(), b.rows());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict a_row = a.data() + i * k;
    const double* __restrict b_row = b.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      double* __restrict out_row = out.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  add_matmul_nn(out, a, b);
  return out;
}

void axpy(Matrix& y, double alpha, const Matrix& x) {
  if (!y.same_shape(x)) throw std::invalid_argument("axpy: shape mismatch");
  double* __restrict yd = y.data();
  const double* __restrict xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) yd[i] += alpha * xd[i];
}

void blend(Matrix& y, double alpha, double beta, const Matrix& x) {
  if (!y.same_shape(x)) throw std::invalid_argument("blend: shape mismatch");
  double* __restrict yd = y.data();
  const double* __restrict xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) yd[i] = alpha * yd[i] + beta * xd[i];
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

}  // namespace sefoss
