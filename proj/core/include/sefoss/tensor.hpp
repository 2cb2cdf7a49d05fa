#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sefoss/matrix.hpp"

namespace sefoss {

class Tape;

namespace detail {

struct TensorNode {
  Matrix value;
  Matrix grad;  // same shape as value when participating, empty otherwise
  bool requires_grad = false;
  Tape* tape = nullptr;  // null for constants
};

}  // namespace detail

// Reverse-mode autodiff handle over a Matrix. Tensors are created either as
// constants (no gradient path) or on a Tape via Tape::leaf. Operations on
// tensors record their adjoint rule on the tape; Tape::backward replays the
// rules once, in reverse, populating grad() on every participating tensor.
class Tensor {
 public:
  Tensor() = default;

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool defined() const { return node_ != nullptr; }
  bool is_scalar() const { return node_->value.is_scalar(); }

  const Matrix& value() const { return node_->value; }
  double scalar_value() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  // Accumulated adjoint; valid after Tape::backward.
  const Matrix& grad() const;

  // Constant copy with no tape edges: stop-gradient.
  Tensor detach() const;

 private:
  friend class Tape;
  friend Tensor make_constant(Matrix value);
  friend struct OpContext;

  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode> node_;
};

Tensor make_constant(Matrix value);
inline Tensor make_scalar(double v) { return make_constant(Matrix::scalar(v)); }

// Records the adjoint replay for one forward pass. Single use: after
// backward() the tape is spent and any further recording or replay is a
// contract error. Single-threaded by contract.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Matrix value, bool requires_grad = true);

  // root must be a 1x1 tensor recorded on this tape. Seeds d(root)/d(root)=1
  // and replays all adjoint rules in reverse order, exactly once.
  void backward(const Tensor& root);

  bool spent() const { return spent_; }
  std::size_t num_recorded() const { return ops_.size(); }

 private:
  friend struct OpContext;
  std::vector<std::function<void()>> ops_;
  bool spent_ = false;
};

// --- primitives -----------------------------------------------------------
// Shapes are validated; mixing tensors from two different tapes is a
// contract error. Outputs are constants whenever no input participates in
// the gradient graph.

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise add; also accepts b as a 1 x cols row vector, broadcast over
// the rows of a (bias addition).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard, same shape
Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);
// relu subgradient at exactly 0 is taken as 0.
Tensor relu(const Tensor& a);
Tensor max_with_constant(const Tensor& a, double floor);

// Numerically stable log(sum_j exp(a_ij)) per row, m x C -> m x 1.
Tensor row_log_sum_exp(const Tensor& a);
// Per-row cosine similarity, m x d pairs -> m x 1. Throws std::domain_error
// on a zero-norm row.
Tensor row_cosine(const Tensor& a, const Tensor& b);

Tensor row_sum(const Tensor& a);  // m x n -> m x 1
Tensor sum(const Tensor& a);      // -> 1 x 1
Tensor mean(const Tensor& a);     // -> 1 x 1

}  // namespace sefoss
