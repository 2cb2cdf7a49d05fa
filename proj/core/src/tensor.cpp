#include "sefoss/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sefoss {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

double Tensor::scalar_value() const {
  if (!is_scalar()) throw std::invalid_argument("Tensor: not a scalar");
  return node_->value(0, 0);
}

const Matrix& Tensor::grad() const {
  if (!requires_grad()) {
    throw std::logic_error("Tensor::grad: tensor does not carry a gradient");
  }
  return node_->grad;
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<TensorNode>();
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor make_constant(Matrix value) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tape::leaf(Matrix value, bool requires_grad) {
  if (spent_) throw std::logic_error("Tape: cannot record on a spent tape");
  auto node = std::make_shared<TensorNode>();
  if (requires_grad) node->grad = Matrix(value.rows(), value.cols());
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->tape = this;
  return Tensor(std::move(node));
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || !root.is_scalar()) {
    throw std::invalid_argument("Tape::backward: root must be a scalar tensor");
  }
  if (root.node_->tape != this || !root.node_->requires_grad) {
    throw std::logic_error(
        "Tape::backward: root is not recorded on this tape");
  }
  if (spent_) throw std::logic_error("Tape::backward: tape already replayed");
  spent_ = true;
  root.node_->grad(0, 0) = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

// --- op plumbing -----------------------------------------------------------

struct OpContext {
  static NodePtr node_of(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr node) { return Tensor(std::move(node)); }

  // Resolves the tape shared by the inputs (or null when all are constants)
  // and checks the single-tape contract.
  static Tape* common_tape(std::initializer_list<const Tensor*> inputs,
                           const char* op) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
      if (!t->defined()) {
        throw std::invalid_argument(std::string(op) + ": undefined operand");
      }
      Tape* other = t->node_->tape;
      if (other == nullptr) continue;
      if (tape != nullptr && tape != other) {
        throw std::logic_error(std::string(op) +
                               ": operands from two different tapes");
      }
      tape = other;
    }
    if (tape && tape->spent_) {
      throw std::logic_error(std::string(op) + ": tape already replayed");
    }
    return tape;
  }

  static bool participates(const Tensor& t) {
    return t.node_->tape != nullptr && t.node_->requires_grad;
  }

  static NodePtr make_output(Tape* tape, Matrix value, bool participates) {
    auto node = std::make_shared<TensorNode>();
    if (tape && participates) {
      node->grad = Matrix(value.rows(), value.cols());
      node->requires_grad = true;
      node->tape = tape;
    }
    node->value = std::move(value);
    return node;
  }

  static void record(Tape* tape, std::function<void()> op) {
    tape->ops_.push_back(std::move(op));
  }
};

namespace {

using Ctx = OpContext;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

// Shared skeleton for unary elementwise ops: forward maps value -> value,
// backward weight is d(out)/d(in) evaluated at the input.
template <typename Fwd, typename Dw>
Tensor unary_elementwise(const Tensor& a, const char* name, Fwd fwd, Dw dw) {
  Tape* tape = Ctx::common_tape({&a}, name);
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out.values()[i] = fwd(av.values()[i]);
  const bool part = Ctx::participates(a);
  auto out_node = Ctx::make_output(tape, std::move(out), part);
  if (part) {
    auto an = Ctx::node_of(a);
    Ctx::record(tape, [an, out_node, dw]() {
      for (std::size_t i = 0; i < an->value.size(); ++i) {
        an->grad.values()[i] +=
            out_node->grad.values()[i] * dw(an->value.values()[i]);
      }
    });
  }
  return Ctx::wrap(out_node);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* tape = Ctx::common_tape({&a, &b}, "matmul");
  Matrix out(a.rows(), b.cols());
  add_matmul_nn(out, a.value(), b.value());
  const bool pa = Ctx::participates(a), pb = Ctx::participates(b);
  auto out_node = Ctx::make_output(tape, std::move(out), pa || pb);
  if (pa || pb) {
    auto an = Ctx::node_of(a), bn = Ctx::node_of(b);
    Ctx::record(tape, [an, bn, out_node, pa, pb]() {
      if (pa) add_matmul_nt(an->grad, out_node->grad, bn->value);
      if (pb) add_matmul_tn(bn->grad, an->value, out_node->grad);
    });
  }
  return Ctx::wrap(out_node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* tape = Ctx::common_tape({&a, &b}, "add");
  const bool bias_broadcast =
      b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
  if (!bias_broadcast) check_same_shape(a, b, "add");

  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out = av;
  if (bias_broadcast) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += bv.values()[i];
  }

  const bool pa = Ctx::participates(a), pb = Ctx::participates(b);
  auto out_node = Ctx::make_output(tape, std::move(out), pa || pb);
  if (pa || pb) {
    auto an = Ctx::node_of(a), bn = Ctx::node_of(b);
    Ctx::record(tape, [an, bn, out_node, pa, pb, bias_broadcast]() {
      const Matrix& g = out_node->grad;
      if (pa) axpy(an->grad, 1.0, g);
      if (pb) {
        if (bias_broadcast) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) bn->grad(0, c) += g(r, c);
          }
        } else {
          axpy(bn->grad, 1.0, g);
        }
      }
    });
  }
  return Ctx::wrap(out_node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* tape = Ctx::common_tape({&a, &b}, "sub");
  check_same_shape(a, b, "sub");
  Matrix out = a.value();
  axpy(out, -1.0, b.value());
  const bool pa = Ctx::participates(a), pb = Ctx::participates(b);
  auto out_node = Ctx::make_output(tape, std::move(out), pa || pb);
  if (pa || pb) {
    auto an = Ctx::node_of(a), bn = Ctx::node_of(b);
    Ctx::record(tape, [an, bn, out_node, pa, pb]() {
      if (pa) axpy(an->grad, 1.0, out_node->grad);
      if (pb) axpy(bn->grad, -1.0, out_node->grad);
    });
  }
  return Ctx::wrap(out_node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape* tape = Ctx::common_tape({&a, &b}, "mul");
  check_same_shape(a, b, "mul");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = a.value().values()[i] * b.value().values()[i];
  }
  const bool pa = Ctx::participates(a), pb = Ctx::participates(b);
  auto out_node = Ctx::make_output(tape, std::move(out), pa || pb);
  if (pa || pb) {
    auto an = Ctx::node_of(a), bn = Ctx::node_of(b);
    Ctx::record(tape, [an, bn, out_node, pa, pb]() {
      const Matrix& g = out_node->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pa) an->grad.values()[i] += g.values()[i] * bn->value.values()[i];
        if (pb) bn->grad.values()[i] += g.values()[i] * an->value.values()[i];
      }
    });
  }
  return Ctx::wrap(out_node);
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      a, "scale", [factor](double v) { return factor * v; },
      [factor](double) { return factor; });
}

Tensor square(const Tensor& a) {
  return unary_elementwise(
      a, "square", [](double v) { return v * v; },
      [](double v) { return 2.0 * v; });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor max_with_constant(const Tensor& a, double floor) {
  return unary_elementwise(
      a, "max_with_constant",
      [floor](double v) { return v > floor ? v : floor; },
      [floor](double v) { return v > floor ? 1.0 : 0.0; });
}

Tensor row_log_sum_exp(const Tensor& a) {
  Tape* tape = Ctx::common_tape({&a}, "row_log_sum_exp");
  const Matrix& av = a.value();
  if (av.cols() < 1) {
    throw std::invalid_argument("row_log_sum_exp: needs at least one column");
  }
  Matrix out(av.rows(), 1);
  // Softmax rows double as the adjoint weights, so keep them.
  Matrix softmax(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const auto row = av.row(r);
    const double hi = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      const double e = std::exp(row[c] - hi);
      softmax(r, c) = e;
      total += e;
    }
    out(r, 0) = hi + std::log(total);
    for (std::size_t c = 0; c < av.cols(); ++c) softmax(r, c) /= total;
  }
  const bool part = Ctx::participates(a);
  auto out_node = Ctx::make_output(tape, std::move(out), part);
  if (part) {
    auto an = Ctx::node_of(a);
    Ctx::record(tape, [an, out_node, softmax = std::move(softmax)]() {
      for (std::size_t r = 0; r < an->value.rows(); ++r) {
        const double g = out_node->grad(r, 0);
        for (std::size_t c = 0; c < an->value.cols(); ++c) {
          an->grad(r, c) += g * softmax(r, c);
        }
      }
    });
  }
  return Ctx::wrap(out_node);
}

Tensor row_cosine(const Tensor& a, const Tensor& b) {
  Tape* tape = Ctx::common_tape({&a, &b}, "row_cosine");
  check_same_shape(a, b, "row_cosine");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const std::size_t m = av.rows(), d = av.cols();
  Matrix out(m, 1);
  std::vector<double> norm_a(m), norm_b(m);
  for (std::size_t r = 0; r < m; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dot += av(r, c) * bv(r, c);
      na += av(r, c) * av(r, c);
      nb += bv(r, c) * bv(r, c);
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na == 0.0 || nb == 0.0) {
      throw std::domain_error("row_cosine: zero-norm row " + std::to_string(r));
    }
    norm_a[r] = na;
    norm_b[r] = nb;
    out(r, 0) = dot / (na * nb);
  }
  const bool pa = Ctx::participates(a), pb = Ctx::participates(b);
  auto out_node = Ctx::make_output(tape, std::move(out), pa || pb);
  if (pa || pb) {
    auto an = Ctx::node_of(a), bn = Ctx::node_of(b);
    Ctx::record(tape, [an, bn, out_node, pa, pb, norm_a = std::move(norm_a),
                       norm_b = std::move(norm_b)]() {
      const std::size_t rows = an->value.rows(), cols = an->value.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = out_node->grad(r, 0);
        if (g == 0.0) continue;
        const double c = out_node->value(r, 0);
        const double na = norm_a[r], nb = norm_b[r];
        for (std::size_t j = 0; j < cols; ++j) {
          const double aj = an->value(r, j), bj = bn->value(r, j);
          if (pa) an->grad(r, j) += g * (bj / (na * nb) - c * aj / (na * na));
          if (pb) bn->grad(r, j) += g * (aj / (na * nb) - c * bj / (nb * nb));
        }
      }
    });
  }
  return Ctx::wrap(out_node);
}

Tensor row_sum(const Tensor& a) {
  Tape* tape = Ctx::common_tape({&a}, "row_sum");
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double acc = 0.0;
    for (double v : av.row(r)) acc += v;
    out(r, 0) = acc;
  }
  const bool part = Ctx::participates(a);
  auto out_node = Ctx::make_output(tape, std::move(out), part);
  if (part) {
    auto an = Ctx::node_of(a);
    Ctx::record(tape, [an, out_node]() {
      for (std::size_t r = 0; r < an->value.rows(); ++r) {
        const double g = out_node->grad(r, 0);
        for (std::size_t c = 0; c < an->value.cols(); ++c) an->grad(r, c) += g;
      }
    });
  }
  return Ctx::wrap(out_node);
}

Tensor sum(const Tensor& a) {
  Tape* tape = Ctx::common_tape({&a}, "sum");
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  const bool part = Ctx::participates(a);
  auto out_node = Ctx::make_output(tape, Matrix::scalar(acc), part);
  if (part) {
    auto an = Ctx::node_of(a);
    Ctx::record(tape, [an, out_node]() {
      const double g = out_node->grad(0, 0);
      for (double& v : an->grad.values()) v += g;
    });
  }
  return Ctx::wrap(out_node);
}

Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) {
    throw std::invalid_argument("mean: empty tensor");
  }
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

}  // namespace sefoss
