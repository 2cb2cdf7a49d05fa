#include "sefoss/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sefoss {

namespace {

double evaluate(const ScalarLossFn& loss_fn, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.leaf(p, false));
  return loss_fn(tape, leaves).scalar_value();
}

}  // namespace

GradCheckReport grad_check(const ScalarLossFn& loss_fn,
                           std::span<const Matrix> params, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be > 0");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(params.size());
    for (const Matrix& p : params) leaves.push_back(tape.leaf(p, true));
    Tensor root = loss_fn(tape, leaves);
    tape.backward(root);
    for (const Tensor& leaf : leaves) analytic.push_back(leaf.grad());
  }

  std::vector<Matrix> work(params.begin(), params.end());
  GradCheckReport report;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double saved = work[p].values()[i];
      work[p].values()[i] = saved + eps;
      const double f_plus = evaluate(loss_fn, work);
      work[p].values()[i] = saved - eps;
      const double f_minus = evaluate(loss_fn, work);
      work[p].values()[i] = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[p].values()[i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-12});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_entry = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace sefoss
