#pragma once

#include <functional>
#include <span>

#include "sefoss/tensor.hpp"

namespace sefoss {

// Builds the differentiable scalar under test from freshly mounted leaves.
// Called once for the analytic pass and 2*N times for the central
// differences, so it must be deterministic in (tape, leaves).
using ScalarLossFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences against the tape's analytic gradients.
// Relative error uses max(|analytic|, |numeric|, 1e-12) as denominator.
GradCheckReport grad_check(const ScalarLossFn& loss_fn,
                           std::span<const Matrix> params, double eps);

}  // namespace sefoss
