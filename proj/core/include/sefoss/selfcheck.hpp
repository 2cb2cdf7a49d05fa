#pragma once

#include <string>
#include <vector>

namespace sefoss {

struct GradCheckCase {
  std::string term;  // l_l, l_s, l_p, l_e, l_w or total
  double max_rel_error = 0.0;
};

// Finite-difference verification of every loss term and the full composite
// on random small instances, seeded away from relu kinks, argmax ties and
// mask boundaries. corrupt_adjoint injects a value/gradient mismatch into
// the composite to prove the checker catches broken adjoints.
std::vector<GradCheckCase> run_loss_gradcheck(int trials, double eps,
                                              bool corrupt_adjoint = false);

}  // namespace sefoss
