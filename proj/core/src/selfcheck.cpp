#include "sefoss/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <limits>

#include "sefoss/energy.hpp"
#include "sefoss/gradcheck.hpp"
#include "sefoss/losses.hpp"
#include "sefoss/network.hpp"
#include "sefoss/rng.hpp"

namespace sefoss {

namespace {

constexpr std::size_t kInputDim = 3;
constexpr std::size_t kHidden = 5;
constexpr std::size_t kFeatureDim = 4;
constexpr std::size_t kClasses = 3;
constexpr std::size_t kLabeled = 2;
constexpr std::size_t kUnlabeled = 4;
// Finite differences perturb parameters by eps, which moves activations and
// scores by O(eps * |x|); instances are accepted only when every kink,
// argmax gap and mask boundary has at least this much slack.
constexpr double kMargin = 5e-3;

struct Instance {
  std::vector<Matrix> params;  // for_each_param enumeration order
  std::size_t backbone_layers = 0;
  Matrix labeled_x;
  Matrix labels;
  Matrix weak_x;
  Matrix strong_x;
  // Weak-branch features at the instance parameters. The self-supervised
  // loss treats them as constant (stop-gradient), so the function under
  // finite differences must hold them fixed too.
  Matrix frozen_weak_features;
  double tau_id = 0.0;
  double tau_ood = 0.0;
  double m_ood = 0.0;
};

ModelTensors bind_model(std::span<const Tensor> leaves,
                        std::size_t backbone_layers) {
  ModelTensors model;
  std::size_t i = 0;
  for (std::size_t l = 0; l < backbone_layers; ++l) {
    Tensor w = leaves[i++], b = leaves[i++];
    model.backbone.emplace_back(w, b);
    model.all.push_back(w);
    model.all.push_back(b);
    model.weights.push_back(w);
  }
  model.head_weight = leaves[i++];
  model.head_bias = leaves[i++];
  model.proj_weight = leaves[i++];
  model.proj_bias = leaves[i++];
  model.all.insert(model.all.end(), {model.head_weight, model.head_bias,
                                     model.proj_weight, model.proj_bias});
  model.weights.insert(model.weights.end(),
                       {model.head_weight, model.proj_weight});
  return model;
}

Matrix random_inputs(std::size_t n, Rng& rng) {
  Matrix x(n, kInputDim);
  for (double& v : x.values()) v = rng.uniform(-1.5, 1.5);
  return x;
}

// Smallest |pre-activation| across the relu layers for the given inputs.
double min_kink_margin(const ModelParams& params, const Matrix& x) {
  double margin = std::numeric_limits<double>::infinity();
  Matrix h = x;
  for (std::size_t i = 0; i + 1 < params.backbone.size(); ++i) {
    Matrix pre(h.rows(), params.backbone[i].weight.cols());
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      for (std::size_t c = 0; c < pre.cols(); ++c) {
        pre(r, c) = params.backbone[i].bias(0, c);
      }
    }
    add_matmul_nn(pre, h, params.backbone[i].weight);
    for (double v : pre.values()) margin = std::min(margin, std::abs(v));
    for (double& v : pre.values()) v = v > 0.0 ? v : 0.0;
    h = pre;
  }
  return margin;
}

double min_argmax_gap(const Matrix& logits) {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    double best = row[0], second = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > best) {
        second = best;
        best = row[j];
      } else {
        second = std::max(second, row[j]);
      }
    }
    gap = std::min(gap, best - second);
  }
  return gap;
}

// Builds an instance whose indicator structure (masks, argmax targets,
// hinge activity, relu signs) is stable under the finite-difference
// perturbations, retrying seeds until the margins hold.
Instance make_instance(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(Rng::mix(seed, attempt));
    ModelParams params = init_params(rng.next_u64(), kInputDim,
                                     std::array<std::size_t, 1>{kHidden},
                                     kFeatureDim, kClasses);
    // Init biases are zero, putting relu inputs of all-noise rows near the
    // kink; jitter every parameter.
    for_each_param(params, [&](const std::string&, Matrix& m) {
      for (double& v : m.values()) v += rng.uniform(-0.3, 0.3);
    });

    Instance inst;
    inst.labeled_x = random_inputs(kLabeled, rng);
    inst.labels = Matrix(kLabeled, kClasses);
    for (std::size_t i = 0; i < kLabeled; ++i) {
      inst.labels(i, rng.uniform_index(kClasses)) = 1.0;
    }
    inst.weak_x = random_inputs(kUnlabeled, rng);
    inst.strong_x = random_inputs(kUnlabeled, rng);

    if (std::min({min_kink_margin(params, inst.labeled_x),
                  min_kink_margin(params, inst.weak_x),
                  min_kink_margin(params, inst.strong_x)}) < kMargin) {
      continue;
    }
    const Matrix weak_logits = eval_logits(params, inst.weak_x);
    if (min_argmax_gap(weak_logits) < kMargin) continue;

    std::vector<double> scores = free_energy_score(weak_logits, 1.0);
    std::sort(scores.begin(), scores.end());
    // Two pseudo-inliers, one pseudo-outlier, both thresholds mid-gap.
    if (scores[2] - scores[1] < 2.0 * kMargin) continue;
    if (scores[3] - scores[2] < 2.0 * kMargin) continue;
    inst.tau_id = 0.5 * (scores[1] + scores[2]);
    inst.tau_ood = 0.5 * (scores[2] + scores[3]);
    inst.m_ood = scores[3] + 1.0;  // hinge strictly active on the outlier
    inst.frozen_weak_features = eval_features(params, inst.weak_x);

    inst.backbone_layers = params.backbone.size();
    for_each_param(params, [&](const std::string&, const Matrix& m) {
      inst.params.push_back(m);
    });
    return inst;
  }
}

enum class Term { l_l, l_s, l_p, l_e, l_w, total };

ScalarLossFn term_loss_fn(const Instance& inst, Term term, bool corrupt) {
  return [&inst, term, corrupt](Tape& tape,
                                std::span<const Tensor> leaves) -> Tensor {
    ModelTensors model = bind_model(leaves, inst.backbone_layers);

    auto supervised = [&]() {
      return supervised_loss(
          forward_logits(model,
                         forward_features(model, make_constant(inst.labeled_x))),
          inst.labels);
    };
    auto unlabeled_branch = [&](Tensor& weak_logits, Tensor& strong_logits,
                                Tensor& weak_feats, Tensor& strong_feats) {
      weak_feats = forward_features(model, make_constant(inst.weak_x));
      strong_feats = forward_features(model, make_constant(inst.strong_x));
      weak_logits = forward_logits(model, weak_feats);
      strong_logits = forward_logits(model, strong_feats);
    };

    Tensor weak_logits, strong_logits, weak_feats, strong_feats;
    switch (term) {
      case Term::l_l:
        return supervised();
      case Term::l_s:
        strong_feats = forward_features(model, make_constant(inst.strong_x));
        return self_supervised_loss(project(model, strong_feats),
                                    make_constant(inst.frozen_weak_features));
      case Term::l_p:
        unlabeled_branch(weak_logits, strong_logits, weak_feats, strong_feats);
        return pseudo_label_loss(weak_logits, strong_logits, inst.tau_id).loss;
      case Term::l_e:
        unlabeled_branch(weak_logits, strong_logits, weak_feats, strong_feats);
        return energy_reg_loss(weak_logits, inst.tau_ood, inst.m_ood).loss;
      case Term::l_w:
        return weight_decay_loss(model.weights);
      case Term::total: {
        unlabeled_branch(weak_logits, strong_logits, weak_feats, strong_feats);
        LossTerms terms;
        terms.supervised = supervised();
        terms.self_sup =
            self_supervised_loss(project(model, strong_feats),
                                 make_constant(inst.frozen_weak_features));
        terms.pseudo =
            pseudo_label_loss(weak_logits, strong_logits, inst.tau_id).loss;
        terms.energy =
            energy_reg_loss(weak_logits, inst.tau_ood, inst.m_ood).loss;
        terms.decay = weight_decay_loss(model.weights);
        // Representative weights; w_e is raised from its 1e-4 default so the
        // hinge contributes visibly to the composite gradient.
        auto [total, breakdown] =
            total_loss(terms, LossWeights{1.0, 5.0, 0.1, 5e-4});
        (void)breakdown;
        if (corrupt) {
          // Value/gradient mismatch hook: the analytic pass sees an extra
          // linear term that the numeric pass does not, simulating a broken
          // adjoint.
          if (leaves[0].requires_grad()) {
            total = add(total, scale(sum(leaves[0]), 0.05));
          }
        }
        return total;
      }
    }
    throw std::logic_error("unreachable");
  };
}

}  // namespace

std::vector<GradCheckCase> run_loss_gradcheck(int trials, double eps,
                                              bool corrupt_adjoint) {
  if (trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  const std::pair<const char*, Term> terms[] = {
      {"l_l", Term::l_l}, {"l_s", Term::l_s},     {"l_p", Term::l_p},
      {"l_e", Term::l_e}, {"l_w", Term::l_w},     {"total", Term::total},
  };
  std::vector<GradCheckCase> cases;
  for (const auto& [name, term] : terms) cases.push_back({name, 0.0});

  for (int trial = 0; trial < trials; ++trial) {
    const Instance inst = make_instance(0x5EF055 + static_cast<std::uint64_t>(trial));
    for (std::size_t t = 0; t < std::size(terms); ++t) {
      const GradCheckReport report =
          grad_check(term_loss_fn(inst, terms[t].second, corrupt_adjoint),
                     inst.params, eps);
      cases[t].max_rel_error =
          std::max(cases[t].max_rel_error, report.max_rel_error);
    }
  }
  return cases;
}

}  // namespace sefoss
