#pragma once

#include <span>

#include "sefoss/tensor.hpp"

namespace sefoss {

// Mean cross entropy between one-hot labels and softmax(logits) over the
// labeled batch. Differentiable w.r.t. the logits.
Tensor supervised_loss(const Tensor& logits, const Matrix& onehot_labels);

// -(1/n) sum_i cos(projected_strong_i, weak_features_i). The weak-branch
// features must already be detached (stop-gradient); passing a tensor that
// still participates in the gradient graph is a contract error.
Tensor self_supervised_loss(const Tensor& projected_strong,
                            const Tensor& weak_features_detached);

struct MaskedLoss {
  Tensor loss;
  int selected = 0;
};

// Pseudo-labeling on pseudo-inliers: samples whose free-energy score on the
// weak logits falls below tau_id get their weak argmax as a hard target for
// the strong logits. Normalized by the full unlabeled batch size, not the
// mask count. The weak logits enter only through their values (mask and
// targets), so no gradient flows into the weak branch.
MaskedLoss pseudo_label_loss(const Tensor& weak_logits,
                             const Tensor& strong_logits, double tau_id);

// FixMatch-style selection: mask by max softmax confidence >= threshold
// instead of the energy threshold. Same target and normalization semantics.
MaskedLoss confidence_pseudo_label_loss(const Tensor& weak_logits,
                                        const Tensor& strong_logits,
                                        double confidence_threshold);

// Squared hinge pushing pseudo-outlier energy scores up to the margin:
// mean over {i : s(w_i) > tau_ood} of max(0, m_ood - s(w_i))^2, zero when
// nothing is selected. Gradients flow into the weak logits; this is the one
// loss that trains through the weak branch.
MaskedLoss energy_reg_loss(const Tensor& weak_logits, double tau_ood,
                           double m_ood);

// 0.5 * sum of squared entries over the given weight matrices (biases are
// excluded by the caller).
Tensor weight_decay_loss(std::span<const Tensor> weight_matrices);

struct LossWeights {
  double pseudo = 1.0;     // w_p
  double self_sup = 5.0;   // w_s
  double energy = 1e-4;    // w_e
  double decay = 5e-4;     // w_w
};

struct LossTerms {
  Tensor supervised;   // l_l
  Tensor pseudo;       // l_p
  Tensor self_sup;     // l_s
  Tensor energy;       // l_e
  Tensor decay;        // l_w
  int inlier_count = 0;
  int outlier_count = 0;
};

struct LossBreakdown {
  double l_l = 0.0, l_p = 0.0, l_s = 0.0, l_e = 0.0, l_w = 0.0;
  double total = 0.0;
  int inlier_count = 0;
  int outlier_count = 0;
};

// total = l_l + w_p*l_p + w_s*l_s + w_e*l_e + w_w*l_w
std::pair<Tensor, LossBreakdown> total_loss(const LossTerms& terms,
                                            const LossWeights& weights);

}  // namespace sefoss
