#include "sefoss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sefoss/energy.hpp"

namespace sefoss {

namespace {

// Cross entropy rows H(target_i, softmax(logits_i)) for one-hot targets:
// H = logsumexp(logits) - logits[target].
Tensor cross_entropy_rows(const Tensor& logits, const Matrix& targets) {
  return sub(row_log_sum_exp(logits),
             row_sum(mul(logits, make_constant(targets))));
}

// argmax with ties broken by the lowest class index.
std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

MaskedLoss masked_hard_target_loss(const Tensor& weak_logits,
                                   const Tensor& strong_logits,
                                   const std::vector<bool>& mask) {
  const Matrix& weak = weak_logits.value();
  const std::size_t n = weak.rows();
  MaskedLoss result;
  result.selected = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  if (result.selected == 0) {
    result.loss = make_scalar(0.0);
    return result;
  }
  Matrix targets(n, weak.cols());
  Matrix mask_col(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    targets(i, argmax_row(weak.row(i))) = 1.0;
    mask_col(i, 0) = 1.0;
  }
  Tensor ce = cross_entropy_rows(strong_logits, targets);
  Tensor masked = mul(ce, make_constant(std::move(mask_col)));
  result.loss = scale(sum(masked), 1.0 / static_cast<double>(n));
  return result;
}

}  // namespace

Tensor supervised_loss(const Tensor& logits, const Matrix& onehot_labels) {
  if (logits.rows() != onehot_labels.rows() ||
      logits.cols() != onehot_labels.cols()) {
    throw std::invalid_argument("supervised_loss: label shape mismatch");
  }
  if (logits.rows() == 0) {
    throw std::invalid_argument("supervised_loss: empty batch");
  }
  for (std::size_t r = 0; r < onehot_labels.rows(); ++r) {
    int ones = 0;
    for (double v : onehot_labels.row(r)) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) {
      throw std::invalid_argument("supervised_loss: labels must be one-hot");
    }
  }
  return mean(cross_entropy_rows(logits, onehot_labels));
}

Tensor self_supervised_loss(const Tensor& projected_strong,
                            const Tensor& weak_features_detached) {
  if (weak_features_detached.requires_grad()) {
    throw std::invalid_argument(
        "self_supervised_loss: weak features must be detached");
  }
  return scale(mean(row_cosine(projected_strong, weak_features_detached)),
               -1.0);
}

MaskedLoss pseudo_label_loss(const Tensor& weak_logits,
                             const Tensor& strong_logits, double tau_id) {
  const std::vector<double> scores = free_energy_score(weak_logits.value(), 1.0);
  std::vector<bool> mask(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) mask[i] = scores[i] < tau_id;
  return masked_hard_target_loss(weak_logits, strong_logits, mask);
}

MaskedLoss confidence_pseudo_label_loss(const Tensor& weak_logits,
                                        const Tensor& strong_logits,
                                        double confidence_threshold) {
  const std::vector<double> conf = softmax_confidence(weak_logits.value());
  std::vector<bool> mask(conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) {
    mask[i] = conf[i] >= confidence_threshold;
  }
  return masked_hard_target_loss(weak_logits, strong_logits, mask);
}

MaskedLoss energy_reg_loss(const Tensor& weak_logits, double tau_ood,
                           double m_ood) {
  const std::size_t n = weak_logits.rows();
  const std::vector<double> score_values =
      free_energy_score(weak_logits.value(), 1.0);

  MaskedLoss result;
  Matrix mask_col(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (score_values[i] > tau_ood) {
      mask_col(i, 0) = 1.0;
      ++result.selected;
    }
  }
  if (result.selected == 0) {
    result.loss = make_scalar(0.0);
    return result;
  }

  // s(w) = -logsumexp(w), kept differentiable: the hinge trains the weak
  // branch directly.
  Tensor scores = scale(row_log_sum_exp(weak_logits), -1.0);
  Tensor deficit = sub(make_constant(Matrix::filled(n, 1, m_ood)), scores);
  Tensor hinge_sq = square(max_with_constant(deficit, 0.0));
  Tensor selected_sum = sum(mul(hinge_sq, make_constant(std::move(mask_col))));
  result.loss = scale(selected_sum, 1.0 / static_cast<double>(result.selected));
  return result;
}

Tensor weight_decay_loss(std::span<const Tensor> weight_matrices) {
  if (weight_matrices.empty()) return make_scalar(0.0);
  Tensor acc = sum(square(weight_matrices[0]));
  for (std::size_t i = 1; i < weight_matrices.size(); ++i) {
    acc = add(acc, sum(square(weight_matrices[i])));
  }
  return scale(acc, 0.5);
}

std::pair<Tensor, LossBreakdown> total_loss(const LossTerms& terms,
                                            const LossWeights& weights) {
  if (weights.pseudo < 0.0 || weights.self_sup < 0.0 || weights.energy < 0.0 ||
      weights.decay < 0.0) {
    throw std::invalid_argument("total_loss: weights must be >= 0");
  }
  Tensor total = terms.supervised;
  total = add(total, scale(terms.pseudo, weights.pseudo));
  total = add(total, scale(terms.self_sup, weights.self_sup));
  total = add(total, scale(terms.energy, weights.energy));
  total = add(total, scale(terms.decay, weights.decay));

  LossBreakdown breakdown;
  breakdown.l_l = terms.supervised.scalar_value();
  breakdown.l_p = terms.pseudo.scalar_value();
  breakdown.l_s = terms.self_sup.scalar_value();
  breakdown.l_e = terms.energy.scalar_value();
  breakdown.l_w = terms.decay.scalar_value();
  breakdown.total = total.scalar_value();
  breakdown.inlier_count = terms.inlier_count;
  breakdown.outlier_count = terms.outlier_count;
  return {total, breakdown};
}

}  // namespace sefoss
