#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sefoss/matrix.hpp"

namespace sefoss {

// Calibrated from labeled-set energy statistics; free-energy units.
// The calibration mapping keeps tau_id <= tau_ood <= m_ood for the default
// scales, leaving an uncertain middle band between the two thresholds.
struct Thresholds {
  double tau_id = 0.0;
  double tau_ood = 0.0;
  double m_ood = 0.0;
};

struct EnergyConfig {
  double beta = 1.0;
  double scale_id = 0.2;             // inlier-threshold scale
  double scale_ood_threshold = 1.3;  // outlier-threshold scale
  double scale_ood_margin = 1.9;     // hinge-margin scale
};

// Free-energy score per row: F = -(1/beta) log sum_j exp(beta * logit_j).
// Higher means more OOD. With beta=1 this is s(sigma) = -log sum exp(sigma).
std::vector<double> free_energy_score(const Matrix& logits, double beta);

// max_j softmax(logits)_j per row. Higher means more confident (more ID);
// negate before ranking to share the OOD-is-higher orientation.
std::vector<double> softmax_confidence(const Matrix& logits);

// Linear-interpolation (type-7) quantile of an unsorted sample.
double quantile(std::vector<double> values, double p);

// tau_id  = median - iqr * scale_id
// tau_ood = median + iqr * scale_ood_threshold
// m_ood   = median + iqr * scale_ood_margin
// Requires at least 4 scores.
Thresholds calibrate_thresholds(std::span<const double> labeled_scores,
                                const EnergyConfig& cfg);

// Probability that a random (OOD, ID) pair is ordered with the OOD score
// higher; ties count 1/2. Rank-based (Mann-Whitney), equivalent to pair
// counting.
double auroc(std::span<const double> id_scores,
             std::span<const double> ood_scores);

// Score-dump CSV row for offline analysis.
struct ScoreDumpRow {
  std::string split;
  bool is_ood = false;
  double score_energy = 0.0;
  double score_confidence = 0.0;
};

void write_score_dump(const std::filesystem::path& file,
                      std::span<const ScoreDumpRow> rows);

}  // namespace sefoss
