#include "sefoss/energy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "sefoss/errors.hpp"

namespace sefoss {

std::vector<double> free_energy_score(const Matrix& logits, double beta) {
  if (beta <= 0.0) {
    throw std::invalid_argument("free_energy_score: beta must be > 0");
  }
  std::vector<double> scores(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : row) hi = std::max(hi, beta * v);
    double total = 0.0;
    for (double v : row) total += std::exp(beta * v - hi);
    scores[r] = -(hi + std::log(total)) / beta;
  }
  return scores;
}

std::vector<double> softmax_confidence(const Matrix& logits) {
  std::vector<double> conf(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const double hi = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - hi);
    conf[r] = 1.0 / total;  // exp(hi - hi) / sum
  }
  return conf;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

Thresholds calibrate_thresholds(std::span<const double> labeled_scores,
                                const EnergyConfig& cfg) {
  if (labeled_scores.size() < 4) {
    throw ConfigError("calibrate_thresholds: need at least 4 labeled scores");
  }
  std::vector<double> scores(labeled_scores.begin(), labeled_scores.end());
  const double median = quantile(scores, 0.5);
  const double iqr = quantile(scores, 0.75) - quantile(scores, 0.25);
  Thresholds t;
  t.tau_id = median - iqr * cfg.scale_id;
  t.tau_ood = median + iqr * cfg.scale_ood_threshold;
  t.m_ood = median + iqr * cfg.scale_ood_margin;
  return t;
}

double auroc(std::span<const double> id_scores,
             std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw std::invalid_argument("auroc: both score lists must be nonempty");
  }
  struct Entry {
    double score;
    bool ood;
  };
  std::vector<Entry> entries;
  entries.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) entries.push_back({s, false});
  for (double s : ood_scores) entries.push_back({s, true});
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Mann-Whitney U from average ranks; tied groups share their mean rank,
  // which reproduces the ties-count-1/2 pair-counting convention.
  double rank_sum_ood = 0.0;
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].score == entries[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (entries[k].ood) rank_sum_ood += avg_rank;
    }
    i = j;
  }
  const double n_ood = static_cast<double>(ood_scores.size());
  const double n_id = static_cast<double>(id_scores.size());
  const double u = rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0;
  return u / (n_ood * n_id);
}

void write_score_dump(const std::filesystem::path& file,
                      std::span<const ScoreDumpRow> rows) {
  std::ofstream out(file);
  if (!out) throw ArtifactError("cannot write score dump: " + file.string());
  out << "split,is_ood,score_energy,score_confidence\n";
  char buf[128];
  for (const ScoreDumpRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g\n", row.split.c_str(),
                  row.is_ood ? 1 : 0, row.score_energy, row.score_confidence);
    out << buf;
  }
}

}  // namespace sefoss
