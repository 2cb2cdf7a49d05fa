#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sefoss/matrix.hpp"
#include "sefoss/rng.hpp"

namespace sefoss {

enum class OodKind { extra_clusters, uniform_noise };

std::string to_string(OodKind kind);
OodKind ood_kind_from_string(const std::string& name);

struct DataConfig {
  std::uint64_t seed = 1;
  std::size_t input_dim = 8;      // D
  std::size_t num_classes = 4;    // C (ID Gaussian clusters)
  std::size_t n_labeled = 40;     // balanced, divisible by C
  std::size_t n_unlabeled = 4000;
  double ood_fraction = 0.5;
  OodKind ood_kind = OodKind::extra_clusters;
  std::size_t n_ood_clusters = 2;
  double cluster_spread = 0.6;  // per-coordinate Gaussian sigma
  double cluster_radius = 4.0;  // circle on which class means sit
  // With an even C, D >= 3 and a positive offset, classes sit in close
  // pairs: each pair shares one circle position (dims 0-1) and its two
  // members straddle it at +- offset along dimension 2, which is otherwise
  // pure noise. These tight pair boundaries are what labeled data alone
  // places poorly, while the OOD clusters in the angular gaps sit at the
  // pair midline and stay energetically neutral. Zero (or odd C, or D < 3)
  // falls back to uniformly spaced means on the circle.
  double class_pair_offset = 1.5;
  // OOD cluster means sit at angles interleaved between the ID groups, at
  // ood_radius_factor times the ID radius (interior of the class circle).
  double ood_radius_factor = 0.3;
  // Under the paired layout, OOD clusters lean toward one pair member by
  // up to this fraction of class_pair_offset along the pair axis (graded
  // per cluster). Larger values make clusters coherently confusable with a
  // member's class, the way a heterogeneous OOD set mixes near-ID and far
  // classes.
  double ood_pair_lean = 1.0;
  std::size_t n_test_id = 1000;
  std::size_t n_test_ood = 1000;
};

struct LabeledExample {
  std::vector<double> x;
  int label = 0;
};

// hidden_* fields are evaluation bookkeeping only; no training code path
// reads them (sample_batch strips them by construction).
struct UnlabeledExample {
  std::vector<double> x;
  bool hidden_is_ood = false;
  int hidden_class = -1;
};

struct OpenSetDataset {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<LabeledExample> labeled;
  std::vector<UnlabeledExample> unlabeled;
  std::vector<LabeledExample> test_id;
  std::vector<std::vector<double>> test_ood;
  std::vector<std::vector<double>> unseen_ood;  // optional split
};

// ID classes are isotropic Gaussians at means on a circle of radius
// cluster_radius in the first two coordinates. extra_clusters OOD sits at
// angles interleaved between the ID means; uniform_noise OOD fills the box
// [-L, L]^D with L = cluster_radius + 3 * cluster_spread. Deterministic in
// the config (including the seed).
OpenSetDataset generate_gaussian_openset(const DataConfig& cfg);

// n OOD points of the requested kind, drawn from the given stream. Used for
// the test split and for evaluation against previously unseen OOD.
std::vector<std::vector<double>> generate_ood_points(const DataConfig& cfg,
                                                     OodKind kind,
                                                     std::size_t n, Rng& rng);

struct AugmentConfig {
  double weak_noise_sigma = 0.05;
  double strong_noise_sigma = 0.15;
  double strong_mask_prob = 0.2;
  double strong_scale_lo = 0.8;
  double strong_scale_hi = 1.2;
};

// Weak view: additive per-coordinate Gaussian noise.
std::vector<double> weak_augment(std::span<const double> x,
                                 const AugmentConfig& cfg, Rng& rng);

// Strong view: noise at strong_noise_sigma, then each coordinate zeroed with
// probability strong_mask_prob, then a global scale drawn uniformly from
// [strong_scale_lo, strong_scale_hi].
std::vector<double> strong_augment(std::span<const double> x,
                                   const AugmentConfig& cfg, Rng& rng);

// One training step's views. Deliberately carries no OOD ground truth.
struct OpenSetBatch {
  Matrix labeled_weak;     // B x D
  Matrix labels_onehot;    // B x C
  Matrix unlabeled_weak;   // mu*B x D
  Matrix unlabeled_strong; // mu*B x D
};

// Samples with replacement: B labeled examples (weak views) and mu*B
// unlabeled examples (one weak and one strong view each). mu may be 0.
OpenSetBatch sample_batch(const OpenSetDataset& dataset, std::size_t b,
                          std::size_t mu, const AugmentConfig& aug, Rng& rng);

// CSV export with columns split,x_0..x_{D-1},label,is_ood. Unlabeled rows
// carry label -1 and an empty is_ood field; their ground truth goes to the
// side-car "<file>.hidden.csv" bookkeeping file instead (only when
// write_hidden is set).
void export_dataset_csv(const OpenSetDataset& dataset,
                        const std::filesystem::path& file, bool write_hidden);
OpenSetDataset import_dataset_csv(const std::filesystem::path& file);

}  // namespace sefoss
