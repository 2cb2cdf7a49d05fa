#include "sefoss/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sefoss/errors.hpp"

namespace sefoss {

std::string to_string(OodKind kind) {
  return kind == OodKind::extra_clusters ? "extra_clusters" : "uniform_noise";
}

OodKind ood_kind_from_string(const std::string& name) {
  if (name == "extra_clusters") return OodKind::extra_clusters;
  if (name == "uniform_noise") return OodKind::uniform_noise;
  throw ConfigError("unknown ood_kind: " + name);
}

namespace {

std::vector<double> cluster_mean(const DataConfig& cfg, double angle,
                                 double radius) {
  std::vector<double> mean(cfg.input_dim, 0.0);
  mean[0] = radius * std::cos(angle);
  mean[1] = radius * std::sin(angle);
  return mean;
}

bool paired_layout(const DataConfig& cfg) {
  return cfg.num_classes % 2 == 0 && cfg.num_classes >= 2 &&
         cfg.input_dim >= 3 && cfg.class_pair_offset > 0.0;
}

std::vector<double> id_class_mean(const DataConfig& cfg, std::size_t cls) {
  if (paired_layout(cfg)) {
    const std::size_t pair = cls / 2;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(pair) /
                         (static_cast<double>(cfg.num_classes) / 2.0);
    auto mean = cluster_mean(cfg, angle, cfg.cluster_radius);
    mean[2] = cls % 2 == 0 ? -cfg.class_pair_offset : cfg.class_pair_offset;
    return mean;
  }
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(cls) /
                       static_cast<double>(cfg.num_classes);
  return cluster_mean(cfg, angle, cfg.cluster_radius);
}

// OOD cluster means sit between ID clusters, pulled inward by
// ood_radius_factor. Under the paired layout each OOD cluster leans a
// quarter-gap toward one group and ood_pair_lean of the way toward one of
// its members: coherent enough for confidence-based pseudo-labeling to
// mislabel the whole cluster, yet interior enough in magnitude to stay
// separable by the free-energy score.
std::vector<double> ood_cluster_mean(const DataConfig& cfg, std::size_t idx) {
  if (paired_layout(cfg)) {
    const double groups = static_cast<double>(cfg.num_classes) / 2.0;
    const double angle =
        2.0 * std::numbers::pi * (static_cast<double>(idx) + 0.25) / groups;
    auto mean =
        cluster_mean(cfg, angle, cfg.cluster_radius * cfg.ood_radius_factor);
    // Graded leans: cluster 0 carries the full lean, later clusters less,
    // mirroring a heterogeneous OOD mixture of near-ID and far classes.
    const double grade =
        static_cast<double>(cfg.n_ood_clusters - idx % cfg.n_ood_clusters) /
        static_cast<double>(cfg.n_ood_clusters);
    const double lean = cfg.ood_pair_lean * cfg.class_pair_offset * grade;
    mean[2] = idx % 2 == 0 ? lean : -lean;
    return mean;
  }
  const double angle = 2.0 * std::numbers::pi *
                       (static_cast<double>(idx) + 0.5) /
                       static_cast<double>(cfg.num_classes);
  return cluster_mean(cfg, angle, cfg.cluster_radius * cfg.ood_radius_factor);
}

std::vector<double> gaussian_point(std::span<const double> mean, double sigma,
                                   Rng& rng) {
  std::vector<double> x(mean.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal(mean[i], sigma);
  return x;
}

void validate(const DataConfig& cfg) {
  if (cfg.input_dim < 2) throw ConfigError("data: D must be >= 2");
  if (cfg.num_classes < 1) throw ConfigError("data: C must be >= 1");
  if (cfg.n_labeled % cfg.num_classes != 0) {
    throw ConfigError("data: n_labeled must be divisible by C");
  }
  if (cfg.ood_fraction < 0.0 || cfg.ood_fraction > 1.0) {
    throw ConfigError("data: ood_fraction must be in [0, 1]");
  }
  if (cfg.cluster_spread <= 0.0) {
    throw ConfigError("data: cluster_spread must be > 0");
  }
  if (cfg.ood_radius_factor < 0.0) {
    throw ConfigError("data: ood_radius_factor must be >= 0");
  }
  if (cfg.ood_kind == OodKind::extra_clusters && cfg.n_ood_clusters == 0) {
    throw ConfigError("data: extra_clusters needs n_ood_clusters >= 1");
  }
}

}  // namespace

std::vector<std::vector<double>> generate_ood_points(const DataConfig& cfg,
                                                     OodKind kind,
                                                     std::size_t n, Rng& rng) {
  std::vector<std::vector<double>> points;
  points.reserve(n);
  if (kind == OodKind::extra_clusters) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cluster = rng.uniform_index(cfg.n_ood_clusters);
      points.push_back(gaussian_point(ood_cluster_mean(cfg, cluster),
                                      cfg.cluster_spread, rng));
    }
  } else {
    const double l = cfg.cluster_radius + 3.0 * cfg.cluster_spread;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(cfg.input_dim);
      for (double& v : x) v = rng.uniform(-l, l);
      points.push_back(std::move(x));
    }
  }
  return points;
}

OpenSetDataset generate_gaussian_openset(const DataConfig& cfg) {
  validate(cfg);
  Rng rng(Rng::mix(cfg.seed, stream::kData));

  OpenSetDataset ds;
  ds.input_dim = cfg.input_dim;
  ds.num_classes = cfg.num_classes;

  const std::size_t per_class = cfg.n_labeled / cfg.num_classes;
  for (std::size_t cls = 0; cls < cfg.num_classes; ++cls) {
    const auto mean = id_class_mean(cfg, cls);
    for (std::size_t i = 0; i < per_class; ++i) {
      ds.labeled.push_back({gaussian_point(mean, cfg.cluster_spread, rng),
                            static_cast<int>(cls)});
    }
  }

  const std::size_t n_ood = static_cast<std::size_t>(
      std::llround(cfg.ood_fraction * static_cast<double>(cfg.n_unlabeled)));
  const std::size_t n_id = cfg.n_unlabeled - n_ood;
  for (std::size_t i = 0; i < n_id; ++i) {
    const std::size_t cls = rng.uniform_index(cfg.num_classes);
    ds.unlabeled.push_back(
        {gaussian_point(id_class_mean(cfg, cls), cfg.cluster_spread, rng),
         false, static_cast<int>(cls)});
  }
  for (const auto& x : generate_ood_points(cfg, cfg.ood_kind, n_ood, rng)) {
    ds.unlabeled.push_back({x, true, -1});
  }
  // Fisher-Yates so OOD rows are not trailing in exports.
  for (std::size_t i = ds.unlabeled.size(); i > 1; --i) {
    std::swap(ds.unlabeled[i - 1], ds.unlabeled[rng.uniform_index(i)]);
  }

  for (std::size_t i = 0; i < cfg.n_test_id; ++i) {
    const std::size_t cls = i % cfg.num_classes;
    ds.test_id.push_back(
        {gaussian_point(id_class_mean(cfg, cls), cfg.cluster_spread, rng),
         static_cast<int>(cls)});
  }
  ds.test_ood = generate_ood_points(cfg, cfg.ood_kind, cfg.n_test_ood, rng);
  return ds;
}

std::vector<double> weak_augment(std::span<const double> x,
                                 const AugmentConfig& cfg, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v += rng.normal(0.0, cfg.weak_noise_sigma);
  return out;
}

std::vector<double> strong_augment(std::span<const double> x,
                                   const AugmentConfig& cfg, Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v += rng.normal(0.0, cfg.strong_noise_sigma);
  for (double& v : out) {
    if (rng.bernoulli(cfg.strong_mask_prob)) v = 0.0;
  }
  const double s = rng.uniform(cfg.strong_scale_lo, cfg.strong_scale_hi);
  for (double& v : out) v *= s;
  return out;
}

OpenSetBatch sample_batch(const OpenSetDataset& dataset, std::size_t b,
                          std::size_t mu, const AugmentConfig& aug, Rng& rng) {
  if (dataset.labeled.empty()) {
    throw std::invalid_argument("sample_batch: empty labeled pool");
  }
  if (mu > 0 && dataset.unlabeled.empty()) {
    throw std::invalid_argument("sample_batch: empty unlabeled pool");
  }
  const std::size_t d = dataset.input_dim;
  const std::size_t n_unlabeled = mu * b;

  OpenSetBatch batch;
  batch.labeled_weak = Matrix(b, d);
  batch.labels_onehot = Matrix(b, dataset.num_classes);
  for (std::size_t i = 0; i < b; ++i) {
    const LabeledExample& ex =
        dataset.labeled[rng.uniform_index(dataset.labeled.size())];
    const auto view = weak_augment(ex.x, aug, rng);
    std::copy(view.begin(), view.end(), batch.labeled_weak.row(i).begin());
    batch.labels_onehot(i, static_cast<std::size_t>(ex.label)) = 1.0;
  }

  batch.unlabeled_weak = Matrix(n_unlabeled, d);
  batch.unlabeled_strong = Matrix(n_unlabeled, d);
  for (std::size_t i = 0; i < n_unlabeled; ++i) {
    const UnlabeledExample& ex =
        dataset.unlabeled[rng.uniform_index(dataset.unlabeled.size())];
    const auto weak = weak_augment(ex.x, aug, rng);
    std::copy(weak.begin(), weak.end(), batch.unlabeled_weak.row(i).begin());
    // Re-draw a fully masked strong view: an all-zero input would produce a
    // zero-norm feature row at bias-zero initialization, which the cosine
    // loss rejects. Bounded so a mask_prob=1 config still terminates.
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto strong = strong_augment(ex.x, aug, rng);
      const bool all_zero =
          std::all_of(strong.begin(), strong.end(),
                      [](double v) { return v == 0.0; });
      if (!all_zero || attempt == 99 || aug.strong_mask_prob >= 1.0) {
        std::copy(strong.begin(), strong.end(),
                  batch.unlabeled_strong.row(i).begin());
        break;
      }
    }
  }
  return batch;
}

namespace {

void write_example_row(std::ofstream& out, const std::string& split,
                       std::span<const double> x, int label,
                       const std::string& is_ood) {
  out << split;
  char buf[64];
  for (double v : x) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    out << buf;
  }
  out << ',' << label << ',' << is_ood << '\n';
}

}  // namespace

void export_dataset_csv(const OpenSetDataset& dataset,
                        const std::filesystem::path& file, bool write_hidden) {
  std::ofstream out(file);
  if (!out) throw ArtifactError("cannot write dataset: " + file.string());
  out << "split";
  for (std::size_t i = 0; i < dataset.input_dim; ++i) out << ",x_" << i;
  out << ",label,is_ood\n";
  for (const auto& ex : dataset.labeled) {
    write_example_row(out, "labeled", ex.x, ex.label, "0");
  }
  for (const auto& ex : dataset.unlabeled) {
    write_example_row(out, "unlabeled", ex.x, -1, "");
  }
  for (const auto& ex : dataset.test_id) {
    write_example_row(out, "test_id", ex.x, ex.label, "0");
  }
  for (const auto& x : dataset.test_ood) {
    write_example_row(out, "test_ood", x, -1, "1");
  }
  for (const auto& x : dataset.unseen_ood) {
    write_example_row(out, "unseen_ood", x, -1, "1");
  }

  if (write_hidden) {
    std::filesystem::path hidden = file;
    hidden += ".hidden.csv";
    std::ofstream hout(hidden);
    if (!hout) throw ArtifactError("cannot write " + hidden.string());
    hout << "unlabeled_index,is_ood,hidden_class\n";
    for (std::size_t i = 0; i < dataset.unlabeled.size(); ++i) {
      const auto& ex = dataset.unlabeled[i];
      hout << i << ',' << (ex.hidden_is_ood ? 1 : 0) << ',' << ex.hidden_class
           << '\n';
    }
  }
}

OpenSetDataset import_dataset_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ArtifactError("cannot read dataset: " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw ArtifactError("empty dataset file");

  std::size_t n_cols = std::count(line.begin(), line.end(), ',') + 1;
  if (n_cols < 4) throw ArtifactError("dataset header too short");
  const std::size_t d = n_cols - 3;

  OpenSetDataset ds;
  ds.input_dim = d;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    const std::string split = field;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::getline(ss, field, ',')) {
        throw ArtifactError("dataset row " + std::to_string(line_no) +
                            ": too few fields");
      }
      x[i] = std::stod(field);
    }
    if (!std::getline(ss, field, ',')) {
      throw ArtifactError("dataset row " + std::to_string(line_no) +
                          ": missing label");
    }
    const int label = std::stoi(field);
    max_label = std::max(max_label, label);

    if (split == "labeled") {
      ds.labeled.push_back({std::move(x), label});
    } else if (split == "unlabeled") {
      ds.unlabeled.push_back({std::move(x), false, -1});
    } else if (split == "test_id") {
      ds.test_id.push_back({std::move(x), label});
    } else if (split == "test_ood") {
      ds.test_ood.push_back(std::move(x));
    } else if (split == "unseen_ood") {
      ds.unseen_ood.push_back(std::move(x));
    } else {
      throw ArtifactError("dataset row " + std::to_string(line_no) +
                          ": unknown split '" + split + "'");
    }
  }
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  if (ds.labeled.empty() || ds.num_classes == 0) {
    throw ArtifactError("dataset has no labeled examples");
  }
  return ds;
}

}  // namespace sefoss
