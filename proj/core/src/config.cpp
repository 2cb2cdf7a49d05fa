#include "sefoss/config.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "sefoss/errors.hpp"

namespace sefoss {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::sefoss: return "sefoss";
    case TrainMode::supervised: return "supervised";
    case TrainMode::fixmatch_baseline: return "fixmatch_baseline";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "sefoss") return TrainMode::sefoss;
  if (name == "supervised") return TrainMode::supervised;
  if (name == "fixmatch_baseline") return TrainMode::fixmatch_baseline;
  throw ConfigError("unknown mode: " + name +
                    " (expected sefoss, supervised or fixmatch_baseline)");
}

namespace {

enum class KeyKind { integer, unsigned_integer, real, boolean, text };

struct KeyEntry {
  std::string key;
  KeyKind kind;
  std::string description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Shortest representation that round-trips to the same double.
std::string format_real(double v) {
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse integer '" +
                      value + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key +
                      "': cannot parse unsigned integer '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" +
                      value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': cannot parse bool '" + value +
                    "' (expected true/false/1/0)");
}

std::vector<std::size_t> parse_size_list(const std::string& key,
                                         const std::string& value) {
  std::vector<std::size_t> out;
  if (value.empty()) return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<std::size_t>(parse_uint(key, item)));
  }
  return out;
}

std::string format_size_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

#define INT_KEY(name, field, doc)                                          \
  {name, KeyKind::integer, doc,                                            \
   [](const RunConfig& c) { return std::to_string(c.field); },             \
   [](RunConfig& c, const std::string& v) { c.field = parse_int(name, v); }}

#define SIZE_KEY(name, field, doc)                                   \
  {name, KeyKind::unsigned_integer, doc,                             \
   [](const RunConfig& c) { return std::to_string(c.field); },       \
   [](RunConfig& c, const std::string& v) {                          \
     c.field = static_cast<std::size_t>(parse_uint(name, v));        \
   }}

#define REAL_KEY(name, field, doc)                                   \
  {name, KeyKind::real, doc,                                         \
   [](const RunConfig& c) { return format_real(c.field); },          \
   [](RunConfig& c, const std::string& v) { c.field = parse_real(name, v); }}

#define BOOL_KEY(name, field, doc)                                       \
  {name, KeyKind::boolean, doc,                                          \
   [](const RunConfig& c) { return c.field ? "true" : "false"; },        \
   [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }}

const std::vector<KeyEntry>& registry() {
  static const std::vector<KeyEntry> entries = {
      INT_KEY("K", total_steps, "total number of training steps"),
      INT_KEY("K_p", pretrain_steps, "number of pre-training steps"),
      REAL_KEY("eta0", eta0, "initial learning rate"),
      REAL_KEY("gamma", gamma, "cosine decay-rate parameter, in (0, 1]"),
      INT_KEY("B", batch_size, "labeled batch size"),
      INT_KEY("mu", mu, "unlabeled batch size multiplier (unlabeled = mu*B)"),
      REAL_KEY("w_p", w_p, "pseudo-labeling loss weight (main phase)"),
      REAL_KEY("w_s", w_s, "self-supervised feature loss weight"),
      REAL_KEY("w_e", w_e, "energy regularization weight (main phase)"),
      REAL_KEY("w_w", w_w, "weight-decay loss weight"),
      REAL_KEY("momentum", momentum, "SGD Nesterov momentum"),
      REAL_KEY("ema_momentum", ema_momentum,
               "EMA momentum for the evaluation shadow parameters"),
      REAL_KEY("beta", energy.beta, "free-energy temperature"),
      REAL_KEY("scale_id", energy.scale_id,
               "inlier-threshold scale on the labeled IQR"),
      REAL_KEY("scale_ood_threshold", energy.scale_ood_threshold,
               "outlier-threshold scale on the labeled IQR"),
      REAL_KEY("scale_ood_margin", energy.scale_ood_margin,
               "hinge-margin scale on the labeled IQR"),
      {"mode", KeyKind::text,
       "training objective: sefoss, supervised or fixmatch_baseline",
       [](const RunConfig& c) { return to_string(c.mode); },
       [](RunConfig& c, const std::string& v) {
         c.mode = train_mode_from_string(v);
       }},
      BOOL_KEY("use_lp", use_lp,
               "ablation switch for the pseudo-labeling loss"),
      BOOL_KEY("use_le", use_le,
               "ablation switch for the energy regularization loss"),
      REAL_KEY("fixmatch_conf_threshold", fixmatch_conf_threshold,
               "confidence threshold for the fixmatch_baseline mode"),
      {"seed", KeyKind::unsigned_integer, "master seed for all rng streams",
       [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = parse_uint("seed", v); }},
      INT_KEY("eval_every", eval_every, "evaluation cadence in steps"),
      INT_KEY("checkpoint_every", checkpoint_every,
              "periodic checkpoint cadence in steps (0: final only)"),
      SIZE_KEY("D", data.input_dim, "input dimension"),
      SIZE_KEY("C", data.num_classes, "number of ID classes"),
      SIZE_KEY("n_labeled", data.n_labeled,
               "labeled training examples (balanced, divisible by C)"),
      SIZE_KEY("n_unlabeled", data.n_unlabeled, "unlabeled training examples"),
      REAL_KEY("ood_fraction", data.ood_fraction,
               "fraction of OOD samples in the unlabeled set"),
      {"ood_kind", KeyKind::text,
       "training OOD distribution: extra_clusters or uniform_noise",
       [](const RunConfig& c) { return to_string(c.data.ood_kind); },
       [](RunConfig& c, const std::string& v) {
         c.data.ood_kind = ood_kind_from_string(v);
       }},
      SIZE_KEY("n_ood_clusters", data.n_ood_clusters,
               "number of extra OOD clusters"),
      REAL_KEY("cluster_spread", data.cluster_spread,
               "per-coordinate Gaussian sigma of every cluster"),
      REAL_KEY("cluster_radius", data.cluster_radius,
               "radius of the circle of cluster means"),
      REAL_KEY("class_pair_offset", data.class_pair_offset,
               "half-distance of paired class means along the pair axis "
               "(0: uniform layout)"),
      REAL_KEY("ood_radius_factor", data.ood_radius_factor,
               "OOD cluster radius as a fraction of the ID radius"),
      REAL_KEY("ood_pair_lean", data.ood_pair_lean,
               "OOD lean toward a pair member, as a fraction of "
               "class_pair_offset"),
      SIZE_KEY("n_test_id", data.n_test_id, "ID test examples"),
      SIZE_KEY("n_test_ood", data.n_test_ood, "OOD test examples"),
      REAL_KEY("weak_noise_sigma", augment.weak_noise_sigma,
               "weak augmentation noise sigma"),
      REAL_KEY("strong_noise_sigma", augment.strong_noise_sigma,
               "strong augmentation noise sigma"),
      REAL_KEY("strong_mask_prob", augment.strong_mask_prob,
               "strong augmentation per-coordinate mask probability"),
      REAL_KEY("strong_scale_lo", augment.strong_scale_lo,
               "strong augmentation scale range, lower bound"),
      REAL_KEY("strong_scale_hi", augment.strong_scale_hi,
               "strong augmentation scale range, upper bound"),
      {"hidden_sizes", KeyKind::text,
       "comma-separated backbone hidden layer widths (may be empty)",
       [](const RunConfig& c) { return format_size_list(c.hidden_sizes); },
       [](RunConfig& c, const std::string& v) {
         c.hidden_sizes = parse_size_list("hidden_sizes", v);
       }},
      SIZE_KEY("feature_dim", feature_dim, "feature dimension d"),
      {"out", KeyKind::text,
       "output directory (command-line --out takes precedence)",
       [](const RunConfig& c) { return c.out_dir; },
       [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return entries;
}

#undef INT_KEY
#undef SIZE_KEY
#undef REAL_KEY
#undef BOOL_KEY

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void RunConfig::validate() const {
  if (pretrain_steps < 0 || pretrain_steps > total_steps) {
    throw ConfigError("config: need 0 <= K_p <= K");
  }
  if (eta0 <= 0.0) throw ConfigError("config: eta0 must be > 0");
  if (gamma <= 0.0 || gamma > 1.0) {
    throw ConfigError("config: gamma must be in (0, 1]");
  }
  if (batch_size < 1) throw ConfigError("config: B must be >= 1");
  if (mu < 0) throw ConfigError("config: mu must be >= 0");
  if (w_p < 0 || w_s < 0 || w_e < 0 || w_w < 0) {
    throw ConfigError("config: loss weights must be >= 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("config: momentum must be in [0, 1)");
  }
  if (ema_momentum < 0.0 || ema_momentum > 1.0) {
    throw ConfigError("config: ema_momentum must be in [0, 1]");
  }
  if (energy.beta <= 0.0) throw ConfigError("config: beta must be > 0");
  if (energy.scale_id < 0 || energy.scale_ood_threshold < 0 ||
      energy.scale_ood_margin < 0) {
    throw ConfigError("config: threshold scales must be >= 0");
  }
  if (fixmatch_conf_threshold <= 0.0 || fixmatch_conf_threshold > 1.0) {
    throw ConfigError("config: fixmatch_conf_threshold must be in (0, 1]");
  }
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (checkpoint_every < 0) {
    throw ConfigError("config: checkpoint_every must be >= 0");
  }
  if (feature_dim < 1) throw ConfigError("config: feature_dim must be >= 1");
  if (augment.weak_noise_sigma < 0 || augment.strong_noise_sigma < 0) {
    throw ConfigError("config: noise sigmas must be >= 0");
  }
  if (augment.strong_mask_prob < 0 || augment.strong_mask_prob > 1) {
    throw ConfigError("config: strong_mask_prob must be in [0, 1]");
  }
  if (augment.strong_scale_lo <= 0 ||
      augment.strong_scale_lo > augment.strong_scale_hi) {
    throw ConfigError("config: need 0 < strong_scale_lo <= strong_scale_hi");
  }
}

std::vector<ConfigKeyDoc> config_key_docs() {
  const RunConfig defaults;
  std::vector<ConfigKeyDoc> docs;
  for (const KeyEntry& entry : registry()) {
    docs.push_back({entry.key, entry.get(defaults), entry.description});
  }
  return docs;
}

void apply_config_assignment(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  for (const KeyEntry& entry : registry()) {
    if (entry.key == key) {
      entry.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key: " + key);
}

RunConfig load_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file: " + file.string());
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_config_assignment(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return cfg;
}

std::vector<std::pair<std::string, std::string>> config_entries(
    const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeyEntry& entry : registry()) {
    out.emplace_back(entry.key, entry.get(cfg));
  }
  return out;
}

std::string config_json(const RunConfig& cfg, int indent) {
  nlohmann::ordered_json j;
  for (const KeyEntry& entry : registry()) {
    const std::string value = entry.get(cfg);
    switch (entry.kind) {
      case KeyKind::integer:
        j[entry.key] = std::stoll(value);
        break;
      case KeyKind::unsigned_integer:
        j[entry.key] = std::stoull(value);
        break;
      case KeyKind::real:
        j[entry.key] = std::stod(value);
        break;
      case KeyKind::boolean:
        j[entry.key] = (value == "true");
        break;
      case KeyKind::text:
        j[entry.key] = value;
        break;
    }
  }
  return j.dump(indent);
}

std::string config_markdown() {
  std::string out;
  out += "# Configuration keys\n\n";
  out += "Flat `key=value` format, one assignment per line; `#` starts a\n";
  out += "comment. Every key is optional and defaults to the value below.\n";
  out += "Unknown keys are rejected. The same keys work with `--set`.\n\n";
  out += "| Key | Default | Description |\n";
  out += "|-----|---------|-------------|\n";
  for (const ConfigKeyDoc& doc : config_key_docs()) {
    out += "| `" + doc.key + "` | `" + doc.default_value + "` | " +
           doc.description + " |\n";
  }
  return out;
}

}  // namespace sefoss
