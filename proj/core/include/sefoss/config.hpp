#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sefoss/data.hpp"
#include "sefoss/energy.hpp"

namespace sefoss {

enum class TrainMode { sefoss, supervised, fixmatch_baseline };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

// Every hyperparameter of a run. Field defaults are the desk-scale defaults;
// the flat key=value config file and --set overrides map 1:1 onto these via
// the key registry below.
struct RunConfig {
  std::int64_t total_steps = 6000;    // K
  std::int64_t pretrain_steps = 750;  // K_p
  double eta0 = 0.03;
  double gamma = 0.875;  // 7/8
  std::int64_t batch_size = 64;  // B
  std::int64_t mu = 7;           // unlabeled batch = mu * B

  double w_p = 1.0;
  double w_s = 5.0;
  double w_e = 1e-4;
  double w_w = 5e-4;

  double momentum = 0.9;
  double ema_momentum = 0.999;

  EnergyConfig energy;

  TrainMode mode = TrainMode::sefoss;
  bool use_lp = true;
  bool use_le = true;
  double fixmatch_conf_threshold = 0.95;

  std::uint64_t seed = 1;
  std::int64_t eval_every = 250;
  std::int64_t checkpoint_every = 0;  // 0: final checkpoint only

  DataConfig data;
  AugmentConfig augment;

  std::vector<std::size_t> hidden_sizes = {64, 64};
  std::size_t feature_dim = 32;  // d

  // Output directory; the train --out flag takes precedence.
  std::string out_dir;

  // Throws ConfigError on any violated invariant.
  void validate() const;
};

struct ConfigKeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
};

// The single source of truth for config keys: parsing, echoing and the
// generated documentation all run off the same registry.
std::vector<ConfigKeyDoc> config_key_docs();

// Applies one "key=value" assignment. Unknown keys and unparsable values
// throw ConfigError naming the key.
void apply_config_assignment(RunConfig& cfg, const std::string& assignment);

// Flat key=value file with '#' comments and blank lines.
RunConfig load_config_file(const std::filesystem::path& file);

// Fully resolved key=value view (defaults materialized), registry order.
std::vector<std::pair<std::string, std::string>> config_entries(
    const RunConfig& cfg);

// summary.json payload: the resolved config with properly typed values.
std::string config_json(const RunConfig& cfg, int indent);

// CONFIG.md content.
std::string config_markdown();

}  // namespace sefoss
