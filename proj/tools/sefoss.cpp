// Command-line front end: experiment execution, OOD-fraction sweeps, offline
// checkpoint evaluation and the gradient-check self-test.
//
// Exit codes: 0 success, 1 check failure, 2 config error, 3 artifact error.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sefoss/config.hpp"
#include "sefoss/errors.hpp"
#include "sefoss/selfcheck.hpp"
#include "sefoss/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitArtifactError = 3;

sefoss::RunConfig resolve_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides,
                                 const std::string& seed_flag,
                                 const std::string& mode_flag) {
  sefoss::RunConfig cfg;
  if (!config_path.empty()) cfg = sefoss::load_config_file(config_path);
  for (const std::string& assignment : overrides) {
    sefoss::apply_config_assignment(cfg, assignment);
  }
  if (!seed_flag.empty()) {
    sefoss::apply_config_assignment(cfg, "seed=" + seed_flag);
  }
  if (!mode_flag.empty()) {
    sefoss::apply_config_assignment(cfg, "mode=" + mode_flag);
  }
  cfg.validate();
  return cfg;
}

std::vector<double> parse_fraction_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

std::vector<sefoss::TrainMode> parse_mode_list(const std::string& text) {
  std::vector<sefoss::TrainMode> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(sefoss::train_mode_from_string(item));
  }
  return out;
}

int sweep_threads_from_env() {
  const char* env = std::getenv("SEFOSS_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const int threads = std::atoi(env);
  return threads >= 1 ? threads : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SeFOSS: open-set semi-supervised learning on synthetic data"};
  app.require_subcommand(1);

  // train
  std::string train_config, train_out, train_seed, train_mode, train_resume;
  std::vector<std::string> train_sets;
  CLI::App* train = app.add_subcommand("train", "run one training experiment");
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--out", train_out,
                    "output directory (overrides the config's out key)");
  train->add_option("--seed", train_seed, "override the seed");
  train->add_option("--mode", train_mode,
                    "override the mode (sefoss, supervised, fixmatch_baseline)");
  train->add_option("--set", train_sets,
                    "key=value overrides, applied after the config file");
  train->add_option("--resume", train_resume,
                    "checkpoint to resume from (same config required)");

  // sweep
  std::string sweep_config, sweep_out, sweep_seed;
  std::string sweep_fractions = "0,0.25,0.5,0.75,1";
  std::string sweep_modes = "sefoss,fixmatch_baseline";
  std::vector<std::string> sweep_sets;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "one run per (OOD fraction, mode); aggregates sweep.csv");
  sweep->add_option("--config", sweep_config, "key=value config file");
  sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep->add_option("--fractions", sweep_fractions,
                    "comma-separated OOD fractions in [0,1]");
  sweep->add_option("--modes", sweep_modes, "comma-separated modes");
  sweep->add_option("--seed", sweep_seed, "override the seed");
  sweep->add_option("--set", sweep_sets, "key=value overrides");

  // eval
  std::string eval_checkpoint, eval_data, eval_gen, eval_unseen, eval_out;
  CLI::App* eval = app.add_subcommand(
      "eval", "evaluate a checkpoint's EMA parameters offline");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
      ->required();
  eval->add_option("--data", eval_data, "dataset CSV to evaluate on");
  eval->add_option("--gen", eval_gen,
                   "config file; regenerate the dataset it describes");
  eval->add_option("--unseen-ood", eval_unseen,
                   "also score a fresh OOD kind never seen in training "
                   "(extra_clusters or uniform_noise; requires --gen)");
  eval->add_option("--out", eval_out, "output directory")->required();

  // gradcheck
  int gc_trials = 100;
  double gc_eps = 1e-5;
  bool gc_corrupt = false;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference self-test of every loss gradient");
  gradcheck->add_option("--trials", gc_trials, "random instances per term");
  gradcheck->add_option("--eps", gc_eps, "finite-difference step");
  gradcheck->add_flag("--corrupt", gc_corrupt,
                      "inject a broken adjoint (must make the check fail)");

  // export-data
  std::string export_config, export_file;
  std::vector<std::string> export_sets;
  bool export_hidden = false;
  CLI::App* export_data = app.add_subcommand(
      "export-data", "generate the configured dataset and write it as CSV");
  export_data->add_option("--config", export_config, "key=value config file");
  export_data->add_option("--file", export_file, "output CSV path")->required();
  export_data->add_option("--set", export_sets, "key=value overrides");
  export_data->add_flag("--hidden", export_hidden,
                        "also write the <file>.hidden.csv bookkeeping side-car");

  CLI::App* config_doc = app.add_subcommand(
      "config-doc", "print CONFIG.md (all keys, defaults, descriptions)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*train) {
      const sefoss::RunConfig cfg =
          resolve_config(train_config, train_sets, train_seed, train_mode);
      if (train_out.empty() && cfg.out_dir.empty()) {
        throw sefoss::ConfigError("train: no output directory (--out or out=)");
      }
      sefoss::RunOptions options;
      options.out_dir = train_out.empty() ? cfg.out_dir : train_out;
      options.resume_checkpoint = train_resume;
      const sefoss::RunResult result = sefoss::run_experiment(cfg, options);
      std::printf("mode=%s steps=%lld acc=%.4f auroc_energy=%.4f "
                  "auroc_confidence=%.4f (%.1fs)\n",
                  sefoss::to_string(cfg.mode).c_str(),
                  static_cast<long long>(result.state.step),
                  result.final_median.acc_id, result.final_median.auroc_energy,
                  result.final_median.auroc_confidence, result.wall_seconds);
      return kExitOk;
    }

    if (*sweep) {
      const sefoss::RunConfig base =
          resolve_config(sweep_config, sweep_sets, sweep_seed, "");
      sefoss::SweepOptions options;
      options.fractions = parse_fraction_list(sweep_fractions);
      options.modes = parse_mode_list(sweep_modes);
      options.out_dir = sweep_out;
      options.threads = sweep_threads_from_env();
      sefoss::run_sweep(base, options);
      std::printf("sweep complete: %zu fractions x %zu modes -> %s/sweep.csv\n",
                  options.fractions.size(), options.modes.size(),
                  sweep_out.c_str());
      return kExitOk;
    }

    if (*eval) {
      sefoss::EvalOptions options;
      options.checkpoint = eval_checkpoint;
      options.data_csv = eval_data;
      options.gen_config = eval_gen;
      if (!eval_unseen.empty()) {
        options.unseen_ood = sefoss::ood_kind_from_string(eval_unseen);
      }
      options.out_dir = eval_out;
      const sefoss::EvalReport report = sefoss::evaluate_checkpoint(options);
      std::printf("checkpoint_step=%lld\n",
                  static_cast<long long>(report.checkpoint_step));
      std::printf("accuracy=%.17g\n", report.test.acc_id);
      std::printf("auroc_energy=%.17g\n", report.test.auroc_energy);
      std::printf("auroc_confidence=%.17g\n", report.test.auroc_confidence);
      if (report.auroc_energy_unseen) {
        std::printf("unseen auroc_energy=%.17g auroc_confidence=%.17g\n",
                    *report.auroc_energy_unseen,
                    *report.auroc_confidence_unseen);
      }
      return kExitOk;
    }

    if (*gradcheck) {
      const auto cases =
          sefoss::run_loss_gradcheck(gc_trials, gc_eps, gc_corrupt);
      bool ok = true;
      for (const auto& c : cases) {
        const bool pass = c.max_rel_error < 1e-4;
        ok = ok && pass;
        std::printf("%-5s max_rel_error=%.3e [%s]\n", c.term.c_str(),
                    c.max_rel_error, pass ? "ok" : "FAIL");
      }
      return ok ? kExitOk : kExitCheckFailure;
    }

    if (*export_data) {
      const sefoss::RunConfig cfg =
          resolve_config(export_config, export_sets, "", "");
      sefoss::DataConfig dc = cfg.data;
      dc.seed = cfg.seed;
      sefoss::export_dataset_csv(sefoss::generate_gaussian_openset(dc),
                                 export_file, export_hidden);
      std::printf("wrote %s\n", export_file.c_str());
      return kExitOk;
    }

    if (*config_doc) {
      std::fputs(sefoss::config_markdown().c_str(), stdout);
      return kExitOk;
    }
  } catch (const sefoss::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const sefoss::ArtifactError& e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return kExitArtifactError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailure;
  }
  return kExitOk;
}
