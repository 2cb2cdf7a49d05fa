#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "sefoss/checkpoint.hpp"
#include "sefoss/config.hpp"
#include "sefoss/data.hpp"
#include "sefoss/losses.hpp"
#include "sefoss/network.hpp"

namespace sefoss {

// Constant eta0 during pre-training, cosine decay afterwards:
//   eta(k) = eta0                                       for k < K_p
//   eta(k) = eta0 * cos(gamma * pi * (k-K_p) / (2(K-K_p)))  otherwise
// Degenerate K == K_p yields eta0 everywhere.
double lr_schedule(std::int64_t k, const RunConfig& cfg);

// Loss weights in effect at step k for the configured mode and phase:
// pre-training always runs with w_e = w_p = 0; the sefoss main phase uses
// w_p (default 1) and the tuned w_e, subject to the ablation switches.
LossWeights phase_weights(const RunConfig& cfg, std::int64_t k);

struct TrainState {
  std::int64_t step = 0;
  ModelParams params;
  ModelParams ema;
  OptimizerState opt;
  std::optional<Thresholds> thresholds;
};

TrainState make_initial_state(const RunConfig& cfg);

struct StepResult {
  LossBreakdown breakdown;
  double lr = 0.0;
};

// One full training step: forward both branches, evaluate the active loss
// terms under the given weights, backpropagate, apply SGD at the scheduled
// rate, update the EMA shadow, increment the step counter.
StepResult training_step(TrainState& state, const OpenSetBatch& batch,
                         const RunConfig& cfg, const LossWeights& weights);

// Energy scores of the unaugmented labeled set under the EMA parameters,
// then threshold calibration. Runs exactly once per training run; a second
// call is a contract error.
void calibrate(TrainState& state, const OpenSetDataset& dataset,
               const RunConfig& cfg);

// Pre-training steps 0..K_p-1 / main-phase steps K_p..K-1 without metrics
// output. run_experiment composes these with calibration, evaluation and
// artifact writing.
void pretrain_phase(TrainState& state, const OpenSetDataset& dataset,
                    const RunConfig& cfg);
void train_phase(TrainState& state, const OpenSetDataset& dataset,
                 const RunConfig& cfg);

struct EvalMetrics {
  double acc_id = 0.0;
  double auroc_energy = 0.0;
  double auroc_confidence = 0.0;
};

// Closed-set accuracy and AUROC under both scorers on the test splits.
// Confidence scores are negated before ranking so both scorers share the
// OOD-is-higher orientation. Pure read of the given parameters.
EvalMetrics evaluate_model(const ModelParams& params,
                           const OpenSetDataset& dataset, double beta);

Checkpoint state_to_checkpoint(const TrainState& state, const RunConfig& cfg);
TrainState state_from_checkpoint(const Checkpoint& checkpoint,
                                 const RunConfig& cfg);
ModelParams params_from_checkpoint(const Checkpoint& checkpoint,
                                   const std::string& prefix);

struct RunOptions {
  std::filesystem::path out_dir;
  std::filesystem::path resume_checkpoint;  // empty: fresh run
};

struct RunResult {
  TrainState state;
  EvalMetrics final_median;  // median of the last five evaluations
  double wall_seconds = 0.0;
};

// pretrain -> calibrate -> train with periodic EMA evaluation. Writes
// metrics.csv, summary.json and checkpoint.bin under out_dir.
RunResult run_experiment(const RunConfig& cfg, const RunOptions& options);

struct SweepOptions {
  std::vector<double> fractions;
  std::vector<TrainMode> modes;
  std::filesystem::path out_dir;
  int threads = 1;
};

// One run per (fraction, mode) with shared seeds. Fractions at or below 0.5
// are realized by adding OOD data to the base ID pool, fractions above 0.5
// by removing ID data, keeping the OOD pool at the base size. Aggregates
// sweep.csv with columns fraction,mode,acc,auroc.
void run_sweep(const RunConfig& base, const SweepOptions& options);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_csv;    // one of data_csv /
  std::filesystem::path gen_config;  // gen_config must be set
  std::optional<OodKind> unseen_ood;
  std::filesystem::path out_dir;
};

struct EvalReport {
  EvalMetrics test;
  std::optional<double> auroc_energy_unseen;
  std::optional<double> auroc_confidence_unseen;
  std::int64_t checkpoint_step = 0;
};

// Loads EMA parameters from a checkpoint and evaluates them, including,
// when requested, against a freshly generated OOD distribution that never
// appeared in training. Writes scores.csv and eval.json under out_dir.
EvalReport evaluate_checkpoint(const EvalOptions& options);

}  // namespace sefoss
