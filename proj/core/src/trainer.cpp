#include "sefoss/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "sefoss/errors.hpp"
#include "sefoss/rng.hpp"

namespace sefoss {

double lr_schedule(std::int64_t k, const RunConfig& cfg) {
  if (k < 0 || k > cfg.total_steps) {
    throw std::invalid_argument("lr_schedule: step outside [0, K]");
  }
  if (k < cfg.pretrain_steps || cfg.total_steps == cfg.pretrain_steps) {
    return cfg.eta0;
  }
  const double progress = static_cast<double>(k - cfg.pretrain_steps) /
                          (2.0 * static_cast<double>(cfg.total_steps -
                                                     cfg.pretrain_steps));
  return cfg.eta0 * std::cos(cfg.gamma * std::numbers::pi * progress);
}

LossWeights phase_weights(const RunConfig& cfg, std::int64_t k) {
  const bool pretraining = k < cfg.pretrain_steps;
  LossWeights weights{0.0, 0.0, 0.0, cfg.w_w};
  switch (cfg.mode) {
    case TrainMode::sefoss:
      weights.self_sup = cfg.w_s;
      if (!pretraining) {
        weights.pseudo = cfg.use_lp ? cfg.w_p : 0.0;
        weights.energy = cfg.use_le ? cfg.w_e : 0.0;
      }
      break;
    case TrainMode::supervised:
      break;
    case TrainMode::fixmatch_baseline:
      if (!pretraining) weights.pseudo = cfg.w_p;
      break;
  }
  return weights;
}

TrainState make_initial_state(const RunConfig& cfg) {
  TrainState state;
  state.params = init_params(cfg.seed, cfg.data.input_dim, cfg.hidden_sizes,
                             cfg.feature_dim, cfg.data.num_classes);
  state.ema = state.params;  // shadow starts as an exact copy
  state.opt = make_optimizer_state(state.params, cfg.momentum);
  return state;
}

namespace {

// Unlabeled views are needed whenever an unlabeled loss can be active at
// step k: always for sefoss, never for supervised, main phase only for the
// fixmatch baseline.
bool uses_unlabeled(const RunConfig& cfg, std::int64_t k) {
  if (cfg.mu == 0) return false;
  switch (cfg.mode) {
    case TrainMode::sefoss: return true;
    case TrainMode::supervised: return false;
    case TrainMode::fixmatch_baseline: return k >= cfg.pretrain_steps;
  }
  return false;
}

OpenSetBatch batch_for_step(const OpenSetDataset& dataset,
                            const RunConfig& cfg, std::int64_t k) {
  Rng rng(Rng::mix(cfg.seed, stream::kStep, static_cast<std::uint64_t>(k)));
  const std::size_t mu =
      uses_unlabeled(cfg, k) ? static_cast<std::size_t>(cfg.mu) : 0;
  return sample_batch(dataset, static_cast<std::size_t>(cfg.batch_size), mu,
                      cfg.augment, rng);
}

}  // namespace

StepResult training_step(TrainState& state, const OpenSetBatch& batch,
                         const RunConfig& cfg, const LossWeights& weights) {
  const std::int64_t k = state.step;
  if (cfg.mode == TrainMode::sefoss && k >= cfg.pretrain_steps &&
      cfg.total_steps != cfg.pretrain_steps && !state.thresholds) {
    throw std::logic_error(
        "training_step: sefoss main phase requires calibrated thresholds");
  }

  Tape tape;
  ModelTensors model = mount(tape, state.params, /*trainable=*/true);

  LossTerms terms;
  terms.supervised = supervised_loss(
      forward_logits(model, forward_features(
                                model, make_constant(batch.labeled_weak))),
      batch.labels_onehot);
  terms.pseudo = make_scalar(0.0);
  terms.self_sup = make_scalar(0.0);
  terms.energy = make_scalar(0.0);
  terms.decay = weight_decay_loss(model.weights);

  if (batch.unlabeled_weak.rows() > 0 && cfg.mode != TrainMode::supervised) {
    const Tensor weak_feats =
        forward_features(model, make_constant(batch.unlabeled_weak));
    const Tensor strong_feats =
        forward_features(model, make_constant(batch.unlabeled_strong));
    const Tensor weak_logits = forward_logits(model, weak_feats);
    const Tensor strong_logits = forward_logits(model, strong_feats);

    if (cfg.mode == TrainMode::sefoss) {
      terms.self_sup = self_supervised_loss(project(model, strong_feats),
                                            weak_feats.detach());
      if (state.thresholds && cfg.use_lp) {
        MaskedLoss lp = pseudo_label_loss(weak_logits, strong_logits,
                                          state.thresholds->tau_id);
        terms.pseudo = lp.loss;
        terms.inlier_count = lp.selected;
      }
      if (state.thresholds && cfg.use_le) {
        MaskedLoss le = energy_reg_loss(weak_logits, state.thresholds->tau_ood,
                                        state.thresholds->m_ood);
        terms.energy = le.loss;
        terms.outlier_count = le.selected;
      }
    } else if (k >= cfg.pretrain_steps) {  // fixmatch_baseline main phase
      MaskedLoss lp = confidence_pseudo_label_loss(
          weak_logits, strong_logits, cfg.fixmatch_conf_threshold);
      terms.pseudo = lp.loss;
      terms.inlier_count = lp.selected;
    }
  }

  auto [total, breakdown] = total_loss(terms, weights);
  tape.backward(total);

  std::vector<Matrix> grads;
  grads.reserve(model.all.size());
  for (const Tensor& t : model.all) grads.push_back(t.grad());

  const double lr = lr_schedule(k, cfg);
  sgd_nesterov_step(state.params, grads, state.opt, lr);
  ema_update(state.ema, state.params, cfg.ema_momentum);
  ++state.step;
  return {breakdown, lr};
}

void calibrate(TrainState& state, const OpenSetDataset& dataset,
               const RunConfig& cfg) {
  if (state.thresholds) {
    throw std::logic_error("calibrate: thresholds already computed this run");
  }
  const std::size_t m = dataset.labeled.size();
  Matrix x(m, dataset.input_dim);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(dataset.labeled[i].x.begin(), dataset.labeled[i].x.end(),
              x.row(i).begin());
  }
  // Unaugmented labeled data through the EMA shadow, per the calibration
  // contract.
  const Matrix logits = eval_logits(state.ema, x);
  const std::vector<double> scores =
      free_energy_score(logits, cfg.energy.beta);
  state.thresholds = calibrate_thresholds(scores, cfg.energy);
}

void pretrain_phase(TrainState& state, const OpenSetDataset& dataset,
                    const RunConfig& cfg) {
  while (state.step < cfg.pretrain_steps) {
    const OpenSetBatch batch = batch_for_step(dataset, cfg, state.step);
    training_step(state, batch, cfg, phase_weights(cfg, state.step));
  }
}

void train_phase(TrainState& state, const OpenSetDataset& dataset,
                 const RunConfig& cfg) {
  while (state.step < cfg.total_steps) {
    const OpenSetBatch batch = batch_for_step(dataset, cfg, state.step);
    training_step(state, batch, cfg, phase_weights(cfg, state.step));
  }
}

EvalMetrics evaluate_model(const ModelParams& params,
                           const OpenSetDataset& dataset, double beta) {
  const std::size_t n_id = dataset.test_id.size();
  Matrix x_id(n_id, dataset.input_dim);
  for (std::size_t i = 0; i < n_id; ++i) {
    std::copy(dataset.test_id[i].x.begin(), dataset.test_id[i].x.end(),
              x_id.row(i).begin());
  }
  Matrix x_ood(dataset.test_ood.size(), dataset.input_dim);
  for (std::size_t i = 0; i < dataset.test_ood.size(); ++i) {
    std::copy(dataset.test_ood[i].begin(), dataset.test_ood[i].end(),
              x_ood.row(i).begin());
  }

  const Matrix logits_id = eval_logits(params, x_id);
  const Matrix logits_ood = eval_logits(params, x_ood);

  EvalMetrics metrics;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n_id; ++i) {
    const auto row = logits_id.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (static_cast<int>(best) == dataset.test_id[i].label) ++correct;
  }
  metrics.acc_id = static_cast<double>(correct) / static_cast<double>(n_id);

  const auto e_id = free_energy_score(logits_id, beta);
  const auto e_ood = free_energy_score(logits_ood, beta);
  metrics.auroc_energy = auroc(e_id, e_ood);

  auto c_id = softmax_confidence(logits_id);
  auto c_ood = softmax_confidence(logits_ood);
  for (double& v : c_id) v = -v;
  for (double& v : c_ood) v = -v;
  metrics.auroc_confidence = auroc(c_id, c_ood);
  return metrics;
}

// --- checkpoint mapping -----------------------------------------------------

Checkpoint state_to_checkpoint(const TrainState& state, const RunConfig& cfg) {
  Checkpoint cp;
  for_each_param(state.params, [&](const std::string& name, const Matrix& m) {
    cp.put("param." + name, m);
  });
  for_each_param(state.ema, [&](const std::string& name, const Matrix& m) {
    cp.put("ema." + name, m);
  });
  std::size_t i = 0;
  for_each_param(state.params, [&](const std::string& name, const Matrix&) {
    cp.put("opt." + name, state.opt.velocity[i]);
    ++i;
  });
  cp.put_scalar("meta.step", static_cast<double>(state.step));
  cp.put_scalar("meta.opt_step", static_cast<double>(state.opt.step));
  cp.put_scalar("meta.beta", cfg.energy.beta);
  cp.put_scalar("meta.calibrated", state.thresholds ? 1.0 : 0.0);
  if (state.thresholds) {
    cp.put_scalar("meta.tau_id", state.thresholds->tau_id);
    cp.put_scalar("meta.tau_ood", state.thresholds->tau_ood);
    cp.put_scalar("meta.m_ood", state.thresholds->m_ood);
  }
  return cp;
}

namespace {

void fill_params_from_checkpoint(ModelParams& params, const Checkpoint& cp,
                                 const std::string& prefix) {
  for_each_param(params, [&](const std::string& name, Matrix& m) {
    const Matrix& stored = cp.get(prefix + name);
    if (!stored.same_shape(m)) {
      throw ArtifactError("checkpoint entry '" + prefix + name +
                          "' does not match the configured model shape");
    }
    m = stored;
  });
}

}  // namespace

ModelParams params_from_checkpoint(const Checkpoint& cp,
                                   const std::string& prefix) {
  ModelParams params;
  for (std::size_t i = 0;; ++i) {
    const std::string base = prefix + "backbone." + std::to_string(i);
    if (!cp.has(base + ".weight")) break;
    params.backbone.push_back({cp.get(base + ".weight"), cp.get(base + ".bias")});
  }
  if (params.backbone.empty()) {
    throw ArtifactError("checkpoint has no '" + prefix + "backbone.*' entries");
  }
  params.head = {cp.get(prefix + "head.weight"), cp.get(prefix + "head.bias")};
  params.projection = {cp.get(prefix + "proj.weight"),
                       cp.get(prefix + "proj.bias")};
  return params;
}

TrainState state_from_checkpoint(const Checkpoint& cp, const RunConfig& cfg) {
  TrainState state = make_initial_state(cfg);
  fill_params_from_checkpoint(state.params, cp, "param.");
  fill_params_from_checkpoint(state.ema, cp, "ema.");
  std::size_t i = 0;
  for_each_param(state.params, [&](const std::string& name, const Matrix& m) {
    const Matrix& v = cp.get("opt." + name);
    if (!v.same_shape(m)) {
      throw ArtifactError("checkpoint velocity 'opt." + name +
                          "' does not match the configured model shape");
    }
    state.opt.velocity[i] = v;
    ++i;
  });
  state.step = static_cast<std::int64_t>(cp.get_scalar("meta.step"));
  state.opt.step = static_cast<std::int64_t>(cp.get_scalar("meta.opt_step"));
  if (cp.get_scalar("meta.calibrated") != 0.0) {
    state.thresholds = Thresholds{cp.get_scalar("meta.tau_id"),
                                  cp.get_scalar("meta.tau_ood"),
                                  cp.get_scalar("meta.m_ood")};
  }
  return state;
}

// --- experiment runner ------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& file) : out_(file) {
    if (!out_) throw ArtifactError("cannot write metrics: " + file.string());
    out_ << "step,lr,l_l,l_p,l_s,l_e,l_w,total,inlier_mask_rate,"
            "outlier_mask_rate,acc_id,auroc_energy,auroc_confidence,"
            "tau_id,tau_ood,m_ood\n";
  }

  void write_row(std::int64_t step, const StepResult& res,
                 std::int64_t unlabeled_batch, const EvalMetrics& eval,
                 const std::optional<Thresholds>& thresholds) {
    const double denom =
        unlabeled_batch > 0 ? static_cast<double>(unlabeled_batch) : 1.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out_ << step << ',' << fmt_double(res.lr) << ','
         << fmt_double(res.breakdown.l_l) << ',' << fmt_double(res.breakdown.l_p)
         << ',' << fmt_double(res.breakdown.l_s) << ','
         << fmt_double(res.breakdown.l_e) << ',' << fmt_double(res.breakdown.l_w)
         << ',' << fmt_double(res.breakdown.total) << ','
         << fmt_double(res.breakdown.inlier_count / denom) << ','
         << fmt_double(res.breakdown.outlier_count / denom) << ','
         << fmt_double(eval.acc_id) << ',' << fmt_double(eval.auroc_energy)
         << ',' << fmt_double(eval.auroc_confidence) << ','
         << fmt_double(thresholds ? thresholds->tau_id : nan) << ','
         << fmt_double(thresholds ? thresholds->tau_ood : nan) << ','
         << fmt_double(thresholds ? thresholds->m_ood : nan) << '\n';
  }

 private:
  std::ofstream out_;
};

double median_of(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return quantile(std::move(values), 0.5);
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  std::filesystem::create_directories(options.out_dir);

  DataConfig data_cfg = cfg.data;
  data_cfg.seed = cfg.seed;
  const OpenSetDataset dataset = generate_gaussian_openset(data_cfg);

  TrainState state;
  if (!options.resume_checkpoint.empty()) {
    state = state_from_checkpoint(load_checkpoint(options.resume_checkpoint),
                                  cfg);
    if (state.step > cfg.total_steps) {
      throw ArtifactError("resume checkpoint is past K");
    }
  } else {
    state = make_initial_state(cfg);
  }

  MetricsWriter metrics(options.out_dir / "metrics.csv");
  std::vector<EvalMetrics> history;

  while (state.step < cfg.total_steps) {
    const std::int64_t k = state.step;
    if (cfg.mode == TrainMode::sefoss && k == cfg.pretrain_steps &&
        cfg.total_steps != cfg.pretrain_steps && !state.thresholds) {
      calibrate(state, dataset, cfg);
    }
    const OpenSetBatch batch = batch_for_step(dataset, cfg, k);
    const StepResult res =
        training_step(state, batch, cfg, phase_weights(cfg, k));

    const std::int64_t completed = state.step;
    if (completed % cfg.eval_every == 0 || completed == cfg.total_steps) {
      const EvalMetrics eval =
          evaluate_model(state.ema, dataset, cfg.energy.beta);
      history.push_back(eval);
      metrics.write_row(completed, res, cfg.mu * cfg.batch_size, eval,
                        state.thresholds);
    }
    if (cfg.checkpoint_every > 0 && completed % cfg.checkpoint_every == 0 &&
        completed != cfg.total_steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06lld.bin",
                    static_cast<long long>(completed));
      save_checkpoint(state_to_checkpoint(state, cfg),
                      options.out_dir / name);
    }
  }

  save_checkpoint(state_to_checkpoint(state, cfg),
                  options.out_dir / "checkpoint.bin");

  RunResult result;
  const std::size_t tail = std::min<std::size_t>(history.size(), 5);
  std::vector<double> acc, auroc_e, auroc_c;
  for (std::size_t i = history.size() - tail; i < history.size(); ++i) {
    acc.push_back(history[i].acc_id);
    auroc_e.push_back(history[i].auroc_energy);
    auroc_c.push_back(history[i].auroc_confidence);
  }
  result.final_median.acc_id = median_of(acc);
  result.final_median.auroc_energy = median_of(auroc_e);
  result.final_median.auroc_confidence = median_of(auroc_c);

  const auto t1 = std::chrono::steady_clock::now();
  result.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

  nlohmann::ordered_json summary;
  summary["mode"] = to_string(cfg.mode);
  summary["seed"] = cfg.seed;
  summary["final"] = {{"acc_id", result.final_median.acc_id},
                      {"auroc_energy", result.final_median.auroc_energy},
                      {"auroc_confidence", result.final_median.auroc_confidence}};
  if (state.thresholds) {
    summary["thresholds"] = {{"tau_id", state.thresholds->tau_id},
                             {"tau_ood", state.thresholds->tau_ood},
                             {"m_ood", state.thresholds->m_ood}};
  } else {
    summary["thresholds"] = nullptr;
  }
  summary["wall_time_seconds"] = result.wall_seconds;
  summary["config"] = nlohmann::ordered_json::parse(config_json(cfg, -1));
  {
    std::ofstream out(options.out_dir / "summary.json");
    if (!out) throw ArtifactError("cannot write summary.json");
    out << summary.dump(2) << '\n';
  }

  result.state = std::move(state);
  return result;
}

// --- sweep ------------------------------------------------------------------

namespace {

RunConfig sweep_child_config(const RunConfig& base, double fraction,
                             TrainMode mode) {
  RunConfig cfg = base;
  cfg.mode = mode;
  const double n_base = static_cast<double>(base.data.n_unlabeled);
  std::size_t n_id = 0, n_ood = 0;
  if (fraction <= 0.5) {
    n_id = base.data.n_unlabeled;
    n_ood = static_cast<std::size_t>(
        std::llround(n_base * fraction / (1.0 - fraction)));
  } else {
    n_ood = base.data.n_unlabeled;
    n_id = static_cast<std::size_t>(
        std::llround(n_base * (1.0 - fraction) / fraction));
  }
  cfg.data.n_unlabeled = n_id + n_ood;
  cfg.data.ood_fraction =
      cfg.data.n_unlabeled == 0
          ? 0.0
          : static_cast<double>(n_ood) / static_cast<double>(cfg.data.n_unlabeled);
  return cfg;
}

std::string fraction_label(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", fraction);
  return buf;
}

}  // namespace

void run_sweep(const RunConfig& base, const SweepOptions& options) {
  base.validate();
  for (double f : options.fractions) {
    if (f < 0.0 || f > 1.0) {
      throw ConfigError("sweep: fractions must lie in [0, 1]");
    }
  }
  if (options.fractions.empty() || options.modes.empty()) {
    throw ConfigError("sweep: need at least one fraction and one mode");
  }
  std::filesystem::create_directories(options.out_dir);

  struct Job {
    double fraction;
    TrainMode mode;
    RunResult result;
  };
  std::vector<Job> jobs;
  for (double f : options.fractions) {
    for (TrainMode mode : options.modes) jobs.push_back({f, mode, {}});
  }

  const int threads = std::max(1, options.threads);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        Job& job = jobs[i];
        const RunConfig cfg = sweep_child_config(base, job.fraction, job.mode);
        RunOptions run_opts;
        run_opts.out_dir = options.out_dir /
                           ("f" + fraction_label(job.fraction) + "_" +
                            to_string(job.mode));
        job.result = run_experiment(cfg, run_opts);
      } catch (...) {
        std::scoped_lock lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::ofstream out(options.out_dir / "sweep.csv");
  if (!out) throw ArtifactError("cannot write sweep.csv");
  out << "fraction,mode,acc,auroc\n";
  for (const Job& job : jobs) {
    out << fmt_double(job.fraction) << ',' << to_string(job.mode) << ','
        << fmt_double(job.result.final_median.acc_id) << ','
        << fmt_double(job.result.final_median.auroc_energy) << '\n';
  }
}

// --- offline evaluation -----------------------------------------------------

EvalReport evaluate_checkpoint(const EvalOptions& options) {
  const Checkpoint cp = load_checkpoint(options.checkpoint);
  const ModelParams ema = params_from_checkpoint(cp, "ema.");
  const double beta = cp.has("meta.beta") ? cp.get_scalar("meta.beta") : 1.0;

  OpenSetDataset dataset;
  std::optional<RunConfig> gen_cfg;
  if (!options.gen_config.empty()) {
    RunConfig cfg = load_config_file(options.gen_config);
    cfg.validate();
    DataConfig dc = cfg.data;
    dc.seed = cfg.seed;
    dataset = generate_gaussian_openset(dc);
    gen_cfg = cfg;
  } else if (!options.data_csv.empty()) {
    dataset = import_dataset_csv(options.data_csv);
  } else {
    throw ConfigError("eval: need --data or --gen");
  }
  if (dataset.test_id.empty() || dataset.test_ood.empty()) {
    throw ArtifactError("eval: dataset lacks test_id/test_ood splits");
  }

  EvalReport report;
  report.checkpoint_step =
      static_cast<std::int64_t>(cp.get_scalar("meta.step"));
  report.test = evaluate_model(ema, dataset, beta);

  std::vector<ScoreDumpRow> rows;
  auto dump_split = [&](const std::string& split, const Matrix& x, bool ood) {
    const Matrix logits = eval_logits(ema, x);
    const auto energy = free_energy_score(logits, beta);
    const auto conf = softmax_confidence(logits);
    for (std::size_t i = 0; i < energy.size(); ++i) {
      rows.push_back({split, ood, energy[i], conf[i]});
    }
    return energy;
  };

  Matrix x_id(dataset.test_id.size(), dataset.input_dim);
  for (std::size_t i = 0; i < dataset.test_id.size(); ++i) {
    std::copy(dataset.test_id[i].x.begin(), dataset.test_id[i].x.end(),
              x_id.row(i).begin());
  }
  const auto id_energy = dump_split("test_id", x_id, false);

  Matrix x_ood(dataset.test_ood.size(), dataset.input_dim);
  for (std::size_t i = 0; i < dataset.test_ood.size(); ++i) {
    std::copy(dataset.test_ood[i].begin(), dataset.test_ood[i].end(),
              x_ood.row(i).begin());
  }
  dump_split("test_ood", x_ood, true);

  if (options.unseen_ood) {
    if (!gen_cfg) {
      throw ConfigError(
          "eval: --unseen-ood requires --gen (generation parameters)");
    }
    DataConfig dc = gen_cfg->data;
    dc.seed = gen_cfg->seed;
    Rng rng(Rng::mix(dc.seed, stream::kUnseenOod));
    const auto points =
        generate_ood_points(dc, *options.unseen_ood, dc.n_test_ood, rng);
    Matrix x_unseen(points.size(), dataset.input_dim);
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::copy(points[i].begin(), points[i].end(), x_unseen.row(i).begin());
    }
    const Matrix logits = eval_logits(ema, x_unseen);
    const auto energy = free_energy_score(logits, beta);
    auto conf = softmax_confidence(logits);
    for (std::size_t i = 0; i < energy.size(); ++i) {
      rows.push_back({"unseen_ood", true, energy[i], conf[i]});
    }
    report.auroc_energy_unseen = auroc(id_energy, energy);

    auto id_conf = softmax_confidence(eval_logits(ema, x_id));
    for (double& v : id_conf) v = -v;
    for (double& v : conf) v = -v;
    report.auroc_confidence_unseen = auroc(id_conf, conf);
  }

  std::filesystem::create_directories(options.out_dir);
  write_score_dump(options.out_dir / "scores.csv", rows);

  nlohmann::ordered_json j;
  j["checkpoint"] = options.checkpoint.string();
  j["checkpoint_step"] = report.checkpoint_step;
  j["accuracy"] = report.test.acc_id;
  j["auroc_energy"] = report.test.auroc_energy;
  j["auroc_confidence"] = report.test.auroc_confidence;
  if (report.auroc_energy_unseen) {
    j["unseen_ood"] = {{"kind", to_string(*options.unseen_ood)},
                       {"auroc_energy", *report.auroc_energy_unseen},
                       {"auroc_confidence", *report.auroc_confidence_unseen}};
  }
  std::ofstream out(options.out_dir / "eval.json");
  if (!out) throw ArtifactError("cannot write eval.json");
  out << j.dump(2) << '\n';
  return report;
}

}  // namespace sefoss
