// Acceptance suite: runs every gate end to end at its stated tolerance and
// prints one pass/fail line per criterion. Exit code 0 iff all pass.
//
// The qualitative criteria (8-10) train on the frozen default synthetic
// benchmark: D=8, C=4, 40 labels, 4000 unlabeled, 50% OOD, K=6000, seed 1.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "sefoss/config.hpp"
#include "sefoss/energy.hpp"
#include "sefoss/losses.hpp"
#include "sefoss/network.hpp"
#include "sefoss/rng.hpp"
#include "sefoss/selfcheck.hpp"
#include "sefoss/trainer.hpp"
#include "support/oracles.hpp"

#ifndef SEFOSS_TOOL_PATH
#error "SEFOSS_TOOL_PATH must be defined by the build"
#endif

namespace {

using namespace sefoss;

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL",
              criterion, what.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int run_tool(const std::string& args) {
  const std::string command =
      std::string(SEFOSS_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path work_dir() {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("sefoss_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

// --- criterion 1: gradient correctness --------------------------------------

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = run_loss_gradcheck(100, 1e-5);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.max_rel_error);
  const int tool_exit = run_tool("gradcheck --trials 100 --eps 1e-5");
  report(1, worst < 1e-4 && seconds < 30.0 && tool_exit == 0,
         "gradient correctness over all loss terms and the composite",
         "worst rel err " + fmt(worst) + ", " + fmt(seconds) +
             " s, cmd_gradcheck exit " + std::to_string(tool_exit));
}

// --- criterion 2: stop-gradient contracts ------------------------------------

std::vector<Matrix> loss_param_grads(const ModelParams& params,
                                     const Matrix& weak_x,
                                     const Matrix& strong_x, const char* term,
                                     bool constant_copy_targets) {
  Tape tape;
  ModelTensors model = mount(tape, params, true);
  const Tensor weak_feats = forward_features(model, make_constant(weak_x));
  const Tensor strong_feats = forward_features(model, make_constant(strong_x));

  Tensor loss;
  if (std::string(term) == "l_s") {
    const Tensor weak_target = constant_copy_targets
                                   ? make_constant(weak_feats.value())
                                   : weak_feats.detach();
    loss = self_supervised_loss(project(model, strong_feats), weak_target);
  } else {  // l_p
    const Tensor weak_logits_live = forward_logits(model, weak_feats);
    const Tensor strong_logits = forward_logits(model, strong_feats);
    const Tensor weak_for_targets =
        constant_copy_targets ? make_constant(weak_logits_live.value())
                              : weak_logits_live;
    loss = pseudo_label_loss(weak_for_targets, strong_logits, 1e9).loss;
  }
  tape.backward(loss);
  std::vector<Matrix> grads;
  for (const Tensor& t : model.all) grads.push_back(t.grad());
  return grads;
}

void criterion_2() {
  Rng rng(0xACCE55);
  const ModelParams params =
      init_params(rng.next_u64(), 4, std::array<std::size_t, 1>{6}, 5, 3);
  Matrix weak_x(6, 4), strong_x(6, 4);
  for (double& v : weak_x.values()) v = rng.uniform(-1.0, 1.0);
  for (double& v : strong_x.values()) v = rng.uniform(-1.0, 1.0);

  double worst = 0.0;
  for (const char* term : {"l_s", "l_p"}) {
    const auto real = loss_param_grads(params, weak_x, strong_x, term, false);
    const auto oracle = loss_param_grads(params, weak_x, strong_x, term, true);
    for (std::size_t i = 0; i < real.size(); ++i) {
      worst = std::max(worst, max_abs_diff(real[i], oracle[i]));
    }
  }

  // l_e must not touch the strong branch: the strong input itself is made a
  // differentiable leaf and must receive an identically zero adjoint.
  double strong_leak = 0.0;
  {
    Tape tape;
    ModelTensors model = mount(tape, params, true);
    Tensor strong_in = tape.leaf(strong_x, true);
    const Tensor weak_logits =
        forward_logits(model, forward_features(model, make_constant(weak_x)));
    const Tensor strong_logits =
        forward_logits(model, forward_features(model, strong_in));
    (void)strong_logits;
    const MaskedLoss le = energy_reg_loss(weak_logits, -1e9, 50.0);
    tape.backward(le.loss);
    for (double g : strong_in.grad().values()) {
      strong_leak = std::max(strong_leak, std::abs(g));
    }
    for (double g : model.proj_weight.grad().values()) {
      strong_leak = std::max(strong_leak, std::abs(g));
    }
  }

  report(2, worst < 1e-12 && strong_leak == 0.0,
         "stop-gradient contracts of l_s, l_p and l_e",
         "constant-copy grad diff " + fmt(worst) + ", strong-branch leak " +
             fmt(strong_leak));
}

// --- criterion 3: energy-score identities ------------------------------------

void criterion_3() {
  Rng rng(0xE17);
  double worst_shift = 0.0, worst_uniform = 0.0, worst_equiv = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t c = 2 + rng.uniform_index(9);
    Matrix row(1, c);
    for (double& v : row.values()) v = rng.uniform(-20.0, 20.0);
    const double shift = rng.uniform(-10.0, 10.0);
    Matrix shifted = row;
    for (double& v : shifted.values()) v += shift;
    const double s0 = free_energy_score(row, 1.0)[0];
    const double s1 = free_energy_score(shifted, 1.0)[0];
    worst_shift = std::max(worst_shift, std::abs(s1 - (s0 - shift)));

    Tape tape;
    const double via_lse =
        -row_log_sum_exp(tape.leaf(row, false)).value()(0, 0);
    worst_equiv = std::max(worst_equiv, std::abs(s0 - via_lse));
  }
  for (std::size_t c = 1; c <= 32; ++c) {
    const double s = free_energy_score(Matrix(1, c), 1.0)[0];
    worst_uniform = std::max(
        worst_uniform, std::abs(s + std::log(static_cast<double>(c))));
  }
  report(3, worst_shift < 1e-12 && worst_uniform < 1e-12 && worst_equiv < 1e-12,
         "free-energy shift covariance, uniform-logit value, scorer parity",
         "shift " + fmt(worst_shift) + ", uniform " + fmt(worst_uniform) +
             ", parity " + fmt(worst_equiv));
}

// --- criterion 4: AUROC oracle equivalence -----------------------------------

void criterion_4() {
  Rng rng(0xA0C);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_id = 1 + rng.uniform_index(200);
    const std::size_t n_ood = 1 + rng.uniform_index(200);
    const bool ties = trial % 2 == 0;
    std::vector<double> id(n_id), ood(n_ood);
    for (double& v : id) {
      v = ties ? static_cast<double>(rng.uniform_index(7)) : rng.uniform();
    }
    for (double& v : ood) {
      v = ties ? static_cast<double>(rng.uniform_index(7)) : rng.uniform();
    }
    if (auroc(id, ood) != oracles::brute_force_auroc(id, ood)) ++mismatches;
  }
  report(4, mismatches == 0,
         "rank-based AUROC equals brute-force pair counting on 1000 instances",
         std::to_string(mismatches) + " mismatches");
}

// --- criterion 5: threshold calibration oracle -------------------------------

void criterion_5() {
  const EnergyConfig cfg;  // 0.2, 1.3, 1.9
  std::vector<double> scores = {-10.0, -8.0, -6.0, -4.0, -2.0};
  const Thresholds t = calibrate_thresholds(scores, cfg);
  const double worst_hand =
      std::max({std::abs(t.tau_id - (-6.8)), std::abs(t.tau_ood - (-0.8)),
                std::abs(t.m_ood - 1.6)});

  bool permutation_ok = true;
  Rng rng(0xCA1);
  for (int shuffle = 0; shuffle < 100; ++shuffle) {
    for (std::size_t i = scores.size(); i > 1; --i) {
      std::swap(scores[i - 1], scores[rng.uniform_index(i)]);
    }
    const Thresholds u = calibrate_thresholds(scores, cfg);
    permutation_ok = permutation_ok && u.tau_id == t.tau_id &&
                     u.tau_ood == t.tau_ood && u.m_ood == t.m_ood;
  }

  const Thresholds d = calibrate_thresholds(std::vector<double>(8, -4.25), cfg);
  const bool degenerate_ok =
      d.tau_id == -4.25 && d.tau_ood == -4.25 && d.m_ood == -4.25;

  report(5, worst_hand < 1e-12 && permutation_ok && degenerate_ok,
         "threshold calibration: hand case, permutation invariance, collapse",
         "hand-case err " + fmt(worst_hand) + ", permutations " +
             (permutation_ok ? "stable" : "UNSTABLE") + ", degenerate " +
             (degenerate_ok ? "collapses" : "BROKEN"));
}

// --- criterion 6: schedule values --------------------------------------------

void criterion_6() {
  RunConfig cfg;
  cfg.eta0 = 0.03;
  cfg.gamma = 7.0 / 8.0;
  cfg.total_steps = 6000;
  cfg.pretrain_steps = 750;
  double worst = 0.0;
  for (std::int64_t k = 0; k < cfg.pretrain_steps; k += 50) {
    worst = std::max(worst, std::abs(lr_schedule(k, cfg) - 0.03));
  }
  worst = std::max(worst, std::abs(lr_schedule(750, cfg) - cfg.eta0));
  const double at_k = cfg.eta0 * std::cos(cfg.gamma * std::numbers::pi / 2.0);
  worst = std::max(worst, std::abs(lr_schedule(6000, cfg) - at_k));
  report(6, worst < 1e-12, "learning-rate schedule values",
         "worst abs err " + fmt(worst) + ", eta(K) = " +
             fmt(lr_schedule(6000, cfg)));
}

// --- criterion 7: determinism and resume -------------------------------------

void criterion_7(const std::filesystem::path& dir) {
  const std::string args =
      "--seed 11 --set K=60 --set K_p=20 --set eval_every=10 "
      "--set checkpoint_every=30 --set B=16 --set mu=3 --set n_labeled=16 "
      "--set n_unlabeled=256 --set n_test_id=64 --set n_test_ood=64 "
      "--set hidden_sizes=16 --set feature_dim=8";
  const auto a = dir / "det_a";
  const auto b = dir / "det_b";
  const auto c = dir / "det_resume";
  bool ok = run_tool("train --out " + a.string() + " " + args) == 0;
  ok = ok && run_tool("train --out " + b.string() + " " + args) == 0;
  const std::string metrics_a = read_file(a / "metrics.csv");
  const bool identical =
      ok && !metrics_a.empty() && metrics_a == read_file(b / "metrics.csv");

  ok = ok && run_tool("train --out " + c.string() + " --resume " +
                      (a / "checkpoint_000030.bin").string() + " " + args) == 0;
  const bool resume_exact =
      ok && read_file(a / "checkpoint.bin") == read_file(c / "checkpoint.bin");

  // The resumed metrics rows must be the byte-exact tail of the full run's.
  bool tail_exact = false;
  if (ok) {
    const std::string full = read_file(a / "metrics.csv");
    const std::string tail = read_file(c / "metrics.csv");
    const auto header_end = tail.find('\n');
    const std::string tail_body = tail.substr(header_end + 1);
    tail_exact = !tail_body.empty() && full.size() >= tail_body.size() &&
                 full.compare(full.size() - tail_body.size(), tail_body.size(),
                              tail_body) == 0;
  }

  report(7, identical && resume_exact && tail_exact,
         "byte-identical reruns and bit-exact checkpoint resume",
         std::string("rerun ") + (identical ? "identical" : "DIFFERS") +
             ", resume checkpoint " + (resume_exact ? "identical" : "DIFFERS") +
             ", metrics tail " + (tail_exact ? "identical" : "DIFFERS"));
}

// --- criteria 8-10: qualitative reproduction on the frozen benchmark --------

struct BenchmarkRuns {
  RunResult sefoss, fixmatch, supervised, ls_only, pretrain_only;
  double abc_seconds = 0.0;
};

BenchmarkRuns run_benchmark(const std::filesystem::path& dir) {
  BenchmarkRuns runs;
  RunConfig cfg;  // frozen defaults: D=8, C=4, 40/4000, 50% OOD, K=6000, seed 1

  const auto t0 = std::chrono::steady_clock::now();
  runs.sefoss = run_experiment(cfg, {dir / "sefoss", {}});
  RunConfig fixmatch = cfg;
  fixmatch.mode = TrainMode::fixmatch_baseline;
  runs.fixmatch = run_experiment(fixmatch, {dir / "fixmatch", {}});
  RunConfig supervised = cfg;
  supervised.mode = TrainMode::supervised;
  runs.supervised = run_experiment(supervised, {dir / "supervised", {}});
  runs.abc_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  RunConfig ls_only = cfg;
  ls_only.use_lp = false;
  ls_only.use_le = false;
  runs.ls_only = run_experiment(ls_only, {dir / "ls_only", {}});

  RunConfig pretrain = cfg;
  pretrain.total_steps = pretrain.pretrain_steps;
  runs.pretrain_only = run_experiment(pretrain, {dir / "pretrain_only", {}});
  return runs;
}

void criterion_8(const BenchmarkRuns& runs) {
  const double sefoss_auroc = runs.sefoss.final_median.auroc_energy;
  const double fixmatch_auroc = runs.fixmatch.final_median.auroc_energy;
  const double sefoss_acc = runs.sefoss.final_median.acc_id;
  const double supervised_acc = runs.supervised.final_median.acc_id;
  const bool a = sefoss_auroc >= 0.90;
  const bool b = sefoss_auroc - fixmatch_auroc >= 0.05;
  const bool c = sefoss_acc >= supervised_acc;
  const bool time_ok = runs.abc_seconds < 600.0;
  report(8, a && b && c && time_ok,
         "qualitative method reproduction on the frozen benchmark",
         "sefoss auroc " + fmt(sefoss_auroc) + " (>=0.90), margin over "
             "fixmatch " +
             fmt(sefoss_auroc - fixmatch_auroc) + " (>=0.05), acc " +
             fmt(sefoss_acc) + " vs supervised " + fmt(supervised_acc) +
             ", runtime " + fmt(runs.abc_seconds) + " s (<600)");
}

void criterion_9(const BenchmarkRuns& runs) {
  const double full = runs.sefoss.final_median.auroc_energy;
  const double ls_only = runs.ls_only.final_median.auroc_energy;
  report(9, full >= ls_only,
         "ablation direction: full SeFOSS vs self-supervision only",
         "full " + fmt(full) + " >= ls-only " + fmt(ls_only));
}

void criterion_10(const BenchmarkRuns& runs) {
  const double energy = runs.pretrain_only.final_median.auroc_energy;
  const double confidence = runs.pretrain_only.final_median.auroc_confidence;
  report(10, energy >= confidence - 0.02,
         "pretraining-only energy vs confidence AUROC",
         "energy " + fmt(energy) + " vs confidence " + fmt(confidence));
}

// --- criterion 11: mask-count monotonicity -----------------------------------

void criterion_11() {
  Rng rng(0x3A5C);
  Matrix weak(64, 4), strong(64, 4);
  for (double& v : weak.values()) v = rng.uniform(-3.0, 3.0);
  for (double& v : strong.values()) v = rng.uniform(-3.0, 3.0);
  const auto scores = free_energy_score(weak, 1.0);
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());

  bool monotone = true;
  int prev = 1 << 30;
  for (int i = 0; i < 50; ++i) {
    const double tau_id = *hi + 0.05 - (*hi - *lo + 0.1) * i / 49.0;
    Tape tape;
    const int count = pseudo_label_loss(tape.leaf(weak, false),
                                        tape.leaf(strong, false), tau_id)
                          .selected;
    monotone = monotone && count <= prev;
    prev = count;
  }
  prev = 1 << 30;
  for (int i = 0; i < 50; ++i) {
    const double tau_ood = *lo - 0.05 + (*hi - *lo + 0.1) * i / 49.0;
    Tape tape;
    const int count =
        energy_reg_loss(tape.leaf(weak, false), tau_ood, 1e9).selected;
    monotone = monotone && count <= prev;
    prev = count;
  }
  report(11, monotone, "mask-count monotonicity over 50-point threshold grids",
         monotone ? "non-increasing in both directions" : "VIOLATED");
}

}  // namespace

int main() {
  const auto dir = work_dir();
  std::printf("acceptance suite (work dir %s)\n", dir.c_str());

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7(dir);

  std::printf("... training the frozen benchmark runs (several minutes)\n");
  std::fflush(stdout);
  const BenchmarkRuns runs = run_benchmark(dir);
  criterion_8(runs);
  criterion_9(runs);
  criterion_10(runs);
  criterion_11();

  std::filesystem::remove_all(dir);
  if (g_failures == 0) {
    std::printf("all 11 acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria FAILED\n", g_failures);
  return 1;
}
