// Microbenchmarks for the training-step hot path.

#include <benchmark/benchmark.h>

#include "sefoss/config.hpp"
#include "sefoss/energy.hpp"
#include "sefoss/rng.hpp"
#include "sefoss/trainer.hpp"

namespace {

using namespace sefoss;

void BM_matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  Matrix a(n, n), b(n, n);
  for (double& v : a.values()) v = rng.normal();
  for (double& v : b.values()) v = rng.normal();
  for (auto _ : state) {
    Matrix c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_row_log_sum_exp(benchmark::State& state) {
  Rng rng(9);
  Tape warmup_unused;
  Matrix logits(448, 4);
  for (double& v : logits.values()) v = rng.normal();
  for (auto _ : state) {
    Tape tape;
    Tensor t = tape.leaf(logits, false);
    Tensor out = row_log_sum_exp(t);
    benchmark::DoNotOptimize(out.value().data());
  }
}
BENCHMARK(BM_row_log_sum_exp);

void BM_training_step(benchmark::State& state) {
  RunConfig cfg;
  cfg.data.n_unlabeled = 512;
  cfg.data.n_labeled = 40;
  DataConfig dc = cfg.data;
  dc.seed = cfg.seed;
  const OpenSetDataset dataset = generate_gaussian_openset(dc);
  TrainState ts = make_initial_state(cfg);
  Rng rng(11);
  const OpenSetBatch batch =
      sample_batch(dataset, static_cast<std::size_t>(cfg.batch_size),
                   static_cast<std::size_t>(cfg.mu), cfg.augment, rng);
  const LossWeights weights = phase_weights(cfg, 0);
  for (auto _ : state) {
    StepResult res = training_step(ts, batch, cfg, weights);
    benchmark::DoNotOptimize(res.breakdown.total);
  }
}
BENCHMARK(BM_training_step);

void BM_auroc(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(13);
  std::vector<double> id(n), ood(n);
  for (double& v : id) v = rng.normal(0.0, 1.0);
  for (double& v : ood) v = rng.normal(1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(auroc(id, ood));
  }
}
BENCHMARK(BM_auroc)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
