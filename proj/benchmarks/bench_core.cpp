#include <benchmark/benchmark.h>

#include "adun/halting.hpp"
#include "adun/rng.hpp"
#include "adun/solvers.hpp"
#include "adun/training.hpp"

using namespace adun;

namespace {

ProblemInstance bench_instance(int n, int m, int s) {
  auto mat = std::make_shared<const MeasurementMatrix>(gen_matrix(MatrixKind::gaussian, n, m, 1));
  auto sig = gen_sparse_signal(m, s, s, 2);
  return gen_measurement(mat, std::move(sig), std::nullopt, 3);
}

void BM_SoftThreshold(benchmark::State& state) {
  Rng rng(7);
  Vector z(state.range(0));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(soft_threshold(z, 0.1));
}
BENCHMARK(BM_SoftThreshold)->Arg(128)->Arg(512);

void BM_ProjectL1(benchmark::State& state) {
  Rng rng(7);
  Vector z(state.range(0));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(project_l1(z, 1.0));
}
BENCHMARK(BM_ProjectL1)->Arg(128)->Arg(512);

void BM_IstaSolve(benchmark::State& state) {
  auto inst = bench_instance(64, 128, 5);
  double beta = 1.0 / spectral_norm_sq(inst.A());
  for (auto _ : state) benchmark::DoNotOptimize(ista_solve(inst, 0.05, beta, 50, 0.0));
}
BENCHMARK(BM_IstaSolve);

void BM_PgdSolve(benchmark::State& state) {
  auto inst = bench_instance(64, 128, 5);
  Constraint c = Constraint::l1(inst.x().lpNorm<1>());
  for (auto _ : state) benchmark::DoNotOptimize(pgd_solve(inst, c, 0.6, 50, 0.0));
}
BENCHMARK(BM_PgdSolve);

void BM_ForwardPass(benchmark::State& state) {
  auto inst = bench_instance(64, 128, 5);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 8, true, 0);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, inst.y()));
}
BENCHMARK(BM_ForwardPass);

void BM_InferAdaptive(benchmark::State& state) {
  auto inst = bench_instance(64, 128, 5);
  UnfoldedNet net = init_network(NetKind::lista, inst.A(), 8, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 64, 8, 0);
  for (auto _ : state) benchmark::DoNotOptimize(infer_adaptive(net, hp, inst.y(), 0.05));
}
BENCHMARK(BM_InferAdaptive);

void BM_BatchGradients(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  BatchConfig cfg;
  cfg.n = 64;
  cfg.m = 128;
  cfg.s_min = 2;
  cfg.s_max = 12;
  cfg.batch_size = batch;
  cfg.n_batches = 1;
  cfg.master_seed = 5;
  BatchStream stream(cfg);
  auto [x, y] = batch_matrices(stream.batch(0));
  UnfoldedNet net = init_network(NetKind::lista, stream.matrix()->entries, 8, true, 0);
  HaltingParams hp = init_halting(HaltingDesign::learned_q, 64, 8, 0);
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradients(net, hp, x, y, 10.0));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_BatchGradients)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
