// OpenMP kernels against their serial references.

#include <random>

#include <benchmark/benchmark.h>

#include "deeplcc/kernels.hpp"
#include "deeplcc/scenarios.hpp"
#include "deeplcc/vehicle_dynamics.hpp"

namespace {

using namespace deeplcc;

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = d(rng);
  return M;
}

// Combined input of the default collection: 3 channels, T = 2000, order 86.
void BM_HankelSerial(benchmark::State& state) {
  const Eigen::MatrixXd s = random_matrix(3, 2000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::hankel_serial(s, 86));
}
void BM_HankelParallel(benchmark::State& state) {
  const Eigen::MatrixXd s = random_matrix(3, 2000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::hankel_parallel(s, 86));
}

// Stacked [Yf; Uf; Yp] of the default horizons against L columns.
void BM_GramSerial(benchmark::State& state) {
  const auto L = state.range(0);
  const Eigen::MatrixXd X = random_matrix(800, L, 2);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(800);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::weighted_gram_serial(X, w));
}
void BM_GramParallel(benchmark::State& state) {
  const auto L = state.range(0);
  const Eigen::MatrixXd X = random_matrix(800, L, 2);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(800);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::weighted_gram_parallel(X, w));
}

// Independent all-human brake runs, one per seed.
void run_batch(benchmark::State& state, bool parallel) {
  const PlatoonConfig cfg = make_platoon(8, {3, 6}, OvmParams{}, 0.2, 7);
  const ProfileWithPhases p = brake_profile();
  const auto head = p.profile.sample(cfg.dt_control);
  const std::size_t runs = 4;
  for (auto _ : state) {
    std::vector<TrajectoryLog> logs(runs);
    auto task = [&](std::size_t i) {
      ClosedLoopOptions o;
      o.seed = i + 1;
      logs[i] = simulate_closed_loop(cfg, nullptr, head, p.profile.duration(), o);
    };
    if (parallel) {
      kernels::run_batch_parallel(runs, task);
    } else {
      kernels::run_batch_serial(runs, task);
    }
    benchmark::DoNotOptimize(logs);
  }
}
void BM_BatchSerial(benchmark::State& state) { run_batch(state, false); }
void BM_BatchParallel(benchmark::State& state) { run_batch(state, true); }

}  // namespace

BENCHMARK(BM_HankelSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HankelParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GramSerial)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GramParallel)->Arg(256)->Arg(512)->Arg(1931)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
