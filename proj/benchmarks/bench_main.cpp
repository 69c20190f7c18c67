#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "crewfolio/backtest.hpp"
#include "crewfolio/digest.hpp"
#include "crewfolio/market_data.hpp"
#include "crewfolio/metrics.hpp"
#include "crewfolio/optimizer.hpp"

using namespace crewfolio;

namespace {

double uniform_open(std::mt19937_64& engine) {
  return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

ReturnPanel synth_panel(std::size_t rows, std::size_t assets) {
  std::mt19937_64 engine(7);
  ReturnPanel panel;
  for (std::size_t a = 0; a < assets; ++a)
    panel.assets.push_back("A" + std::to_string(a));
  char buf[16];
  for (std::size_t t = 0; t < rows; ++t) {
    std::snprintf(buf, sizeof buf, "%04zu-01-01", 1000 + t);
    panel.dates.emplace_back(buf);
    for (std::size_t a = 0; a < assets; ++a)
      panel.values.push_back(0.002 * (uniform_open(engine) - 0.4));
  }
  return panel;
}

void BM_SimplexProjection(benchmark::State& state) {
  std::mt19937_64 engine(3);
  std::vector<double> v(state.range(0));
  for (auto& x : v) x = uniform_open(engine) * 2.0 - 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(project_to_simplex(v));
}
BENCHMARK(BM_SimplexProjection)->Arg(10)->Arg(100)->Arg(1000);

void BM_SharpeObjective(benchmark::State& state) {
  ReturnPanel panel = synth_panel(state.range(0), 10);
  std::vector<double> w(10, 0.1);
  MetricsConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(sharpe_objective_raw(w, panel, cfg));
}
BENCHMARK(BM_SharpeObjective)->Arg(60)->Arg(250)->Arg(1000);

void BM_SharpeGradient(benchmark::State& state) {
  ReturnPanel panel = synth_panel(state.range(0), 10);
  std::vector<double> w(10, 0.1);
  MetricsConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(sharpe_gradient(w, panel, cfg));
}
BENCHMARK(BM_SharpeGradient)->Arg(60)->Arg(250);

void BM_OptimizeStatic(benchmark::State& state) {
  ReturnPanel panel = synth_panel(60, state.range(0));
  MetricsConfig mcfg;
  OptimizerConfig ocfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(optimize_static(panel, mcfg, ocfg));
}
BENCHMARK(BM_OptimizeStatic)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_OptimizeRolling(benchmark::State& state) {
  ReturnPanel panel = synth_panel(state.range(0), 5);
  MetricsConfig mcfg;
  OptimizerConfig ocfg;
  ocfg.restarts = 8;
  for (auto _ : state)
    benchmark::DoNotOptimize(optimize_rolling(panel, mcfg, ocfg, 30, 30));
}
BENCHMARK(BM_OptimizeRolling)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_FullReport(benchmark::State& state) {
  ReturnPanel panel = synth_panel(state.range(0), 10);
  WeightVector w = equal_weights(panel.assets);
  BacktestResult bt = run_static(panel, w);
  MetricsConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(full_report(bt.portfolio_returns, &w, nullptr, cfg));
}
BENCHMARK(BM_FullReport)->Arg(250)->Arg(1666);

void BM_Sha256(benchmark::State& state) {
  std::string payload(state.range(0), 'x');
  for (auto _ : state) benchmark::DoNotOptimize(sha256_hex(payload));
}
BENCHMARK(BM_Sha256)->Arg(1 << 10)->Arg(1 << 20);

}  // namespace

BENCHMARK_MAIN();
