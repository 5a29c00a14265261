#include "dissect/decouple.hpp"
#include "dissect/fixtures.hpp"
#include "dissect/gp.hpp"
#include "dissect/mna.hpp"
#include "dissect/recover.hpp"
#include "dissect/simulate.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace dissect;

namespace {

const Vector kOscParams{{1.7e-3, 220e-9}};

void BM_Assemble(benchmark::State& state) {
  const DaeSystem sys = build_dae(load_fixture("rectifier"));
  const Vector x = Vector::Constant(static_cast<Index>(sys.size()), 0.1);
  const Vector p{{65.0, 85.0}};
  for (auto _ : state) benchmark::DoNotOptimize(assemble(sys, x, 1e-3, p));
}
BENCHMARK(BM_Assemble);

void BM_DecoupleLevel2(benchmark::State& state) {
  const DaeSystem sys = build_dae(load_fixture("rectifier"));
  for (auto _ : state) benchmark::DoNotOptimize(decouple_level2(decouple_level1(sys)));
}
BENCHMARK(BM_DecoupleLevel2)->Unit(benchmark::kMillisecond);

void BM_IntegrateFull(benchmark::State& state) {
  const DaeSystem sys = build_dae(load_fixture("oscillator-v"));
  const Vector x0 = consistent_initial(sys, Vector::Zero(5), 0.0, kOscParams);
  const auto grid = uniform_grid(0.0, 1e-3, 1e-6);
  for (auto _ : state) benchmark::DoNotOptimize(integrate_dae(sys, x0, grid, kOscParams));
}
BENCHMARK(BM_IntegrateFull)->Unit(benchmark::kMillisecond);

void BM_IntegrateReduced(benchmark::State& state) {
  const DaeSystem sys = build_dae(load_fixture("oscillator-v"));
  const DecouplingL1 d = decouple_level1(sys);
  const Vector y0 = d.split(consistent_initial(sys, Vector::Zero(5), 0.0, kOscParams)).complement_part;
  const auto grid = uniform_grid(0.0, 1e-3, 1e-6);
  for (auto _ : state) benchmark::DoNotOptimize(integrate_reduced_ode(d, y0, grid, kOscParams));
}
BENCHMARK(BM_IntegrateReduced)->Unit(benchmark::kMillisecond);

std::vector<Observation> gp_data(std::size_t n) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Observation> data;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x{{u(rng), u(rng), u(rng)}};
    data.push_back({x, std::sin(x.sum())});
  }
  return data;
}

void BM_GpFit(benchmark::State& state) {
  const auto data = gp_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_hyperparameters(data, 1));
}
BENCHMARK(BM_GpFit)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_GpPredictGrid(benchmark::State& state) {
  const auto data = gp_data(100);
  const GpModel m = GpModel::condition(data, default_hyperparameters(3));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Matrix inputs(3, 51 * 81);
  for (Index j = 0; j < inputs.cols(); ++j) inputs.col(j) = Vector{{u(rng), u(rng), u(rng)}};
  Vector mean, var;
  for (auto _ : state) {
    m.predict_many(inputs, mean, var);
    benchmark::DoNotOptimize(var.data());
  }
}
BENCHMARK(BM_GpPredictGrid)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
