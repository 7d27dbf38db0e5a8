// Hot spots of the sampler and the diagnostics. The marginal integrator dominates a sweep.

#include <benchmark/benchmark.h>

#include "scalemix/diagnostics.hpp"
#include "scalemix/inference.hpp"
#include "scalemix/simulator.hpp"
#include "scalemix/stable.hpp"

using namespace scalemix;

static void StableDraw(benchmark::State& st) {
  Rng rng = make_stream(1, 0);
  const StableParams p{0.5, 1.0, 1.0, 0.0};
  for (auto _ : st) benchmark::DoNotOptimize(sample_stable(p, rng));
}
BENCHMARK(StableDraw);

static void IntegratorBuild(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(MarginalIntegrator(MixtureMarginal{0.4, 1.3}));
}
BENCHMARK(IntegratorBuild);

static void IntegratorEvaluate(benchmark::State& st) {
  const MarginalIntegrator integ(MixtureMarginal{0.01 * static_cast<double>(st.range(0)), 1.3});
  double x = 0.1;
  for (auto _ : st) {
    benchmark::DoNotOptimize(integ.evaluate(x));
    x = x > 1e4 ? 0.1 : x * 1.7;
  }
}
BENCHMARK(IntegratorEvaluate)->Arg(20)->Arg(50)->Arg(90);

static void IntegratorQuantile(benchmark::State& st) {
  const MarginalIntegrator integ(MixtureMarginal{0.4, 1.3});
  double p = 0.01;
  for (auto _ : st) {
    benchmark::DoNotOptimize(integ.quantile(p, 1.0 - p));
    p = p > 0.98 ? 0.01 : p + 0.0137;
  }
}
BENCHMARK(IntegratorQuantile);

static void BivariateNormal(benchmark::State& st) {
  double h = -2.0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(bivariate_normal_upper(h, 0.7, 0.6));
    h = h > 3.0 ? -2.0 : h + 0.11;
  }
}
BENCHMARK(BivariateNormal);

static void MinRatioQuadrature(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(min_ratio_expectation(0.8, 0.7, 0.5, 0.6));
}
BENCHMARK(MinRatioQuadrature)->Unit(benchmark::kMillisecond);

static void SimulateField(benchmark::State& st) {
  const ProcessSpec s = build_scenario(2, static_cast<int>(st.range(0)), 16);
  for (auto _ : st) benchmark::DoNotOptimize(simulate_field(s));
}
BENCHMARK(SimulateField)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

static void SamplerSweep(benchmark::State& st) {
  const ProcessSpec s = build_scenario(1, static_cast<int>(st.range(0)), 16);
  const Dataset d = Dataset::from_simulation(simulate_field(s));
  ModelSpec m;
  m.knots = s.knots;
  m.kernel = s.kernel;
  m.gamma = s.gamma;
  ChainConfig c;
  c.iterations = 1'000'000;
  c.burn_in = 1'000'000;
  Sampler smp(d, m, PriorSpec{}, c, default_initial_state(d, m));
  for (auto _ : st) smp.sweep();
}
BENCHMARK(SamplerSweep)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
