#include <benchmark/benchmark.h>

#include "difflab/attack.hpp"
#include "difflab/chain.hpp"
#include "difflab/data_io.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/rng.hpp"
#include "difflab/schedule.hpp"

using namespace difflab;

namespace {

struct Fixture {
  Shape shape;
  NoiseSchedule schedule;
  DenoiserModel model;
  Sample x0;
  Condition cond = Condition::cls(0, 1.0);

  Fixture(int side, int T)
      : shape{side, side, 1},
        schedule(build_schedule(T, 1e-4, 0.02, 1.0, HFormula::LogSnrDiff)) {
    SynthSpec spec;
    spec.shape = shape;
    spec.templates = {"horizontal-stripes", "vertical-stripes"};
    spec.stds = {0.2, 0.2};
    spec.samples_per_class = 1;
    model = synth_model(spec);
    std::mt19937_64 rng = make_rng(7, 0);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    x0 = Sample(shape);
    for (double& v : x0.data) v = u(rng);
  }
};

}  // namespace

static void BM_PosteriorNoise(benchmark::State& st) {
  const Fixture fx(static_cast<int>(st.range(0)), 10);
  std::mt19937_64 rng = make_rng(3, 0);
  const Sample x_t =
      forward_marginal_sample(fx.x0, 5, gaussian_sample(fx.shape, rng),
                              fx.schedule);
  for (auto _ : st)
    benchmark::DoNotOptimize(
        predict_noise(fx.model, x_t, 5, fx.cond, fx.schedule));
  st.SetItemsProcessed(st.iterations());
}
BENCHMARK(BM_PosteriorNoise)->Arg(8)->Arg(16)->Arg(32);

static void BM_Invert(benchmark::State& st) {
  const Fixture fx(16, static_cast<int>(st.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : st)
    benchmark::DoNotOptimize(
        invert(fx.x0, fx.cond, fx.model, fx.schedule, ++seed));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_Invert)->Arg(10)->Arg(20)->Arg(50);

static void BM_Replay(benchmark::State& st) {
  const Fixture fx(16, static_cast<int>(st.range(0)));
  const NoiseMapStack stack = invert(fx.x0, fx.cond, fx.model, fx.schedule, 1);
  Sample delta(fx.shape, 0.01);
  for (auto _ : st)
    benchmark::DoNotOptimize(
        denoise_chain(stack, fx.model, delta, fx.schedule));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_Replay)->Arg(10)->Arg(20)->Arg(50);

static void BM_RgfEstimate(benchmark::State& st) {
  const Fixture fx(16, 10);
  const NoiseMapStack stack = invert(fx.x0, fx.cond, fx.model, fx.schedule, 1);
  const Sample delta(fx.shape);
  ChainFn chain = [&](const Sample& d) {
    return denoise_chain(stack, fx.model, d, fx.schedule);
  };
  const Sample base = chain(delta);
  Sample g_base(fx.shape, 1.0);
  std::uint64_t seed = 0;
  for (auto _ : st)
    benchmark::DoNotOptimize(rgf_estimate(chain, delta, base, g_base,
                                          static_cast<int>(st.range(0)), 1e-3,
                                          ++seed));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_RgfEstimate)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
