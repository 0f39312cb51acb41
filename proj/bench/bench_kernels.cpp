#include <benchmark/benchmark.h>

#include "embshift/interp.hpp"
#include "embshift/rng.hpp"
#include "embshift/varcal.hpp"

using namespace embshift;

namespace {

Tensor noise(std::size_t side) {
  SeededRng rng(1, 0);
  return randn({side, side, 8}, rng);
}

void BM_Upsample2dReference(benchmark::State &state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor t = noise(side);
  const auto spec = interp::UpsampleSpec::two_d(interp::Method::bicubic, 2 * side, 2 * side);
  for (auto _ : state)
    benchmark::DoNotOptimize(interp::reference::upsample2d(t, spec));
}

void BM_Upsample2dParallel(benchmark::State &state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor t = noise(side);
  const auto spec = interp::UpsampleSpec::two_d(interp::Method::bicubic, 2 * side, 2 * side);
  for (auto _ : state)
    benchmark::DoNotOptimize(interp::upsample2d(t, spec));
}

varcal::MeasureConfig bench_config() {
  auto cfg = varcal::MeasureConfig::canonical(interp::Method::bicubic, interp::Dims::two_d);
  cfg.trials = 200;
  return cfg;
}

void BM_MeasureKSerial(benchmark::State &state) {
  const auto cfg = bench_config();
  for (auto _ : state)
    benchmark::DoNotOptimize(varcal::measure_k_serial(cfg));
}

void BM_MeasureKParallel(benchmark::State &state) {
  const auto cfg = bench_config();
  for (auto _ : state)
    benchmark::DoNotOptimize(varcal::measure_k(cfg));
}

} // namespace

BENCHMARK(BM_Upsample2dReference)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Upsample2dParallel)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MeasureKSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MeasureKParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
