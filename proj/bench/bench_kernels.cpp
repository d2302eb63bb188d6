// Serial reference vs parallel kernels. Run with --benchmark_filter to pick.
#include "fluidrisk/bridge.hpp"
#include "fluidrisk/oracle.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <memory>

using namespace fluidrisk;

namespace {

FluidModel model_a() {
  Matrix c(2, 2), d(2, 2);
  c << -1, 0.9, 0.8, -1;
  d << 0.1, 0, 0, 0.2;
  return make_model("MODEL-A", {1, -1}, DurationKernel::constant(c, d, 1.0), Vector::Unit(2, 0),
                    Vector::Zero(2), Matrix::Zero(2, 2));
}

// state shared by the operator benchmarks: context and a 2-bridge to act on
struct Fixture {
  FluidModel model = model_a();
  LevelDurationGrid grid;
  std::unique_ptr<BridgeContext> ctx;
  BridgeSlice b2;
  explicit Fixture(int cells) : grid(8.0 / cells, cells, 32.0 / (2 * cells), 2 * cells) {
    ctx = std::make_unique<BridgeContext>(model, grid, 0.0, 0.0);
    b2 = bridge2(*ctx, Exec::parallel);
  }
};

Fixture& fixture(int cells) {
  static std::map<int, std::unique_ptr<Fixture>> cache;
  auto& f = cache[cells];
  if (!f) f = std::make_unique<Fixture>(cells);
  return *f;
}

Exec exec_of(const benchmark::State& st) { return st.range(1) ? Exec::parallel : Exec::serial; }

void BM_Bridge2(benchmark::State& st) {
  auto& f = fixture(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(bridge2(*f.ctx, exec_of(st)).data());
}

void BM_GammaFirst(benchmark::State& st) {
  auto& f = fixture(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(gamma_first(*f.ctx, f.b2, exec_of(st)).data());
}

void BM_GammaLast(benchmark::State& st) {
  auto& f = fixture(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(gamma_last(*f.ctx, f.b2, exec_of(st)).data());
}

void BM_GammaMiddle(benchmark::State& st) {
  auto& f = fixture(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(gamma_middle(*f.ctx, f.b2, f.b2, exec_of(st)).data());
}

void BM_McFirstReturn(benchmark::State& st) {
  const auto m = model_a();
  for (auto _ : st)
    benchmark::DoNotOptimize(mc_first_return(m, 0, 0, 0, st.range(0), 1000, 1, exec_of(st)));
}

}  // namespace

BENCHMARK(BM_Bridge2)->ArgsProduct({{16, 32}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GammaFirst)->ArgsProduct({{16, 32}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GammaLast)->ArgsProduct({{16, 32}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GammaMiddle)->ArgsProduct({{16, 32}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_McFirstReturn)->ArgsProduct({{20000}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
