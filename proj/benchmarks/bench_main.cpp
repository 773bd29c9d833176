#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "lockin/comparison.hpp"
#include "lockin/extremal.hpp"
#include "lockin/family.hpp"
#include "lockin/sim.hpp"

using namespace lockin;

namespace {

struct Setup {
  std::unique_ptr<CascadeModel> model;
  Gauge gauge;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup out;
    out.model = std::make_unique<CascadeModel>(default_inverter_model(InverterParams::preset("version-I")));
    out.gauge = build_gauge(out.model->A());
    return out;
  }();
  return s;
}

const CycleFamily& family() {
  static const CycleFamily fam = build_family(setup().gauge, *setup().model);
  return fam;
}

}  // namespace

static void BM_KktCold(benchmark::State& state) {
  const Setup& s = setup();
  const PllState p{0.7, 1.3};
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_kkt(p, 100.0, Sense::Min, s.gauge, *s.model));
  }
}
BENCHMARK(BM_KktCold);

static void BM_KktWarm(benchmark::State& state) {
  const Setup& s = setup();
  const PllState p{0.7, 1.3};
  const ExtremalPoint warm = solve_kkt(PllState{0.69, 1.3}, 100.0, Sense::Min, s.gauge, *s.model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_kkt(p, 100.0, Sense::Min, s.gauge, *s.model, &warm));
  }
}
BENCHMARK(BM_KktWarm);

static void BM_ComparisonStep(benchmark::State& state) {
  const Setup& s = setup();
  const ComparisonSystem sys =
      make_comparison_system(100.0, s.gauge, *s.model, 0.05, state.range(0) != 0);
  const DaeState y0 = comparison_state(sys, PllState{0.5, 0.1}, Vec2(0.01, 0.0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(step(sys.dae, y0, 1e-3));
  }
}
BENCHMARK(BM_ComparisonStep)->Arg(0)->Arg(1);

static void BM_FindCycle(benchmark::State& state) {
  const Setup& s = setup();
  const double V = static_cast<double>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(find_limit_cycle(V, 0.1, s.gauge, *s.model));
  }
}
BENCHMARK(BM_FindCycle)->Arg(10)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_QueryVpll(benchmark::State& state) {
  const CycleFamily& fam = family();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<PllState> pts(1024);
  for (auto& p : pts) p = PllState{2.0 * u(rng), 20.0 * u(rng)};
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(query_vpll(pts[i++ & 1023], fam));
  }
}
BENCHMARK(BM_QueryVpll);

static void BM_Simulate(benchmark::State& state) {
  const Setup& s = setup();
  Vec6 x0 = Vec6::Zero();
  x0[0] = 1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate(x0, *s.model, s.gauge));
  }
}
BENCHMARK(BM_Simulate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
