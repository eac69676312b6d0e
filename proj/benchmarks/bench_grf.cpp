#include <benchmark/benchmark.h>

#include "merr/grf.hpp"
#include "merr/mesh.hpp"
#include "merr/rng.hpp"

using namespace merr;

namespace {

grf::GrfSpec production_spec() {
  const auto q4 = mesh::build_mesh(mesh::ElementOrder::q4, 20, 40);
  const auto q8 = mesh::build_mesh(mesh::ElementOrder::q8, 40, 80);
  return grf::make_material_spec(q4, q8);
}

}  // namespace

static void BM_CorrelationFactor4000(benchmark::State& state) {
  const auto spec = production_spec();
  for (auto _ : state) {
    auto f = grf::build_correlation_factor(spec);
    benchmark::DoNotOptimize(f.l.data());
  }
}
BENCHMARK(BM_CorrelationFactor4000)->Unit(benchmark::kMillisecond);

static void BM_SampleRealization4000(benchmark::State& state) {
  const auto spec = production_spec();
  const auto f = grf::build_correlation_factor(spec);
  std::uint64_t k = 0;
  for (auto _ : state) {
    rng::Stream stream(1, rng::Domain::sample, k++);
    auto real = grf::sample_realization(f, spec, stream);
    benchmark::DoNotOptimize(real.e_q8.data());
  }
}
BENCHMARK(BM_SampleRealization4000)->Unit(benchmark::kMillisecond);
