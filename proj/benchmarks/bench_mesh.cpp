#include <benchmark/benchmark.h>

#include "merr/mesh.hpp"

using namespace merr;

static void BM_BuildQ4(benchmark::State& state) {
  for (auto _ : state) {
    auto m = mesh::build_mesh(mesh::ElementOrder::q4, 20, 40);
    benchmark::DoNotOptimize(m.nodes.data());
  }
}
BENCHMARK(BM_BuildQ4);

static void BM_BuildQ8(benchmark::State& state) {
  for (auto _ : state) {
    auto m = mesh::build_mesh(mesh::ElementOrder::q8, 40, 80);
    benchmark::DoNotOptimize(m.nodes.data());
  }
}
BENCHMARK(BM_BuildQ8);

static void BM_CoincidenceMap(benchmark::State& state) {
  const auto q4 = mesh::build_mesh(mesh::ElementOrder::q4, 20, 40);
  const auto q8 = mesh::build_mesh(mesh::ElementOrder::q8, 40, 80);
  for (auto _ : state) {
    auto map = mesh::build_coincidence_map(q4, q8);
    benchmark::DoNotOptimize(map.q4_to_q8.data());
  }
}
BENCHMARK(BM_CoincidenceMap);

static void BM_ShapeFunctionsQ8(benchmark::State& state) {
  double acc = 0.0;
  for (auto _ : state) {
    const auto sf = mesh::shape_functions(mesh::ElementOrder::q8, 0.3, -0.7);
    acc += sf.value[0];
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_ShapeFunctionsQ8);

BENCHMARK_MAIN();
