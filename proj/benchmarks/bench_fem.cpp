#include <benchmark/benchmark.h>

#include "merr/fem.hpp"
#include "merr/mesh.hpp"

using namespace merr;

static void BM_ElementStiffnessQ4(benchmark::State& state) {
  const auto m = mesh::build_mesh(mesh::ElementOrder::q4, 20, 40);
  for (auto _ : state) {
    auto k = fem::element_stiffness(m, 100, 2e11, 0.28, 0.005);
    benchmark::DoNotOptimize(k.data());
  }
}
BENCHMARK(BM_ElementStiffnessQ4);

static void BM_ElementStiffnessQ8(benchmark::State& state) {
  const auto m = mesh::build_mesh(mesh::ElementOrder::q8, 40, 80);
  for (auto _ : state) {
    auto k = fem::element_stiffness(m, 100, 2e11, 0.28, 0.005);
    benchmark::DoNotOptimize(k.data());
  }
}
BENCHMARK(BM_ElementStiffnessQ8);

static void BM_SolveQ4(benchmark::State& state) {
  const auto m = mesh::build_mesh(mesh::ElementOrder::q4, 20, 40);
  fem::PlateSolver solver(m, 0.28, 0.005);
  const Eigen::VectorXd moduli = Eigen::VectorXd::Constant(m.element_count(), 2e11);
  for (auto _ : state) {
    auto u = solver.solve(moduli, 1e5);
    benchmark::DoNotOptimize(u.data());
  }
}
BENCHMARK(BM_SolveQ4);

static void BM_SolveQ8(benchmark::State& state) {
  const auto m = mesh::build_mesh(mesh::ElementOrder::q8, 40, 80);
  fem::PlateSolver solver(m, 0.28, 0.005);
  const Eigen::VectorXd moduli = Eigen::VectorXd::Constant(m.element_count(), 2e11);
  for (auto _ : state) {
    auto u = solver.solve(moduli, 1e5);
    benchmark::DoNotOptimize(u.data());
  }
}
BENCHMARK(BM_SolveQ8);
