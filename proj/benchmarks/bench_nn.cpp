#include <benchmark/benchmark.h>

#include "merr/model.hpp"
#include "merr/rng.hpp"

using namespace merr;

namespace {

model::ModelDims desk_dims() {
  model::ModelDims d;
  d.h2 = 512;
  return d;  // 1722-wide input/error head, 19682-wide super head
}

nn::Matrix<float> batch_inputs(Eigen::Index d, Eigen::Index n) {
  rng::Stream s(5, rng::Domain::probe, 99);
  nn::Matrix<float> x(d, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < d; ++r) {
      x(r, c) = static_cast<float>(1e-3 * s.normal());
    }
  }
  return x;
}

}  // namespace

static void BM_ForwardEvalBatch32(benchmark::State& state) {
  auto m = model::PinnModel<float>::create(desk_dims(), 1);
  const auto x = batch_inputs(m.dims.input, 32);
  for (auto _ : state) {
    auto out = m.predict(x, nn::Mode::eval, nullptr);
    benchmark::DoNotOptimize(out.e_pred.data());
  }
}
BENCHMARK(BM_ForwardEvalBatch32)->Unit(benchmark::kMillisecond);

static void BM_TrainStepBatch32(benchmark::State& state) {
  auto m = model::PinnModel<float>::create(desk_dims(), 1);
  const auto x = batch_inputs(m.dims.input, 32);
  const nn::Matrix<float> ge = nn::Matrix<float>::Constant(m.dims.out_error, 32, 1e-9f);
  const nn::Matrix<float> gu = nn::Matrix<float>::Constant(m.dims.out_super, 32, 1e-9f);
  auto params = m.params();
  model::Adam<float> adam;
  std::uint64_t k = 0;
  for (auto _ : state) {
    rng::Stream drop(2, rng::Domain::dropout, k++);
    m.forward(x, nn::Mode::train, &drop);
    m.zero_grad();
    m.backward(ge, gu);
    adam.step(params, 1e-5);
  }
}
BENCHMARK(BM_TrainStepBatch32)->Unit(benchmark::kMillisecond);

static void BM_McDropoutPass(benchmark::State& state) {
  auto m = model::PinnModel<float>::create(desk_dims(), 1);
  const nn::Vector<float> u = batch_inputs(m.dims.input, 1).col(0);
  std::uint64_t k = 0;
  for (auto _ : state) {
    rng::Stream stream(3, rng::Domain::mc_dropout, k++);
    const nn::Matrix<float> x = u;
    auto out = m.predict(x, nn::Mode::mc_dropout, &stream);
    benchmark::DoNotOptimize(out.u_super.data());
  }
}
BENCHMARK(BM_McDropoutPass)->Unit(benchmark::kMillisecond);
