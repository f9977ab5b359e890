// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

// Hot paths: the convolution and sampler kernels, Jacobian decoding, a full
// rendered frame and one optimizer step.

#include <benchmark/benchmark.h>

#include <random>

#include "xfields/ad/ops.hpp"
#include "xfields/dataset.hpp"
#include "xfields/render.hpp"
#include "xfields/trainer.hpp"

namespace xfields {
namespace {

using ad::Graph;
using ad::Tensor;

Tensor<float> noise(const ad::Shape& shape, std::uint64_t seed, float lo = -1.f, float hi = 1.f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto ch = static_cast<std::size_t>(state.range(1));
  const auto x = noise({side, side, ch}, 1);
  const auto w = noise({3, 3, ch, ch}, 2);
  const auto b = noise({ch}, 3);
  for (auto _ : state) {
    Graph<float> g;
    const auto out = ad::conv2d(g, g.parameter(x), g.parameter(w), g.parameter(b));
    const auto loss = ad::sum(g, out);
    g.forward();
    benchmark::DoNotOptimize(g.backward(loss));
  }
  state.SetItemsProcessed(state.iterations() * side * side * ch * ch * 9);
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({16, 32})->Args({32, 16})->Args({64, 16});

void BM_BilinearSample(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto img = noise({side, side, 3}, 4, 0.f, 1.f);
  const auto pos = noise({side, side, 2}, 5, -2.f, static_cast<float>(side) + 1.f);
  for (auto _ : state) {
    Graph<float> g;
    const auto out = ad::bilinear_sample(g, g.parameter(img), g.parameter(pos));
    const auto loss = ad::sum(g, out);
    g.forward();
    benchmark::DoNotOptimize(g.backward(loss));
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_BilinearSample)->Arg(64)->Arg(256);

model::ModelConfig bench_config() {
  model::ModelConfig cfg;
  cfg.dims = {{"t", DimensionKind::time, 0.0, 1.0}};
  return cfg;
}

void BM_EvaluateJacobian(benchmark::State& state) {
  const auto params = model::init_params(bench_config(), 3, 1);
  double t = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model::evaluate_jacobian(params, {t}));
    t = t > 0.9 ? 0.0 : t + 0.1;
  }
}
BENCHMARK(BM_EvaluateJacobian)->Unit(benchmark::kMillisecond);

void BM_RenderFrame(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto scene =
      data::synth_translate(data::make_texture(64, 64, 40, 1), 64, 64, 8.0, 3);
  auto m = std::make_shared<renderd::Model>();
  m->name = "bench";
  m->params = model::init_params(bench_config(), 3, 1);
  m->observations = scene.observations();
  m->image_indices = {0, 1, 2};
  const renderd::Renderer r(m);
  for (auto _ : state) benchmark::DoNotOptimize(r.render_frame({0.3}, side, side));
}
BENCHMARK(BM_RenderFrame)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto scene =
      data::synth_translate(data::make_texture(64, 64, 40, 1), 64, 64, 8.0, 3);
  const auto obs = scene.observations();
  train::TrainConfig tc;
  tc.steps = 1u << 30;
  train::Trainer tr(obs, model::init_params(bench_config(), obs.size(), 1), tc);
  for (auto _ : state) benchmark::DoNotOptimize(tr.step());
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace xfields

BENCHMARK_MAIN();
