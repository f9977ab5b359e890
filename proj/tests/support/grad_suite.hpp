// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

// Finite-difference sweeps over every autodiff op and over the full training
// loss. Shared by the unit tests (few points) and the acceptance gate.

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "xfields/ad/grad_check.hpp"
#include "xfields/ad/ops.hpp"
#include "xfields/trainer.hpp"

namespace xfields::testing {

using ad::Graph;
using ad::NodeId;

struct OpGradResult {
  std::string op;
  double worst = 0.0;
  std::size_t points = 0;
  std::size_t probes = 0;
};

// Values bounded away from zero so abs/leaky_relu never straddle their kink.
inline Tensor<double> signed_away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// Positions with fractional parts in [0.1, 0.9]; some fall outside the image
// by at least 0.1 px so the clamped branch is exercised too.
inline Tensor<double> off_lattice_positions(const Shape& shape, std::size_t h, std::size_t w,
                                            std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cell_x(-2, static_cast<int>(w));
  std::uniform_int_distribution<int> cell_y(-2, static_cast<int>(h));
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.size(); i += 2) {
    t[i] = cell_x(rng) + frac(rng);
    t[i + 1] = cell_y(rng) + frac(rng);
  }
  return t;
}

using OpBuilder = std::function<NodeId(Graph<double>&, std::mt19937_64&)>;

struct OpCase {
  std::string name;
  OpBuilder build;
};

inline std::vector<OpCase> op_cases() {
  auto param = [](Graph<double>& g, std::mt19937_64& rng, const Shape& s) {
    return g.parameter(random_tensor<double>(s, rng, -1.0, 1.0));
  };
  const Shape s{3, 4, 2};
  std::vector<OpCase> c;
  c.push_back({"add", [=](auto& g, auto& r) { return ad::add(g, param(g, r, s), param(g, r, s)); }});
  c.push_back({"sub", [=](auto& g, auto& r) { return ad::sub(g, param(g, r, s), param(g, r, s)); }});
  c.push_back({"mul", [=](auto& g, auto& r) { return ad::mul(g, param(g, r, s), param(g, r, s)); }});
  c.push_back({"div", [=](auto& g, auto& r) {
                 return ad::div(g, param(g, r, s),
                                g.parameter(random_tensor<double>(s, r, 0.5, 1.5)));
               }});
  c.push_back({"identity", [=](auto& g, auto& r) { return ad::identity(g, param(g, r, s)); }});
  c.push_back({"scale", [=](auto& g, auto& r) { return ad::scale(g, param(g, r, s), -2.5); }});
  c.push_back({"add_scalar", [=](auto& g, auto& r) { return ad::add_scalar(g, param(g, r, s), 0.7); }});
  c.push_back({"abs", [=](auto& g, auto& r) {
                 return ad::abs(g, g.parameter(signed_away_from_zero(s, r)));
               }});
  c.push_back({"exp", [=](auto& g, auto& r) { return ad::exp(g, param(g, r, s)); }});
  c.push_back({"leaky_relu", [=](auto& g, auto& r) {
                 return ad::leaky_relu(g, g.parameter(signed_away_from_zero(s, r)), 0.2);
               }});
  c.push_back({"sum", [=](auto& g, auto& r) { return ad::sum(g, param(g, r, s)); }});
  c.push_back({"mean", [=](auto& g, auto& r) { return ad::mean(g, param(g, r, s)); }});
  c.push_back({"sum_last_axis", [=](auto& g, auto& r) { return ad::sum_last_axis(g, param(g, r, s)); }});
  c.push_back({"mul_broadcast_last", [=](auto& g, auto& r) {
                 return ad::mul_broadcast_last(g, param(g, r, s), param(g, r, {3, 4, 1}));
               }});
  c.push_back({"reshape", [=](auto& g, auto& r) { return ad::reshape(g, param(g, r, s), {4, 6}); }});
  c.push_back({"softmax_last", [=](auto& g, auto& r) {
                 return ad::softmax_last(g, param(g, r, {3, 4, 5}));
               }});
  c.push_back({"slice_last", [=](auto& g, auto& r) {
                 return ad::slice_last(g, param(g, r, {3, 4, 3}), 1);
               }});
  c.push_back({"concat_last", [=](auto& g, auto& r) {
                 return ad::concat_last(g, {param(g, r, s), param(g, r, {3, 4, 1}), param(g, r, s)});
               }});
  c.push_back({"linear", [=](auto& g, auto& r) {
                 return ad::linear(g, param(g, r, {3}), param(g, r, {3, 5}), param(g, r, {5}));
               }});
  c.push_back({"conv2d", [=](auto& g, auto& r) {
                 return ad::conv2d(g, param(g, r, {5, 4, 2}), param(g, r, {3, 3, 2, 3}),
                                   param(g, r, {3}));
               }});
  c.push_back({"upsample2x", [=](auto& g, auto& r) { return ad::upsample2x(g, param(g, r, {3, 2, 2})); }});
  c.push_back({"bilinear_sample", [=](auto& g, auto& r) {
                 const NodeId img = param(g, r, {4, 5, 2});
                 const NodeId pos = g.parameter(off_lattice_positions({3, 3, 2}, 4, 5, r));
                 return ad::bilinear_sample(g, img, pos);
               }});
  return c;
}

/// Reduces an op output to a scalar through fixed random weights, so every
/// output element gets a distinct upstream gradient.
inline NodeId weighted_sum(Graph<double>& g, NodeId out, std::mt19937_64& rng) {
  const NodeId w = g.constant(random_tensor<double>(g.shape(out), rng, -1.0, 1.0));
  return ad::sum(g, ad::mul(g, out, w));
}

inline std::vector<OpGradResult> run_op_gradient_suite(std::size_t points, std::uint64_t seed) {
  std::vector<OpGradResult> results;
  for (const auto& oc : op_cases()) {
    OpGradResult r{oc.name};
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < points; ++i) {
      Graph<double> g;
      const NodeId loss = weighted_sum(g, oc.build(g, rng), rng);
      ad::GradCheckOptions opt;
      opt.kink_radius = 1e-3;
      const auto res = ad::grad_check(g, loss, opt);
      r.worst = std::max(r.worst, res.max_relative_error);
      r.probes += res.probes;
      ++r.points;
    }
    results.push_back(r);
  }
  return results;
}

/// The full reconstruction loss (decoder, projection, warps, consistency,
/// blend, L1) on a tiny 8x8 scene with every parameter randomized.
struct PipelineGradResult {
  double worst = 0.0;
  std::size_t probes = 0;
  std::size_t attempts = 0;
};

inline PipelineGradResult run_pipeline_gradient_check(bool delight, std::uint64_t seed,
                                                      std::size_t max_entries = 0) {
  model::ModelConfig cfg;
  cfg.dims = {{"t", DimensionKind::time, 0.0, 1.0}, {"u", DimensionKind::view_horizontal, 0.0, 1.0}};
  cfg.height = cfg.width = 8;
  cfg.seed_channels = 8;
  cfg.min_channels = 4;
  cfg.delight = delight;

  std::mt19937_64 rng(seed);
  std::vector<Observation> obs;
  for (auto c : {XFieldCoord{0.0, 0.0}, XFieldCoord{1.0, 0.2}, XFieldCoord{0.3, 1.0}}) {
    obs.push_back({c, random_tensor<float>({8, 8, 3}, rng, 0.05, 0.95)});
  }
  PipelineGradResult out;
  // An unlucky draw can put some input within reach of a kink; the contract
  // is that the caller moves the probe point, so redraw.
  for (std::size_t attempt = 0; attempt < 20; ++attempt) {
    ++out.attempts;
    auto params = model::init_params(cfg, obs.size(), seed + attempt).cast<double>();
    // Heads get a wider jitter so warps land well off the sampling lattice.
    for (auto& t : params.tensors()) {
      const double r = t.name.starts_with("head.") ? 0.1 : 0.05;
      for (std::size_t i = 0; i < t.value.size(); ++i) {
        t.value[i] += std::uniform_real_distribution<double>(-r, r)(rng);
      }
    }
    Graph<double> g;
    const auto bound = model::bind_params(g, params, true);
    const std::size_t sources[] = {1, 2};
    const NodeId loss =
        train::build_training_loss<double>(g, bound, cfg, obs, 0, sources);
    ad::GradCheckOptions opt;
    opt.kink_radius = 1e-4;
    opt.max_entries_per_parameter = max_entries;
    opt.seed = seed;
    try {
      const auto res = ad::grad_check(g, loss, opt);
      out.worst = res.max_relative_error;
      out.probes = res.probes;
      return out;
    } catch (const NonDifferentiablePointError&) {
    }
  }
  throw Error("no differentiable probe point found");
}

}  // namespace xfields::testing
