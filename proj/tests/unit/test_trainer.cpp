// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "doctest.h"
#include "support/oracles.hpp"
#include "xfields/dataset.hpp"
#include "xfields/trainer.hpp"

namespace xfields {
namespace {

using ad::Tensor;
using train::neighbor_select;

std::vector<XFieldCoord> grid3x3() {
  std::vector<XFieldCoord> pool;
  for (double v : {0.0, 0.5, 1.0}) {
    for (double u : {0.0, 0.5, 1.0}) pool.push_back({u, v});
  }
  return pool;
}

// A 16x16 translating scene, small enough for quick optimizer runs.
data::SyntheticScene tiny_scene(std::size_t frames = 3) {
  return data::synth_translate(data::make_texture(16, 16, 8, 1), 16, 16, 4.0, frames);
}

model::ModelConfig tiny_config(const data::SyntheticScene& s, bool delight = false) {
  model::ModelConfig cfg;
  cfg.dims = s.manifest.dims;
  cfg.height = cfg.width = 16;
  cfg.seed_channels = 16;
  cfg.min_channels = 8;
  cfg.delight = delight;
  return cfg;
}

TEST_SUITE("trainer") {
  TEST_CASE("neighbor_select examples") {
    const std::vector<XFieldCoord> line{{0.0}, {1.0}};
    CHECK(neighbor_select({0.5}, line, 2) == std::vector<std::size_t>{0, 1});
    CHECK(neighbor_select({0.0}, line, 2) == std::vector<std::size_t>{1});
    CHECK(neighbor_select({0.0}, line, 2, false) == std::vector<std::size_t>{0, 1});
    const auto pool = grid3x3();
    CHECK(neighbor_select({0.5, 0.5}, pool, 4) == std::vector<std::size_t>{1, 3, 5, 7});
    CHECK_THROWS_AS(neighbor_select({0.5}, std::vector<XFieldCoord>{}, 1), ConfigError);
  }

  TEST_CASE("neighbor_select property: excludes the target, sorted by distance, sized") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<XFieldCoord> pool;
      const std::size_t n = 2 + trial % 9;
      for (std::size_t i = 0; i < n; ++i) pool.push_back({u(rng), u(rng)});
      const XFieldCoord target = trial % 2 ? pool[trial % n] : XFieldCoord{u(rng), u(rng)};
      const std::size_t excluded = std::count(pool.begin(), pool.end(), target);
      const std::size_t k = 1 + trial % 5;
      const auto sel = neighbor_select(target, pool, k);
      CHECK(sel.size() == std::min(k, n - excluded));
      for (std::size_t i = 0; i < sel.size(); ++i) {
        CHECK(!(pool[sel[i]] == target));
        if (i > 0) {
          CHECK(squared_distance(pool[sel[i - 1]], target) <= squared_distance(pool[sel[i]], target));
        }
      }
    }
  }

  TEST_CASE("default neighbor count") {
    CHECK(train::default_neighbor_count(3) == 2);
    CHECK(train::default_neighbor_count(9) == 8);
    CHECK(train::default_neighbor_count(25) == 4);
  }

  TEST_CASE("adam: zero gradient, first step, scalar oracle") {
    train::AdamConfig cfg;
    Tensor<double> p({3}, std::vector<double>{0.5, -1.0, 2.0});
    train::AdamMoments<double> zero{Tensor<double>({3}), Tensor<double>({3})};
    const Tensor<double> before = p;
    train::adam_step(p, Tensor<double>({3}), zero, 1, cfg);
    CHECK(p == before);
    // With history, a zero gradient only decays the moments.
    train::AdamMoments<double> m{Tensor<double>({3}, 0.2), Tensor<double>({3}, 0.3)};
    train::adam_step(p, Tensor<double>({3}), m, 2, cfg);
    CHECK(m.first[0] == doctest::Approx(0.18));
    CHECK(m.second[0] == doctest::Approx(0.2997));

    Tensor<double> q({2}, std::vector<double>{1.0, 1.0});
    train::AdamMoments<double> fresh{Tensor<double>({2}), Tensor<double>({2})};
    train::adam_step(q, Tensor<double>({2}, std::vector<double>{3.0, -0.5}), fresh, 1, cfg);
    CHECK(1.0 - q[0] == doctest::Approx(cfg.learning_rate * 3.0 / (3.0 + cfg.epsilon)));
    CHECK(q[1] - 1.0 == doctest::Approx(cfg.learning_rate * 0.5 / (0.5 + cfg.epsilon)));

    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 1);
    Tensor<double> x({4}, std::vector<double>{0.1, 0.2, -0.3, 0.4});
    train::AdamMoments<double> mom{Tensor<double>({4}), Tensor<double>({4})};
    std::vector<testing::ScalarAdam> ref(4);
    std::vector<double> xr(x.data().begin(), x.data().end());
    cfg.learning_rate = 1e-2;
    for (auto& r : ref) r.lr = 1e-2;
    for (int t = 1; t <= 200; ++t) {
      Tensor<double> g({4});
      for (std::size_t i = 0; i < 4; ++i) g[i] = n(rng);
      train::adam_step(x, g, mom, t, cfg);
      for (std::size_t i = 0; i < 4; ++i) xr[i] = ref[i].step(xr[i], g[i]);
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(x[i] - xr[i]) <= 1e-12);
  }

  TEST_CASE("config validation") {
    train::TrainConfig tc;
    CHECK_NOTHROW(tc.validate(3));
    tc.k = 3;
    CHECK_THROWS_AS(tc.validate(3), ConfigError);
    tc.k = 2;
    tc.steps = 0;
    CHECK_THROWS_AS(tc.validate(3), ConfigError);
    tc.steps = 1;
    CHECK_THROWS_AS(tc.validate(1), ConfigError);
  }

  TEST_CASE("step-0 loss equals the linear-blend L1 error") {
    for (bool delight : {false, true}) {
      const auto scene = tiny_scene(4);
      const auto obs = scene.observations();
      const auto cfg = tiny_config(scene, delight);
      train::TrainConfig tc;
      tc.k = 2;
      tc.seed = 5;
      train::Trainer tr(obs, model::init_params(cfg, obs.size(), 1), tc);
      const std::size_t target = tr.target_for_step(0);
      std::vector<XFieldCoord> pool;
      for (const auto& o : obs) pool.push_back(o.coord);
      const auto src = neighbor_select(obs[target].coord, pool, 2);
      double blend_err = 0.0;
      const auto& truth = obs[target].image;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        double mean = 0.0;
        for (std::size_t s : src) mean += obs[s].image[i];
        blend_err += std::abs(mean / src.size() - truth[i]);
      }
      blend_err /= static_cast<double>(truth.size());
      const auto r = tr.step();
      CHECK(r.step == 0);
      CHECK(r.target == target);
      CHECK(r.loss == doctest::Approx(blend_err).epsilon(1e-6));
    }
  }

  TEST_CASE("a contrived zero-loss scene leaves the parameters unchanged") {
    const auto scene = tiny_scene();
    auto obs = scene.observations();
    for (auto& o : obs) o.image.fill(0.5f);
    const auto cfg = tiny_config(scene);
    const auto params = model::init_params(cfg, obs.size(), 3);
    train::TrainConfig tc;
    tc.steps = 3;
    train::Trainer tr(obs, params, tc);
    tr.run();
    for (double l : tr.loss_history()) CHECK(l == 0.0);
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
      CHECK(tr.params().tensors()[i].value == params.tensors()[i].value);
    }
  }

  TEST_CASE("epochs visit every observation once and only observed coordinates") {
    const auto scene = tiny_scene(3);
    const auto obs = scene.observations();
    train::TrainConfig tc;
    tc.seed = 11;
    train::Trainer tr(obs, model::init_params(tiny_config(scene), 3, 0), tc);
    for (std::size_t epoch = 0; epoch < 4; ++epoch) {
      std::set<std::size_t> seen;
      for (std::size_t s = 0; s < 3; ++s) seen.insert(tr.target_for_step(epoch * 3 + s));
      CHECK(seen == std::set<std::size_t>{0, 1, 2});
    }
  }

  TEST_CASE("determinism and checkpoint resume are bitwise") {
    const auto scene = tiny_scene(3);
    const auto obs = scene.observations();
    for (bool delight : {false, true}) {
      const auto cfg = tiny_config(scene, delight);
      train::TrainConfig tc;
      tc.steps = 8;
      tc.seed = 9;
      tc.adam.learning_rate = 1e-3;
      train::Trainer a(obs, model::init_params(cfg, 3, 4), tc);
      train::Trainer b(obs, model::init_params(cfg, 3, 4), tc);
      a.run();
      b.run();
      CHECK(a.loss_history() == b.loss_history());
      for (std::size_t i = 0; i < a.params().tensors().size(); ++i) {
        CHECK(a.params().tensors()[i].value == b.params().tensors()[i].value);
      }

      train::TrainConfig half = tc;
      half.steps = 3;
      train::Trainer c(obs, model::init_params(cfg, 3, 4), half);
      c.run();
      train::Trainer d(obs, c.checkpoint(), tc);
      d.run();
      CHECK(d.loss_history() == a.loss_history());
      for (std::size_t i = 0; i < a.params().tensors().size(); ++i) {
        CHECK(d.params().tensors()[i].value == a.params().tensors()[i].value);
      }
    }
  }

  TEST_CASE("non-finite inputs abort with a diagnostic") {
    const auto scene = tiny_scene(3);
    auto obs = scene.observations();
    obs[1].image[5] = std::numeric_limits<float>::quiet_NaN();
    train::TrainConfig tc;
    tc.steps = 3;
    train::Trainer tr(obs, model::init_params(tiny_config(scene), 3, 0), tc);
    CHECK_THROWS_AS(tr.run(), NonFiniteError);
  }

  TEST_CASE("training lowers the loss on a translating scene") {
    const auto scene = tiny_scene(3);
    const auto obs = scene.observations();
    train::TrainConfig tc;
    tc.steps = 150;
    tc.adam.learning_rate = 1e-3;
    train::Trainer tr(obs, model::init_params(tiny_config(scene), 3, 2), tc);
    tr.run();
    const auto& h = tr.loss_history();
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 15; ++i) {
      first += h[i];
      last += h[h.size() - 1 - i];
    }
    CHECK(last < 0.7 * first);
  }
}

}  // namespace
}  // namespace xfields
