// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "support/oracles.hpp"
#include "support/tiny_model.hpp"
#include "xfields/render.hpp"

namespace xfields {
namespace {

using ad::Tensor;
using renderd::Renderer;

TEST_SUITE("render") {
  TEST_CASE("render source count") {
    CHECK(renderd::render_source_count(3, 2) == 3);
    CHECK(renderd::render_source_count(9, 4) == 5);
    CHECK(renderd::render_source_count(25, 0) == 5);
    CHECK(renderd::render_source_count(3, 0) == 3);
  }

  TEST_CASE("renders are deterministic and coordinates are clamped") {
    const auto r = testing::tiny_renderer();
    const auto a = r->render_frame({0.37});
    CHECK(a.shape() == ad::Shape{16, 16, 3});
    CHECK(a == r->render_frame({0.37}));
    CHECK(r->render_frame({1.7}) == r->render_frame({1.0}));
    CHECK(r->render_frame({-3.0}) == r->render_frame({0.0}));
    CHECK_THROWS_AS(r->render_frame({0.5, 0.5}), CoordinateLengthError);
    CHECK_THROWS_AS(r->render_frame({std::nan("")}), ConfigError);
    CHECK(r->render_frame({0.5}, 24, 8).shape() == ad::Shape{8, 24, 3});
    CHECK_THROWS_AS(Renderer(nullptr), ConfigError);
  }

  TEST_CASE("sources include a coincident observation, nearest first") {
    const auto r = testing::tiny_renderer();
    const auto s = r->sources_for({0.0});
    REQUIRE(s.size() == 3);
    CHECK(s[0] == 0);
    CHECK(s[1] == 1);
    CHECK(s[2] == 2);
  }

  TEST_CASE("with zero heads a render is the mean of its sources") {
    auto m = testing::tiny_model();
    m.params = model::init_params(m.config(), m.observations.size(), 2);
    const Renderer r(std::make_shared<const renderd::Model>(m));
    const auto f = r.render_frame({0.25});
    double worst = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      double mean = 0.0;
      for (const auto& o : m.observations) mean += o.image[i] / 3.0;
      worst = std::max(worst, std::abs(mean - f[i]));
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("effects") {
    const auto r = testing::tiny_renderer();
    CHECK(r->render_effect({0.4}, 0, 0.3, 1) == r->render_frame({0.4}));
    CHECK(r->render_effect({0.4}, 0, 0.0, 7) == r->render_frame({0.4}));
    CHECK_THROWS_AS(r->render_effect({0.4}, 1, 0.1, 3), ConfigError);

    const auto coords = r->effect_coords({0.5}, 0, 0.8, 5);
    REQUIRE(coords.size() == 5);
    CHECK(coords[0][0] == 0.0);  // clamped from -0.3
    CHECK(coords[2][0] == doctest::Approx(0.5));
    CHECK(coords[3][0] == doctest::Approx(0.9));
    CHECK(coords[4][0] == 1.0);

    const auto eff = r->render_effect({0.5}, 0, 0.8, 5);
    Tensor<float> mean(eff.shape());
    for (const auto& c : coords) {
      const auto f = r->render_frame(c);
      for (std::size_t i = 0; i < f.size(); ++i) mean[i] += f[i] / 5.0f;
    }
    CHECK(testing::max_abs_diff(eff, mean) <= 1e-6);
  }

  TEST_CASE("resize_bilinear") {
    std::mt19937_64 rng(9);
    const auto img = testing::random_tensor<float>({6, 5, 3}, rng);
    CHECK(renderd::resize_bilinear(img, 5, 6) == img);
    const auto flat = renderd::resize_bilinear(Tensor<float>({6, 5, 3}, 0.25f), 13, 3);
    CHECK(flat.shape() == ad::Shape{3, 13, 3});
    for (float v : flat.data()) CHECK(v == doctest::Approx(0.25f));

    // Pixel-centre alignment: output (x + 0.5) * in / out - 0.5 in source pixels.
    const auto up = renderd::resize_bilinear(img, 10, 12);
    for (std::size_t y = 0; y < 12; ++y) {
      for (std::size_t x = 0; x < 10; ++x) {
        const double sx = (x + 0.5) * 0.5 - 0.5, sy = (y + 0.5) * 0.5 - 0.5;
        for (std::size_t c = 0; c < 3; ++c) {
          CHECK(up.at(y, x, c) == doctest::Approx(testing::ref_bilinear(img, sx, sy, c)).epsilon(1e-5));
        }
      }
    }
    CHECK_THROWS_AS(renderd::resize_bilinear(img, 0, 4), ConfigError);
  }
}

}  // namespace
}  // namespace xfields
