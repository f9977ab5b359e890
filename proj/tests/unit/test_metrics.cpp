// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "json.hpp"
#include "support/oracles.hpp"
#include "xfields/dataset.hpp"
#include "xfields/metrics.hpp"

namespace xfields {
namespace {

using ad::Tensor;
using testing::random_tensor;

double loop_mse(const Tensor<float>& a, const Tensor<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

TEST_SUITE("metrics") {
  TEST_CASE("mse examples and loop oracle") {
    CHECK(metrics::mse(Tensor<float>({4, 4, 3}, 0.3f), Tensor<float>({4, 4, 3}, 0.3f)) == 0.0);
    CHECK(metrics::mse(Tensor<float>({4, 4, 3}, 0.0f), Tensor<float>({4, 4, 3}, 1.0f)) == 1.0);
    CHECK_THROWS_AS(metrics::mse(Tensor<float>({4, 4, 3}), Tensor<float>({4, 5, 3})), ShapeError);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = random_tensor<float>({7, 9, 3}, rng);
      const auto b = random_tensor<float>({7, 9, 3}, rng);
      CHECK(std::abs(metrics::mse(a, b) - loop_mse(a, b)) <= 1e-12);
    }
  }

  TEST_CASE("mse property: symmetric and invariant to a shared pixel permutation") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = random_tensor<float>({5, 6, 3}, rng);
      const auto b = random_tensor<float>({5, 6, 3}, rng);
      CHECK(metrics::mse(a, b) == doctest::Approx(metrics::mse(b, a)).epsilon(1e-14));
      std::vector<std::size_t> perm(30);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Tensor<float> pa(a.shape()), pb(b.shape());
      for (std::size_t p = 0; p < 30; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
          pa[perm[p] * 3 + c] = a[p * 3 + c];
          pb[perm[p] * 3 + c] = b[p * 3 + c];
        }
      }
      CHECK(metrics::mse(pa, pb) == doctest::Approx(metrics::mse(a, b)).epsilon(1e-12));
    }
  }

  TEST_CASE("psnr") {
    CHECK(metrics::psnr_from_mse(0.01) == doctest::Approx(20.0));
    CHECK(metrics::psnr_from_mse(1.0) == doctest::Approx(0.0));
    CHECK(std::isinf(metrics::psnr_from_mse(0.0)));
    const Tensor<float> a({4, 4, 3}, 0.5f);
    CHECK(std::isinf(metrics::psnr(a, a)));
    CHECK(metrics::psnr(a, Tensor<float>({4, 4, 3}, 0.6f)) == doctest::Approx(20.0).epsilon(1e-5));
  }

  TEST_CASE("ssim examples") {
    std::mt19937_64 rng(5);
    const auto a = random_tensor<float>({16, 16, 3}, rng);
    CHECK(metrics::ssim(a, a) == 1.0);
    Tensor<float> inv(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) inv[i] = 1.0f - a[i];
    const double s = metrics::ssim(a, inv);
    CHECK(s < 1.0);
    CHECK(s >= -1.0);
    CHECK_THROWS_AS(metrics::ssim(Tensor<float>({10, 16, 3}), Tensor<float>({10, 16, 3})),
                    ShapeError);
    CHECK_THROWS_AS(metrics::ssim(Tensor<float>({16, 16, 3}), Tensor<float>({16, 17, 3})),
                    ShapeError);
  }

  TEST_CASE("ssim matches a brute-force oracle") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 5; ++trial) {
      const auto a = random_tensor<float>({16, 13 + trial, 3}, rng);
      auto b = a;
      std::normal_distribution<double> noise(0.0, 0.1);
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<float>(b[i] + noise(rng));
      CHECK(std::abs(metrics::ssim(a, b) - testing::ref_ssim(a, b)) <= 1e-6);
    }
  }

  TEST_CASE("epipolar slice of static and translating sequences") {
    std::mt19937_64 rng(7);
    const auto still = random_tensor<float>({6, 8, 3}, rng);
    const std::vector<Tensor<float>> frozen(5, still);
    const auto slice = metrics::epipolar_slice(frozen, 2);
    CHECK(slice.shape() == ad::Shape{5, 8, 3});
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t x = 0; x < 8; ++x) {
        for (std::size_t c = 0; c < 3; ++c) CHECK(slice.at(t, x, c) == still.at(2, x, c));
      }
    }

    // A 1 px/frame rightward shift puts a feature on the diagonal.
    std::vector<Tensor<float>> moving;
    for (std::size_t t = 0; t < 5; ++t) {
      Tensor<float> f({3, 8, 3});
      for (std::size_t c = 0; c < 3; ++c) f.at(1, t + 1, c) = 1.0f;
      moving.push_back(f);
    }
    const auto diag = metrics::epipolar_slice(moving, 1);
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t x = 0; x < 8; ++x) CHECK(diag.at(t, x, 0) == (x == t + 1 ? 1.0f : 0.0f));
    }

    CHECK(metrics::epipolar_slice(std::vector<Tensor<float>>{still}, 0).shape() ==
          ad::Shape{1, 8, 3});
    CHECK_THROWS_AS(metrics::epipolar_slice(frozen, 6), ConfigError);
    const std::vector<Tensor<float>> mixed{still, Tensor<float>({6, 9, 3})};
    CHECK_THROWS_AS(metrics::epipolar_slice(mixed, 0), ShapeError);
  }

  TEST_CASE("evaluate and the report formats") {
    const auto scene =
        data::synth_translate(data::make_texture(16, 16, 8, 1), 16, 16, 4.0, 3);
    const auto obs = scene.observations();
    // Render perfectly at the first coordinate and off by 0.1 elsewhere.
    const metrics::RenderFn render = [&](const XFieldCoord& x) {
      for (const auto& o : obs) {
        if (o.coord == x) {
          if (x == obs[0].coord) return o.image;
          Tensor<float> off = o.image;
          for (std::size_t i = 0; i < off.size(); ++i) off[i] = off[i] > 0.5f ? off[i] - 0.1f : off[i] + 0.1f;
          return off;
        }
      }
      throw Error("unexpected coordinate");
    };
    const std::size_t labels[] = {4, 7, 9};
    const auto report = metrics::evaluate(render, obs, labels);
    REQUIRE(report.images.size() == 3);
    CHECK(report.images[0].index == 4);
    CHECK(report.images[0].mse == 0.0);
    CHECK(std::isinf(report.images[0].psnr_db));
    CHECK(report.images[0].ssim == 1.0);
    CHECK(report.images[1].mse == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(report.mean_mse == doctest::Approx((0.0 + 0.01 + 0.01) / 3).epsilon(1e-4));

    const auto doc = nlohmann::json::parse(report.to_json());
    CHECK(doc["images"].size() == 3);
    CHECK(doc["images"][0]["psnr_db"] == metrics::kPsnrSentinel);
    CHECK(doc["images"][1]["index"] == 7);
    CHECK(doc["images"][1]["coord"].size() == 1);
    CHECK(doc["mean_psnr_db"] == metrics::kPsnrSentinel);
    CHECK(doc.contains("mean_ssim"));
    CHECK(doc.contains("mean_render_ms"));

    const std::string csv = report.to_csv();
    CHECK(csv.rfind("index,coord,mse,psnr_db,ssim,render_ms\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(csv.find("\n4,0,0,999,1,") != std::string::npos);

    CHECK_THROWS_AS(metrics::evaluate(render, std::span<const Observation>{}), ConfigError);
  }
}

}  // namespace
}  // namespace xfields
