// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "xfields/dataset.hpp"
#include "xfields/image_io.hpp"
#include "xfields/model.hpp"

namespace xfields {
namespace {

using ad::Tensor;
using data::HoldoutProtocol;

const char* kMinimal = R"({
  "name": "pair",
  "dims": [{"name": "t", "kind": "time", "min": 0, "max": 1}],
  "images": [{"path": "a.png", "coord": [0]}, {"path": "b.png", "coord": [1]}]
})";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string with(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  return text.replace(at, from.size(), to);
}

// Warp `from` (at coordinate y) to coordinate x with the scene's analytic
// flow and compare with the frame stored at x, away from the border.
double self_consistency_error(const data::SyntheticScene& s, std::size_t from, std::size_t to) {
  const XFieldCoord y = s.manifest.normalized_coord(from);
  const XFieldCoord x = s.manifest.normalized_coord(to);
  const auto j = s.jacobian();
  Tensor<float> q = model::position_grid<float>(s.height, s.width);
  for (std::size_t p = 0; p < s.height * s.width; ++p) {
    for (std::size_t d = 0; d < j.size(); ++d) {
      q[p * 2] += static_cast<float>(j[d][0] * (x[d] - y[d]));
      q[p * 2 + 1] += static_cast<float>(j[d][1] * (x[d] - y[d]));
    }
  }
  const std::size_t margin = 10;
  double worst = 0.0;
  for (std::size_t r = margin; r + margin < s.height; ++r) {
    for (std::size_t c = margin; c + margin < s.width; ++c) {
      for (std::size_t k = 0; k < 3; ++k) {
        const double warped = testing::ref_bilinear(s.images[from], q.at(r, c, 0), q.at(r, c, 1), k);
        worst = std::max(worst, std::abs(warped - s.images[to].at(r, c, k)));
      }
    }
  }
  return worst;
}

TEST_SUITE("dataset") {
  TEST_CASE("manifest: minimal document loads") {
    const auto m = data::manifest_from_json(kMinimal);
    CHECK(m.name == "pair");
    CHECK(m.dimension_count() == 1);
    CHECK(m.images.size() == 2);
    CHECK(!m.heldout);
    CHECK(m.normalized_coord(1) == XFieldCoord{1.0});
  }

  TEST_CASE("manifest: distinct errors") {
    CHECK_THROWS_AS(data::manifest_from_json(with(kMinimal, "\"coord\": [0]", "\"coord\": [0, 1]")),
                    CoordinateLengthError);
    CHECK_THROWS_AS(data::manifest_from_json("{ nope"), SchemaError);
    CHECK_THROWS_AS(data::manifest_from_json(with(kMinimal, "\"name\": \"pair\"", "\"nme\": \"pair\"")),
                    SchemaError);
    CHECK_THROWS_AS(data::manifest_from_json(with(kMinimal, "\"time\"", "\"tyme\"")), SchemaError);
    CHECK_THROWS_AS(data::manifest_from_json(with(kMinimal, "\"max\": 1", "\"max\": 0")), SchemaError);
    CHECK_THROWS_AS(data::manifest_from_json(with(kMinimal, "\"coord\": [1]", "\"coord\": [0]")),
                    SchemaError);
    CHECK_THROWS_AS(data::manifest_from_json(with(kMinimal, "\"coord\": [1]", "\"coord\": [3]")),
                    SchemaError);
    CHECK_THROWS_AS(data::manifest_from_json(with(kMinimal, "\n}", ", \"heldout\": [2]\n}")),
                    SchemaError);
    CHECK_THROWS_AS(data::load_manifest("/nonexistent/manifest.json"), FileNotFoundError);
    const auto m = data::manifest_from_json(with(kMinimal, "\n}", ", \"heldout\": [1]\n}"));
    REQUIRE(m.heldout);
    CHECK(*m.heldout == std::vector<std::size_t>{1});
  }

  TEST_CASE("manifest: canonical save/load/save is byte-identical") {
    testing::TempDir dir;
    const auto m = data::manifest_from_json(with(kMinimal, "\n}", ", \"heldout\": [0]\n}"));
    data::save_manifest(m, dir / "a.json");
    const auto back = data::load_manifest(dir / "a.json");
    CHECK(back == m);
    data::save_manifest(back, dir / "b.json");
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(data::manifest_to_json(back) == slurp(dir / "a.json"));
  }

  TEST_CASE("png: 8-bit RGB round trip is bit-identical") {
    std::mt19937_64 rng(1);
    Tensor<float> img({9, 13, 3});
    std::uniform_int_distribution<int> code(0, 255);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = code(rng) / 255.0f;
    const auto bytes = data::encode_png(img);
    const auto decoded = data::decode_png(bytes);
    CHECK(decoded == img);
    CHECK(data::encode_png(decoded) == bytes);

    testing::TempDir dir;
    data::save_png(dir / "x.png", img);
    CHECK(data::load_png(dir / "x.png") == img);
    CHECK(data::read_file(dir / "x.png") == bytes);
    CHECK_THROWS_AS(data::load_png(dir / "missing.png"), FileNotFoundError);
    const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(data::decode_png(junk), ImageIoError);

    // Single-channel input is written as gray and read back as RGB.
    Tensor<float> gray({4, 4, 1}, 0.2f);
    const auto g = data::decode_png(data::encode_png(gray));
    CHECK(g.shape() == ad::Shape{4, 4, 3});
    for (float v : g.data()) CHECK(v == doctest::Approx(51.0f / 255.0f));
  }

  TEST_CASE("load_observations: normalized coordinates, missing files, shape mismatch") {
    testing::TempDir dir;
    auto m = data::manifest_from_json(with(kMinimal, "\"max\": 1", "\"max\": 4"));
    m.images[1].coord = {3.0};
    data::save_png(dir / "a.png", Tensor<float>({4, 4, 3}, 0.2f));
    CHECK_THROWS_AS(data::load_observations(m, dir.path()), FileNotFoundError);
    data::save_png(dir / "b.png", Tensor<float>({4, 4, 3}, 0.6f));
    const auto obs = data::load_observations(m, dir.path());
    REQUIRE(obs.size() == 2);
    CHECK(obs[1].coord == XFieldCoord{0.75});
    const std::size_t one[] = {1};
    CHECK(data::load_observations(m, dir.path(), one).size() == 1);
    data::save_png(dir / "b.png", Tensor<float>({4, 5, 3}, 0.6f));
    CHECK_THROWS_AS(data::load_observations(m, dir.path()), ShapeError);
  }

  TEST_CASE("synth_translate: zero shift, frame arithmetic, self-consistency") {
    const auto tex = data::make_texture(64, 64, 40, 1);
    const auto still = data::synth_translate(tex, 64, 64, 0.0, 4);
    for (const auto& f : still.images) CHECK(f == still.images[0]);

    const auto s = data::synth_translate(tex, 64, 64, 8.0, 3);
    CHECK(s.manifest.dims.size() == 1);
    CHECK(s.manifest.dims[0].kind == DimensionKind::time);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto off = s.offset(s.manifest.normalized_coord(i));
      CHECK(off[0] == doctest::Approx(4.0 * i));
      CHECK(off[1] == 0.0);
    }
    CHECK(s.jacobian()[0][0] == 8.0);
    // Integer offsets: frame i is frame 0 read 4 i pixels further right.
    for (std::size_t y = 0; y < 64; ++y) {
      for (std::size_t x = 0; x + 8 < 64; ++x) {
        CHECK(s.images[1].at(y, x, 0) == s.images[0].at(y, x + 4, 0));
        CHECK(s.images[2].at(y, x, 2) == s.images[0].at(y, x + 8, 2));
      }
    }
    CHECK(self_consistency_error(s, 0, 2) <= 1e-3);
    CHECK(self_consistency_error(s, 2, 1) <= 1e-3);
    CHECK(s.render(s.manifest.normalized_coord(1)) == s.images[1]);

    CHECK_THROWS_AS(data::synth_translate(tex, 64, 64, 8.0, 1), ConfigError);
    CHECK_THROWS_AS(data::synth_translate(tex, 64, 64, 33.0, 3), ConfigError);
  }

  TEST_CASE("synth_lightfield_plane: zero disparity, view arithmetic, self-consistency") {
    const auto tex = data::make_texture(64, 64, 40, 2);
    const auto flat = data::synth_lightfield_plane(tex, 64, 64, 0.0, 3, 3);
    for (const auto& f : flat.images) CHECK(f == flat.images[0]);

    const auto s = data::synth_lightfield_plane(tex, 64, 64, 4.0, 3, 3);
    REQUIRE(s.images.size() == 9);
    CHECK(s.manifest.dims[0].kind == DimensionKind::view_horizontal);
    CHECK(s.manifest.dims[1].kind == DimensionKind::view_vertical);
    const auto off = s.offset({0.5, 1.0});
    CHECK(off[0] == doctest::Approx(2.0));
    CHECK(off[1] == doctest::Approx(4.0));
    CHECK(self_consistency_error(s, 0, 8) <= 1e-3);
    CHECK(self_consistency_error(s, 4, 2) <= 1e-3);
    CHECK_THROWS_AS(data::synth_lightfield_plane(tex, 64, 64, 4.0, 1, 3), ConfigError);
  }

  TEST_CASE("synth_shadow_sweep: shadow off, mask geometry, darkening") {
    const auto tex = data::make_texture(64, 64, 40, 3);
    data::ShadowGeometry off;
    off.factor = 1.0;
    const auto lit = data::synth_shadow_sweep(tex, 64, 64, off, 4);
    for (const auto& f : lit.images) CHECK(f == lit.images[0]);

    const data::ShadowGeometry geo;
    const auto s = data::synth_shadow_sweep(tex, 64, 64, geo, 5);
    REQUIRE(s.masks.size() == 5);
    CHECK(s.shadow_flow()[0] == geo.travel_px);
    for (std::size_t i = 0; i < 5; ++i) {
      const double cx = geo.center_x + geo.travel_px * s.manifest.normalized_coord(i)[0];
      std::size_t lattice = 0;
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if ((x - cx) * (x - cx) + (y - geo.center_y) * (y - geo.center_y) <=
              geo.radius * geo.radius) {
            ++lattice;
          }
        }
      }
      std::size_t marked = 0;
      for (float v : s.masks[i].data()) marked += v > 0.5f;
      CHECK(marked == lattice);
    }
    // Deep inside the disc the frame is the texture darkened by the factor.
    const auto& frame = s.images[0];
    const auto& bright = lit.images[0];
    const std::size_t cy = 32, cx = 20;
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(frame.at(cy, cx, k) == doctest::Approx(0.4 * bright.at(cy, cx, k)).epsilon(0.02));
    }
    CHECK(frame.at(2, 62, 0) == bright.at(2, 62, 0));
  }

  TEST_CASE("holdout_split protocols") {
    const auto tex = data::make_texture(16, 16, 8, 1);
    const auto grid = data::synth_lightfield_plane(tex, 16, 16, 2.0, 3, 3).manifest;
    const auto center = data::holdout_split(grid, HoldoutProtocol::center);
    CHECK(center.train.size() == 8);
    CHECK(center.heldout == std::vector<std::size_t>{4});
    const auto corners = data::holdout_split(grid, HoldoutProtocol::corners);
    CHECK(corners.train == std::vector<std::size_t>{0, 2, 6, 8});
    CHECK(corners.heldout.size() == 5);

    const auto two = data::synth_lightfield_plane(tex, 16, 16, 2.0, 2, 2).manifest;
    const auto degenerate = data::holdout_split(two, HoldoutProtocol::corners);
    CHECK(degenerate.train.size() == 4);
    CHECK(degenerate.heldout.empty());
    CHECK_THROWS_AS(data::holdout_split(two, HoldoutProtocol::center), ConfigError);
    CHECK_THROWS_AS(data::holdout_split(two, HoldoutProtocol::middle_frame), ConfigError);

    const auto triplet = data::synth_translate(tex, 16, 16, 4.0, 3).manifest;
    const auto mid = data::holdout_split(triplet, HoldoutProtocol::middle_frame);
    CHECK(mid.train == std::vector<std::size_t>{0, 2});
    CHECK(mid.heldout == std::vector<std::size_t>{1});
    const auto five = data::synth_translate(tex, 16, 16, 4.0, 5).manifest;
    CHECK(data::holdout_split(five, HoldoutProtocol::middle_frame).heldout ==
          std::vector<std::size_t>{1, 3});
    CHECK_THROWS_AS(data::holdout_split(triplet, HoldoutProtocol::corners), ConfigError);
    CHECK_THROWS_AS(data::holdout_split(triplet, HoldoutProtocol::explicit_list), ConfigError);
    CHECK_THROWS_AS(data::holdout_protocol_from_string("sideways"), ConfigError);

    auto listed = five;
    listed.heldout = std::vector<std::size_t>{3, 0};
    const auto ex = data::holdout_split(listed, HoldoutProtocol::explicit_list);
    CHECK(ex.heldout == std::vector<std::size_t>{0, 3});
    CHECK(ex.train == std::vector<std::size_t>{1, 2, 4});
  }

  TEST_CASE("holdout_split property: train and held-out partition the images") {
    const auto tex = data::make_texture(16, 16, 8, 1);
    for (std::size_t m = 2; m <= 5; ++m) {
      for (std::size_t n = 2; n <= 5; ++n) {
        const auto man = data::synth_lightfield_plane(tex, 16, 16, 1.0, m, n).manifest;
        for (auto p : {HoldoutProtocol::corners, HoldoutProtocol::center}) {
          data::Split s;
          try {
            s = data::holdout_split(man, p);
          } catch (const ConfigError&) {
            continue;
          }
          std::vector<std::size_t> all = s.train;
          all.insert(all.end(), s.heldout.begin(), s.heldout.end());
          std::sort(all.begin(), all.end());
          CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
          CHECK(all.size() == m * n);
        }
      }
    }
  }

  TEST_CASE("write_scene emits images, masks and a loadable manifest") {
    testing::TempDir dir;
    const auto s = data::synth_shadow_sweep(data::make_texture(16, 16, 8, 1), 16, 16,
                                            {8, 8, 6, 4, 1, 0.4}, 3);
    data::write_scene(s, dir.path());
    const auto m = data::load_manifest(dir / "manifest.json");
    CHECK(m == s.manifest);
    const auto obs = data::load_observations(m, dir.path());
    for (std::size_t i = 0; i < obs.size(); ++i) CHECK(obs[i].image == s.images[i]);
    CHECK(std::filesystem::exists(dir / "mask_002.png"));
  }

  TEST_CASE("textured_pixels ignores flat regions") {
    const Tensor<float> flat({8, 8, 3}, 0.5f);
    const auto none = data::textured_pixels(flat);
    for (float v : none.data()) CHECK(v == 0.0f);
    const auto tex = data::make_texture(64, 64, 40, 1);
    const auto frame = data::synth_translate(tex, 64, 64, 8.0, 3).images[0];
    const auto mask = data::textured_pixels(frame);
    double frac = 0.0;
    for (float v : mask.data()) frac += v;
    CHECK(frac / (64 * 64) > 0.2);
  }
}

}  // namespace
}  // namespace xfields
