// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "xfields/image_io.hpp"

namespace xfields::data {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void schema_fail(const std::string& what) {
  throw SchemaError("manifest: " + what);
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(where + " is missing \"" + key + "\"");
  return *it;
}

void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&](const char* k) { return it.key() == k; });
    if (!ok) schema_fail(where + " has unknown key \"" + it.key() + "\"");
  }
}

double require_number(const Json& v, const std::string& where) {
  if (!v.is_number()) schema_fail(where + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_fail(where + " must be finite");
  return d;
}

std::string require_string(const Json& v, const std::string& where) {
  if (!v.is_string()) schema_fail(where + " must be a string");
  return v.get<std::string>();
}

}  // namespace

XFieldCoord Manifest::normalized_coord(std::size_t i) const {
  const auto& raw = images.at(i).coord;
  if (raw.size() != dims.size()) {
    throw CoordinateLengthError("image " + std::to_string(i) + " has " +
                                std::to_string(raw.size()) + " coordinates, expected " +
                                std::to_string(dims.size()));
  }
  std::vector<double> out(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d) out[d] = dims[d].normalize(raw[d]);
  return XFieldCoord(std::move(out));
}

void Manifest::validate() const {
  if (dims.empty()) schema_fail("\"dims\" must not be empty");
  std::set<std::string> names;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const auto& dim = dims[d];
    const std::string where = "dims[" + std::to_string(d) + "]";
    if (dim.name.empty()) schema_fail(where + " has an empty name");
    if (!names.insert(dim.name).second) schema_fail("duplicate dimension \"" + dim.name + "\"");
    if (!std::isfinite(dim.min) || !std::isfinite(dim.max) || !(dim.max > dim.min)) {
      schema_fail(where + " needs finite min < max");
    }
  }
  if (images.empty()) schema_fail("\"images\" must not be empty");
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    const std::string where = "images[" + std::to_string(i) + "]";
    if (img.path.empty()) schema_fail(where + " has an empty path");
    if (img.coord.size() != dims.size()) {
      throw CoordinateLengthError("manifest: " + where + " has " +
                                  std::to_string(img.coord.size()) +
                                  " coordinates but " + std::to_string(dims.size()) +
                                  " dimensions are declared");
    }
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const double c = img.coord[d];
      if (!std::isfinite(c) || c < dims[d].min || c > dims[d].max) {
        schema_fail(where + " coordinate " + std::to_string(d) +
                    " lies outside the declared range");
      }
    }
    if (!seen.insert(img.coord).second) schema_fail(where + " repeats a coordinate");
  }
  if (heldout) {
    std::set<std::size_t> unique;
    for (std::size_t h : *heldout) {
      if (h >= images.size()) schema_fail("heldout index " + std::to_string(h) + " out of range");
      if (!unique.insert(h).second) schema_fail("heldout index " + std::to_string(h) + " repeated");
    }
  }
}

Manifest manifest_from_json(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    schema_fail(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) schema_fail("top level must be an object");
  reject_unknown_keys(doc, {"name", "dims", "images", "heldout"}, "document");

  Manifest m;
  m.name = require_string(require(doc, "name", "document"), "\"name\"");

  const Json& dims = require(doc, "dims", "document");
  if (!dims.is_array()) schema_fail("\"dims\" must be an array");
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const std::string where = "dims[" + std::to_string(d) + "]";
    const Json& j = dims[d];
    if (!j.is_object()) schema_fail(where + " must be an object");
    reject_unknown_keys(j, {"name", "kind", "min", "max"}, where);
    DimensionSpec spec;
    spec.name = require_string(require(j, "name", where), where + ".name");
    spec.kind = dimension_kind_from_string(
        require_string(require(j, "kind", where), where + ".kind"));
    spec.min = require_number(require(j, "min", where), where + ".min");
    spec.max = require_number(require(j, "max", where), where + ".max");
    m.dims.push_back(std::move(spec));
  }

  const Json& images = require(doc, "images", "document");
  if (!images.is_array()) schema_fail("\"images\" must be an array");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const Json& j = images[i];
    if (!j.is_object()) schema_fail(where + " must be an object");
    reject_unknown_keys(j, {"path", "coord"}, where);
    ManifestImage img;
    img.path = require_string(require(j, "path", where), where + ".path");
    const Json& coord = require(j, "coord", where);
    if (!coord.is_array()) schema_fail(where + ".coord must be an array");
    for (std::size_t c = 0; c < coord.size(); ++c) {
      img.coord.push_back(require_number(coord[c], where + ".coord"));
    }
    m.images.push_back(std::move(img));
  }

  if (auto it = doc.find("heldout"); it != doc.end()) {
    if (!it->is_array()) schema_fail("\"heldout\" must be an array");
    std::vector<std::size_t> held;
    for (const Json& h : *it) {
      if (!h.is_number_integer() || h.get<std::int64_t>() < 0) {
        schema_fail("\"heldout\" entries must be non-negative integers");
      }
      held.push_back(h.get<std::size_t>());
    }
    m.heldout = std::move(held);
  }
  m.validate();
  return m;
}

std::string manifest_to_json(const Manifest& manifest) {
  Json doc;
  doc["name"] = manifest.name;
  Json dims = Json::array();
  for (const auto& d : manifest.dims) {
    Json j;
    j["name"] = d.name;
    j["kind"] = std::string(to_string(d.kind));
    j["min"] = d.min;
    j["max"] = d.max;
    dims.push_back(std::move(j));
  }
  doc["dims"] = std::move(dims);
  Json images = Json::array();
  for (const auto& img : manifest.images) {
    Json j;
    j["path"] = img.path;
    j["coord"] = img.coord;
    images.push_back(std::move(j));
  }
  doc["images"] = std::move(images);
  if (manifest.heldout) doc["heldout"] = *manifest.heldout;
  return doc.dump(2) + "\n";
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError("manifest not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return manifest_from_json(buffer.str());
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  manifest.validate();
  const std::string text = manifest_to_json(manifest);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<Observation> load_observations(const Manifest& manifest,
                                           const std::filesystem::path& base_dir,
                                           std::span<const std::size_t> indices) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(manifest.images.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  std::vector<Observation> out;
  std::optional<ad::Shape> shape;
  for (std::size_t i : indices) {
    if (i >= manifest.images.size()) {
      throw ConfigError("image index " + std::to_string(i) + " out of range");
    }
    std::filesystem::path p = manifest.images[i].path;
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw FileNotFoundError("image not found: " + p.string());
    Observation obs{manifest.normalized_coord(i), load_png(p)};
    if (shape && obs.image.shape() != *shape) {
      throw ShapeError("image " + p.string() + " is " +
                       ad::shape_to_string(obs.image.shape()) + ", expected " +
                       ad::shape_to_string(*shape));
    }
    shape = obs.image.shape();
    out.push_back(std::move(obs));
  }
  return out;
}

// ---------------------------------------------------------------- splits

HoldoutProtocol holdout_protocol_from_string(std::string_view name) {
  if (name == "corners") return HoldoutProtocol::corners;
  if (name == "center") return HoldoutProtocol::center;
  if (name == "middle_frame") return HoldoutProtocol::middle_frame;
  if (name == "explicit") return HoldoutProtocol::explicit_list;
  throw ConfigError("unknown hold-out protocol \"" + std::string(name) + "\"");
}

std::string_view to_string(HoldoutProtocol protocol) {
  switch (protocol) {
    case HoldoutProtocol::corners: return "corners";
    case HoldoutProtocol::center: return "center";
    case HoldoutProtocol::middle_frame: return "middle_frame";
    case HoldoutProtocol::explicit_list: return "explicit";
  }
  return "?";
}

namespace {

struct Grid {
  std::vector<std::size_t> axes;              // dimensions that vary
  std::vector<std::vector<double>> values;    // sorted distinct values per axis
  std::vector<std::vector<std::size_t>> rank; // [image][axis] position in values
};

Grid read_grid(const Manifest& m) {
  Grid g;
  for (std::size_t d = 0; d < m.dims.size(); ++d) {
    std::set<double> distinct;
    for (const auto& img : m.images) distinct.insert(img.coord[d]);
    if (distinct.size() > 1) {
      g.axes.push_back(d);
      g.values.emplace_back(distinct.begin(), distinct.end());
    }
  }
  std::size_t cells = 1;
  for (const auto& v : g.values) cells *= v.size();
  if (cells != m.images.size()) {
    throw ConfigError("images do not fill a rectangular grid (" +
                      std::to_string(m.images.size()) + " images, " +
                      std::to_string(cells) + " grid cells)");
  }
  for (const auto& img : m.images) {
    std::vector<std::size_t> r;
    for (std::size_t a = 0; a < g.axes.size(); ++a) {
      const auto& vals = g.values[a];
      r.push_back(static_cast<std::size_t>(
          std::lower_bound(vals.begin(), vals.end(), img.coord[g.axes[a]]) - vals.begin()));
    }
    g.rank.push_back(std::move(r));
  }
  return g;
}

}  // namespace

Split holdout_split(const Manifest& manifest, HoldoutProtocol protocol) {
  manifest.validate();
  const std::size_t n = manifest.images.size();
  std::vector<bool> held(n, false);

  if (protocol == HoldoutProtocol::explicit_list) {
    if (!manifest.heldout) throw ConfigError("manifest has no \"heldout\" list");
    for (std::size_t h : *manifest.heldout) held[h] = true;
  } else {
    const Grid g = read_grid(manifest);
    switch (protocol) {
      case HoldoutProtocol::corners: {
        if (g.axes.size() != 2) {
          throw ConfigError("corners needs a 2D grid, found " +
                            std::to_string(g.axes.size()) + " varying dimensions");
        }
        for (std::size_t i = 0; i < n; ++i) {
          bool corner = true;
          for (std::size_t a = 0; a < 2; ++a) {
            const std::size_t r = g.rank[i][a];
            corner = corner && (r == 0 || r + 1 == g.values[a].size());
          }
          held[i] = !corner;
        }
        break;
      }
      case HoldoutProtocol::center: {
        if (g.axes.empty()) throw ConfigError("center needs at least one varying dimension");
        for (const auto& v : g.values) {
          if (v.size() % 2 == 0) {
            throw ConfigError("center needs an odd number of samples per grid axis");
          }
        }
        for (std::size_t i = 0; i < n; ++i) {
          bool center = true;
          for (std::size_t a = 0; a < g.axes.size(); ++a) {
            center = center && g.rank[i][a] == g.values[a].size() / 2;
          }
          held[i] = center;
        }
        break;
      }
      case HoldoutProtocol::middle_frame: {
        if (g.axes.size() != 1) {
          throw ConfigError("middle_frame needs exactly one varying dimension, found " +
                            std::to_string(g.axes.size()));
        }
        const std::size_t last = g.values[0].size() - 1;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t r = g.rank[i][0];
          held[i] = r % 2 == 1 && r != last;
        }
        break;
      }
      case HoldoutProtocol::explicit_list:
        break;
    }
  }

  Split s;
  for (std::size_t i = 0; i < n; ++i) (held[i] ? s.heldout : s.train).push_back(i);
  return s;
}

// ------------------------------------------------------------ synthetic

Texture::Texture(Tensor<float> image, std::size_t margin)
    : image_(std::move(image)), margin_(margin) {
  if (image_.rank() != 3) throw ShapeError("texture must be H x W x C");
}

float Texture::sample(double x, double y, std::size_t channel) const {
  const double h = static_cast<double>(image_.extent(0));
  const double w = static_cast<double>(image_.extent(1));
  const double tx = std::clamp(x + static_cast<double>(margin_), 0.0, w - 1.0);
  const double ty = std::clamp(y + static_cast<double>(margin_), 0.0, h - 1.0);
  const auto x0 = static_cast<std::size_t>(std::floor(tx));
  const auto y0 = static_cast<std::size_t>(std::floor(ty));
  const std::size_t x1 = std::min(x0 + 1, image_.extent(1) - 1);
  const std::size_t y1 = std::min(y0 + 1, image_.extent(0) - 1);
  const double fx = tx - static_cast<double>(x0);
  const double fy = ty - static_cast<double>(y0);
  const double top = (1 - fx) * image_.at(y0, x0, channel) + fx * image_.at(y0, x1, channel);
  const double bottom = (1 - fx) * image_.at(y1, x0, channel) + fx * image_.at(y1, x1, channel);
  return static_cast<float>((1 - fy) * top + fy * bottom);
}

namespace {

/// Uniform double in [0, 1) from the top 53 bits; avoids the unspecified
/// algorithms behind std::uniform_real_distribution.
double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

float quantize(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

}  // namespace

Texture make_texture(std::size_t height, std::size_t width, std::size_t margin,
                     std::uint64_t seed) {
  if (height == 0 || width == 0) throw ConfigError("texture size must be positive");
  const std::size_t th = height + 2 * margin;
  const std::size_t tw = width + 2 * margin;
  std::mt19937_64 rng(seed);
  std::vector<double> acc(th * tw * 3, 0.5);

  const std::pair<std::size_t, double> octaves[] = {{32, 0.28}, {16, 0.18}, {8, 0.10}, {4, 0.05}};
  for (const auto& [cell, amplitude] : octaves) {
    const std::size_t lh = th / cell + 2, lw = tw / cell + 2;
    std::vector<double> lattice(lh * lw * 3);
    for (double& v : lattice) v = 2.0 * unit(rng) - 1.0;
    const double inv = 1.0 / static_cast<double>(cell);
    for (std::size_t y = 0; y < th; ++y) {
      const double gy = static_cast<double>(y) * inv;
      const auto iy = static_cast<std::size_t>(gy);
      const double sy = smoothstep(gy - static_cast<double>(iy));
      for (std::size_t x = 0; x < tw; ++x) {
        const double gx = static_cast<double>(x) * inv;
        const auto ix = static_cast<std::size_t>(gx);
        const double sx = smoothstep(gx - static_cast<double>(ix));
        for (std::size_t c = 0; c < 3; ++c) {
          auto at = [&](std::size_t yy, std::size_t xx) { return lattice[(yy * lw + xx) * 3 + c]; };
          const double top = (1 - sx) * at(iy, ix) + sx * at(iy, ix + 1);
          const double bottom = (1 - sx) * at(iy + 1, ix) + sx * at(iy + 1, ix + 1);
          acc[(y * tw + x) * 3 + c] += amplitude * ((1 - sy) * top + sy * bottom);
        }
      }
    }
  }

  // Hard edges: a handful of rectangles and discs with strong color offsets.
  const std::size_t shapes = 6 + (th * tw) / 1024;
  for (std::size_t s = 0; s < shapes; ++s) {
    const bool disc = unit(rng) < 0.5;
    const double cx = unit(rng) * static_cast<double>(tw);
    const double cy = unit(rng) * static_cast<double>(th);
    const double rx = 3.0 + unit(rng) * 7.0;
    const double ry = 3.0 + unit(rng) * 7.0;
    double delta[3];
    for (double& d : delta) d = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.15 + 0.15 * unit(rng));
    for (std::size_t y = 0; y < th; ++y) {
      for (std::size_t x = 0; x < tw; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        const bool inside = disc ? dx * dx + dy * dy <= rx * rx
                                 : std::abs(dx) <= rx && std::abs(dy) <= ry;
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) acc[(y * tw + x) * 3 + c] += delta[c];
      }
    }
  }

  Tensor<float> image({th, tw, 3});
  for (std::size_t i = 0; i < acc.size(); ++i) {
    image[i] = static_cast<float>(std::clamp(acc[i], 0.05, 0.95));
  }
  return Texture(std::move(image), margin);
}

std::string_view to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::translate1d: return "translate1d";
    case SynthKind::lightfield_plane: return "lightfield_plane";
    case SynthKind::shadow_sweep: return "shadow_sweep";
  }
  return "?";
}

SynthKind synth_kind_from_string(std::string_view name) {
  if (name == "translate1d") return SynthKind::translate1d;
  if (name == "lightfield_plane") return SynthKind::lightfield_plane;
  if (name == "shadow_sweep") return SynthKind::shadow_sweep;
  throw ConfigError("unknown generator \"" + std::string(name) + "\"");
}

std::vector<std::array<double, 2>> SyntheticScene::jacobian() const {
  switch (kind) {
    case SynthKind::translate1d: return {{shift_px, 0.0}};
    case SynthKind::lightfield_plane: return {{disparity_px, 0.0}, {0.0, disparity_px}};
    case SynthKind::shadow_sweep: return {{0.0, 0.0}};
  }
  return {};
}

std::array<double, 2> SyntheticScene::offset(const XFieldCoord& x) const {
  const auto jac = jacobian();
  if (x.size() != jac.size()) {
    throw CoordinateLengthError("coordinate has " + std::to_string(x.size()) +
                                " components, scene has " + std::to_string(jac.size()));
  }
  const XFieldCoord c = x.clamped();
  std::array<double, 2> o{0.0, 0.0};
  for (std::size_t i = 0; i < jac.size(); ++i) {
    o[0] += jac[i][0] * c[i];
    o[1] += jac[i][1] * c[i];
  }
  return o;
}

namespace {

/// Shadow coverage in [0, 1] and the binary mask at pixel (x, y).
std::pair<double, bool> shadow_at(const ShadowGeometry& s, double light, double x, double y) {
  const double cx = s.center_x + s.travel_px * light;
  const double d = std::hypot(x - cx, y - s.center_y);
  const bool inside = d <= s.radius;
  double m;
  if (s.softness > 0.0) {
    m = std::clamp((s.radius - d) / s.softness + 0.5, 0.0, 1.0);
  } else {
    m = inside ? 1.0 : 0.0;
  }
  return {m, inside};
}

}  // namespace

Tensor<float> SyntheticScene::render(const XFieldCoord& x) const {
  const auto [ox, oy] = offset(x);
  const XFieldCoord c = x.clamped();
  Tensor<float> out({height, width, 3});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t xx = 0; xx < width; ++xx) {
      double attenuation = 1.0;
      if (kind == SynthKind::shadow_sweep) {
        const double m = shadow_at(shadow, c[0], static_cast<double>(xx),
                                   static_cast<double>(y)).first;
        attenuation = 1.0 - (1.0 - shadow.factor) * m;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = texture.sample(static_cast<double>(xx) + ox,
                                        static_cast<double>(y) + oy, ch);
        out.at(y, xx, ch) = quantize(v * attenuation);
      }
    }
  }
  return out;
}

Tensor<float> SyntheticScene::shadow_mask(const XFieldCoord& x) const {
  Tensor<float> mask({height, width, 1});
  if (kind != SynthKind::shadow_sweep || shadow.factor == 1.0) return mask;
  const XFieldCoord c = x.clamped();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t xx = 0; xx < width; ++xx) {
      if (shadow_at(shadow, c[0], static_cast<double>(xx), static_cast<double>(y)).second) {
        mask.at(y, xx, 0) = 1.0f;
      }
    }
  }
  return mask;
}

std::vector<Observation> SyntheticScene::observations(
    std::span<const std::size_t> indices) const {
  std::vector<Observation> out;
  if (indices.empty()) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      out.push_back({manifest.normalized_coord(i), images[i]});
    }
  } else {
    for (std::size_t i : indices) out.push_back({manifest.normalized_coord(i), images.at(i)});
  }
  return out;
}

namespace {

void check_frame_size(const Texture& texture, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("frame size must be positive");
  if (texture.image().empty()) throw ConfigError("texture is empty");
}

void render_all(SyntheticScene& scene) {
  for (std::size_t i = 0; i < scene.manifest.images.size(); ++i) {
    const XFieldCoord x = scene.manifest.normalized_coord(i);
    scene.images.push_back(scene.render(x));
    if (scene.kind == SynthKind::shadow_sweep) scene.masks.push_back(scene.shadow_mask(x));
  }
}

std::string indexed(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.png", prefix, i);
  return buf;
}

}  // namespace

SyntheticScene synth_translate(const Texture& texture, std::size_t height,
                               std::size_t width, double total_shift_px,
                               std::size_t n_frames) {
  check_frame_size(texture, height, width);
  if (n_frames < 2) throw ConfigError("synth_translate needs at least 2 frames");
  if (!std::isfinite(total_shift_px) ||
      std::abs(total_shift_px) > static_cast<double>(width) / 2.0) {
    throw ConfigError("shift exceeds half the image width");
  }
  SyntheticScene s;
  s.kind = SynthKind::translate1d;
  s.texture = texture;
  s.height = height;
  s.width = width;
  s.shift_px = total_shift_px;
  s.manifest.name = "translate1d";
  s.manifest.dims = {{"t", DimensionKind::time, 0.0, static_cast<double>(n_frames - 1)}};
  for (std::size_t i = 0; i < n_frames; ++i) {
    s.manifest.images.push_back({indexed("frame", i), {static_cast<double>(i)}});
  }
  render_all(s);
  return s;
}

SyntheticScene synth_lightfield_plane(const Texture& texture, std::size_t height,
                                      std::size_t width, double disparity_px,
                                      std::size_t grid_m, std::size_t grid_n) {
  check_frame_size(texture, height, width);
  if (grid_m < 2 || grid_n < 2) throw ConfigError("light field grid must be at least 2 x 2");
  if (!std::isfinite(disparity_px) ||
      std::abs(disparity_px) > static_cast<double>(std::min(width, height)) / 2.0) {
    throw ConfigError("disparity exceeds half the image size");
  }
  SyntheticScene s;
  s.kind = SynthKind::lightfield_plane;
  s.texture = texture;
  s.height = height;
  s.width = width;
  s.disparity_px = disparity_px;
  s.manifest.name = "lightfield_plane";
  s.manifest.dims = {{"u", DimensionKind::view_horizontal, 0.0, static_cast<double>(grid_m - 1)},
                     {"v", DimensionKind::view_vertical, 0.0, static_cast<double>(grid_n - 1)}};
  for (std::size_t v = 0; v < grid_n; ++v) {
    for (std::size_t u = 0; u < grid_m; ++u) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "view_%02zu_%02zu.png", v, u);
      s.manifest.images.push_back(
          {buf, {static_cast<double>(u), static_cast<double>(v)}});
    }
  }
  render_all(s);
  return s;
}

SyntheticScene synth_shadow_sweep(const Texture& texture, std::size_t height,
                                  std::size_t width, const ShadowGeometry& shadow,
                                  std::size_t n_lights) {
  check_frame_size(texture, height, width);
  if (n_lights < 2) throw ConfigError("synth_shadow_sweep needs at least 2 lights");
  if (!(shadow.radius > 0.0) || shadow.softness < 0.0 || shadow.factor < 0.0 ||
      shadow.factor > 1.0) {
    throw ConfigError("invalid shadow geometry");
  }
  SyntheticScene s;
  s.kind = SynthKind::shadow_sweep;
  s.texture = texture;
  s.height = height;
  s.width = width;
  s.shadow = shadow;
  s.manifest.name = "shadow_sweep";
  s.manifest.dims = {{"light", DimensionKind::light, 0.0, static_cast<double>(n_lights - 1)}};
  for (std::size_t i = 0; i < n_lights; ++i) {
    s.manifest.images.push_back({indexed("light", i), {static_cast<double>(i)}});
  }
  render_all(s);
  return s;
}

void write_scene(const SyntheticScene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    save_png(dir / scene.manifest.images[i].path, scene.images[i]);
  }
  for (std::size_t i = 0; i < scene.masks.size(); ++i) {
    save_png(dir / indexed("mask", i), scene.masks[i]);
  }
  save_manifest(scene.manifest, dir / "manifest.json");
}

Tensor<float> textured_pixels(const Tensor<float>& image, double min_gradient) {
  if (image.rank() != 3 || image.extent(2) != 3) {
    throw ShapeError("textured_pixels expects H x W x 3");
  }
  const std::size_t h = image.extent(0), w = image.extent(1);
  std::vector<double> luma(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    luma[i] = 0.299 * image[i * 3] + 0.587 * image[i * 3 + 1] + 0.114 * image[i * 3 + 2];
  }
  auto l = [&](std::size_t y, std::size_t x) { return luma[y * w + x]; };
  Tensor<float> mask({h, w, 1});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < w ? x + 1 : x;
      const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < h ? y + 1 : y;
      const double gx = xr > xl ? (l(y, xr) - l(y, xl)) / static_cast<double>(xr - xl) : 0.0;
      const double gy = yd > yu ? (l(yd, x) - l(yu, x)) / static_cast<double>(yd - yu) : 0.0;
      if (std::hypot(gx, gy) > min_gradient) mask.at(y, x, 0) = 1.0f;
    }
  }
  return mask;
}

}  // namespace xfields::data
