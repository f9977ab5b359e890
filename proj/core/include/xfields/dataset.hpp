// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xfields/coords.hpp"

namespace xfields::data {

using ad::Tensor;

struct ManifestImage {
  std::string path;  // relative to the manifest's directory unless absolute
  std::vector<double> coord;  // raw coordinates, one per dimension

  bool operator==(const ManifestImage&) const = default;
};

struct Manifest {
  std::string name;
  std::vector<DimensionSpec> dims;
  std::vector<ManifestImage> images;
  std::optional<std::vector<std::size_t>> heldout;

  std::size_t dimension_count() const { return dims.size(); }
  /// Raw coordinate of image i mapped into [0, 1]^n.
  XFieldCoord normalized_coord(std::size_t i) const;

  /// Throws SchemaError / CoordinateLengthError.
  void validate() const;

  bool operator==(const Manifest&) const = default;
};

/// Parses the manifest JSON. Throws SchemaError for malformed documents and
/// CoordinateLengthError when a coordinate disagrees with the dimension count.
Manifest manifest_from_json(std::string_view text);
/// Canonical form: fixed key order, two-space indent, trailing newline.
std::string manifest_to_json(const Manifest& manifest);

/// Throws FileNotFoundError when the file is missing.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Loads the listed images (all when `indices` is empty) as observations at
/// normalized coordinates. Relative paths resolve against `base_dir`.
std::vector<Observation> load_observations(const Manifest& manifest,
                                           const std::filesystem::path& base_dir,
                                           std::span<const std::size_t> indices = {});

// ---------------------------------------------------------------- splits

enum class HoldoutProtocol { corners, center, middle_frame, explicit_list };

/// "corners", "center", "middle_frame", "explicit". Throws ConfigError.
HoldoutProtocol holdout_protocol_from_string(std::string_view name);
std::string_view to_string(HoldoutProtocol protocol);

struct Split {
  std::vector<std::size_t> train;    // ascending image indices
  std::vector<std::size_t> heldout;  // ascending image indices
};

/// The grid is read off the manifest: every dimension with more than one
/// distinct coordinate is a grid axis, and the images must fill the grid.
/// Throws ConfigError when the protocol does not fit the grid.
Split holdout_split(const Manifest& manifest, HoldoutProtocol protocol);

// ------------------------------------------------------------ synthetic

/// Procedural RGB texture, larger than the frames cut from it so shifted
/// frames never read past its border.
class Texture {
 public:
  Texture() = default;
  Texture(Tensor<float> image, std::size_t margin);

  /// Bilinear lookup at frame-space position (x, y); frame pixel (0, 0) sits
  /// at texture pixel (margin, margin).
  float sample(double x, double y, std::size_t channel) const;

  const Tensor<float>& image() const { return image_; }
  std::size_t margin() const { return margin_; }

 private:
  Tensor<float> image_;
  std::size_t margin_ = 0;
};

/// Seeded multi-octave value noise plus hard-edged rectangles and discs, in
/// [0.05, 0.95]. Flow is observable almost everywhere.
Texture make_texture(std::size_t height, std::size_t width, std::size_t margin,
                     std::uint64_t seed);

enum class SynthKind { translate1d, lightfield_plane, shadow_sweep };
std::string_view to_string(SynthKind kind);
/// Throws ConfigError.
SynthKind synth_kind_from_string(std::string_view name);

/// A disc shadow that slides horizontally as the light coordinate sweeps
/// from 0 to 1. Pixels inside are multiplied by `factor`.
struct ShadowGeometry {
  double center_x = 20.0;
  double center_y = 32.0;
  double travel_px = 24.0;  // center displacement per unit light coordinate
  double radius = 12.0;
  double softness = 1.0;    // width of the linear penumbra ramp, px
  double factor = 0.4;      // 1 disables the shadow
};

struct SyntheticScene {
  SynthKind kind = SynthKind::translate1d;
  Manifest manifest;
  std::vector<Tensor<float>> images;  // parallel to manifest.images
  std::vector<Tensor<float>> masks;   // shadow_sweep only: H x W x 1 in {0, 1}
  Texture texture;
  std::size_t height = 0;
  std::size_t width = 0;
  double shift_px = 0.0;      // translate1d: total displacement
  double disparity_px = 0.0;  // lightfield_plane
  ShadowGeometry shadow;

  /// Ground-truth texture Jacobian: column i is the (x, y) pixel displacement
  /// per unit of normalized dimension i. Constant over the image.
  std::vector<std::array<double, 2>> jacobian() const;
  /// Shadow displacement per unit light coordinate (shadow_sweep only).
  std::array<double, 2> shadow_flow() const { return {shadow.travel_px, 0.0}; }

  /// Texture sampling offset at a normalized coordinate: frame(p) =
  /// texture(p + offset).
  std::array<double, 2> offset(const XFieldCoord& x) const;
  /// Analytic frame at any normalized coordinate (clamped).
  Tensor<float> render(const XFieldCoord& x) const;
  /// Binary shadow mask at a normalized coordinate (zeros when not a sweep).
  Tensor<float> shadow_mask(const XFieldCoord& x) const;

  std::vector<Observation> observations(std::span<const std::size_t> indices = {}) const;
};

/// Frame i samples the texture at horizontal offset i * shift / (n - 1).
/// Throws ConfigError for n_frames < 2 or |shift| > width / 2.
SyntheticScene synth_translate(const Texture& texture, std::size_t height,
                               std::size_t width, double total_shift_px,
                               std::size_t n_frames);

/// M x N views of a fronto-parallel plane; view (u, v) in normalized units
/// samples the texture at offset disparity * (u, v).
SyntheticScene synth_lightfield_plane(const Texture& texture, std::size_t height,
                                      std::size_t width, double disparity_px,
                                      std::size_t grid_m, std::size_t grid_n);

/// Static texture under a moving multiplicative shadow, n light positions.
SyntheticScene synth_shadow_sweep(const Texture& texture, std::size_t height,
                                  std::size_t width, const ShadowGeometry& shadow,
                                  std::size_t n_lights);

/// Writes images, masks and manifest.json into `dir` (created if needed).
void write_scene(const SyntheticScene& scene, const std::filesystem::path& dir);

/// H x W x 1 mask of pixels whose luma gradient magnitude exceeds
/// `min_gradient` (central differences, per pixel).
Tensor<float> textured_pixels(const Tensor<float>& image, double min_gradient = 0.02);

}  // namespace xfields::data
