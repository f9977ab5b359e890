// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xfields/coords.hpp"

namespace xfields::metrics {

using ad::Tensor;

/// Mean squared difference over every element. Throws ShapeError.
double mse(const Tensor<float>& a, const Tensor<float>& b);

/// 10 log10(1 / mse) for [0, 1] images; +infinity when mse is 0.
double psnr_from_mse(double mse);
double psnr(const Tensor<float>& a, const Tensor<float>& b);

/// Written in place of an infinite PSNR in JSON/CSV output.
inline constexpr double kPsnrSentinel = 999.0;

/// Rec.601 luma of an H x W x 3 image, row-major.
std::vector<double> luma(const Tensor<float>& image);

/// Mean SSIM of the luma channels: 11 x 11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1, averaged over the window positions
/// that fit entirely inside the image. Throws ShapeError if either side is
/// below 11 px.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

/// Row `row` of every image stacked top to bottom: result is n x W x C.
/// Throws ShapeError on mismatched sizes, ConfigError on a bad row.
Tensor<float> epipolar_slice(std::span<const Tensor<float>> sequence, std::size_t row);

struct ImageScore {
  std::size_t index = 0;  // image index in the manifest
  XFieldCoord coord;
  double mse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double render_ms = 0.0;
};

struct EvalReport {
  std::vector<ImageScore> images;
  double mean_mse = 0.0;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double total_render_ms = 0.0;
  double mean_render_ms = 0.0;

  std::string to_json() const;
  /// Header line plus one row per image.
  std::string to_csv() const;
};

using RenderFn = std::function<Tensor<float>(const XFieldCoord&)>;

/// Renders every held-out coordinate and scores it against its image.
/// `indices` labels the rows (defaults to 0..n-1). Throws ConfigError when
/// `heldout` is empty.
EvalReport evaluate(const RenderFn& render, std::span<const Observation> heldout,
                    std::span<const std::size_t> indices = {});

}  // namespace xfields::metrics
