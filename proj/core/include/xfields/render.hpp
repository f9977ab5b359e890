// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "xfields/model_file.hpp"

namespace xfields::renderd {

/// Bilinear resize with pixel-center alignment; returns a copy when the size
/// already matches.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t width,
                              std::size_t height);

/// Sources blended for a rendered frame: one more than the training
/// reconstructions used, because a render may coincide with an observation
/// that training always excluded.
std::size_t render_source_count(std::size_t observation_count, std::size_t training_k);

/// Evaluates a trained model at arbitrary coordinates. Immutable after
/// construction, so concurrent renders are safe and deterministic.
class Renderer {
 public:
  /// Throws ConfigError for a null model.
  explicit Renderer(std::shared_ptr<const Model> model);

  const Model& model() const { return *model_; }
  std::size_t dimension_count() const { return model_->config().dimension_count(); }

  /// Observation indices blended at x (nearest first, coincident included).
  std::vector<std::size_t> sources_for(const XFieldCoord& x) const;

  /// H x W x 3 frame at x clamped to [0, 1]^n. Width/height 0 mean the
  /// trained resolution. Throws CoordinateLengthError / ConfigError.
  Tensor<float> render_frame(const XFieldCoord& x, std::size_t width = 0,
                             std::size_t height = 0) const;

  /// Pixelwise mean of `samples` frames spaced uniformly over
  /// [c - radius, c + radius] along `axis`, each clamped. One sample renders
  /// the center.
  Tensor<float> render_effect(const XFieldCoord& center, std::size_t axis, double radius,
                              std::size_t samples, std::size_t width = 0,
                              std::size_t height = 0) const;

  /// The coordinates render_effect averages.
  std::vector<XFieldCoord> effect_coords(const XFieldCoord& center, std::size_t axis,
                                         double radius, std::size_t samples) const;

 private:
  struct SourceJacobians {
    Tensor<float> flow;                    // image resolution
    std::optional<Tensor<float>> shading;  // image resolution
  };

  XFieldCoord checked(const XFieldCoord& x) const;

  std::shared_ptr<const Model> model_;
  std::vector<SourceJacobians> cache_;
  std::size_t k_ = 0;
};

}  // namespace xfields::renderd
