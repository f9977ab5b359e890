// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/render.hpp"

#include <algorithm>
#include <cmath>

namespace xfields::renderd {

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t width,
                              std::size_t height) {
  if (image.rank() != 3) throw ShapeError("resize expects H x W x C");
  if (width == 0 || height == 0) throw ConfigError("resize target must be positive");
  const std::size_t ih = image.extent(0), iw = image.extent(1), c = image.extent(2);
  if (ih == height && iw == width) return image;

  Tensor<float> out({height, width, c});
  const double sy = static_cast<double>(ih) / static_cast<double>(height);
  const double sx = static_cast<double>(iw) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(ih - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(iw - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = (1 - wx) * image.at(y0, x0, k) + wx * image.at(y0, x1, k);
        const double bottom = (1 - wx) * image.at(y1, x0, k) + wx * image.at(y1, x1, k);
        out.at(y, x, k) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

std::size_t render_source_count(std::size_t observation_count, std::size_t training_k) {
  const std::size_t k = training_k == 0 ? train::default_neighbor_count(observation_count)
                                        : training_k;
  return std::min(observation_count, k + 1);
}

Renderer::Renderer(std::shared_ptr<const Model> model) : model_(std::move(model)) {
  if (!model_) throw ConfigError("no model loaded");
  const auto& cfg = model_->config();
  if (model_->observations.empty()) throw ConfigError("model has no observations to blend");
  k_ = render_source_count(model_->observations.size(), model_->training.k);

  // Source Jacobians depend only on the parameters, so decode them once.
  for (const auto& obs : model_->observations) {
    SourceJacobians s;
    model::Graph<float> g;
    const model::BoundParams bound = model::bind_params(g, model_->params, false);
    auto heads = model::decode_jacobian(g, bound, cfg, obs.coord);
    const model::NodeId flow = model::upsample_jacobian(g, heads.flow, cfg.flow_downsample);
    std::optional<model::NodeId> shading;
    if (heads.shading) {
      shading = model::upsample_jacobian(g, *heads.shading, cfg.flow_downsample);
    }
    g.forward();
    s.flow = g.value(flow);
    if (shading) s.shading = g.value(*shading);
    cache_.push_back(std::move(s));
  }
}

XFieldCoord Renderer::checked(const XFieldCoord& x) const {
  if (x.size() != dimension_count()) {
    throw CoordinateLengthError("coordinate has " + std::to_string(x.size()) +
                                " components, model has " +
                                std::to_string(dimension_count()) + " dimensions");
  }
  for (double v : x.values()) {
    if (!std::isfinite(v)) throw ConfigError("coordinate components must be finite");
  }
  return x.clamped();
}

std::vector<std::size_t> Renderer::sources_for(const XFieldCoord& x) const {
  const XFieldCoord c = checked(x);
  std::vector<XFieldCoord> pool;
  for (const auto& o : model_->observations) pool.push_back(o.coord);
  return train::neighbor_select(c, pool, k_, /*exclude_target=*/false);
}

Tensor<float> Renderer::render_frame(const XFieldCoord& x, std::size_t width,
                                     std::size_t height) const {
  const XFieldCoord c = checked(x);
  const auto& cfg = model_->config();
  const auto sources = sources_for(c);

  model::Graph<float> g;
  const model::BoundParams bound = model::bind_params(g, model_->params, false);
  model::JacobianHeads target = model::decode_jacobian(g, bound, cfg, c);
  target.flow = model::upsample_jacobian(g, target.flow, cfg.flow_downsample);
  if (target.shading) {
    target.shading = model::upsample_jacobian(g, *target.shading, cfg.flow_downsample);
  }
  std::vector<model::SourceInput> inputs;
  for (const std::size_t idx : sources) {
    const auto& obs = model_->observations[idx];
    model::SourceInput in;
    in.coord = obs.coord;
    in.image = g.constant(obs.image);
    in.jacobians.flow = g.constant(cache_[idx].flow);
    if (cache_[idx].shading) in.jacobians.shading = g.constant(*cache_[idx].shading);
    if (cfg.delight) in.raw_shading = bound[model::shading_name(idx)];
    inputs.push_back(std::move(in));
  }
  const model::NodeId out =
      model::interpolate(g, cfg, c, target, std::span<const model::SourceInput>(inputs));
  g.forward();
  const Tensor<float>& frame = g.value(out);
  if (width == 0) width = cfg.width;
  if (height == 0) height = cfg.height;
  return resize_bilinear(frame, width, height);
}

std::vector<XFieldCoord> Renderer::effect_coords(const XFieldCoord& center, std::size_t axis,
                                                 double radius, std::size_t samples) const {
  const XFieldCoord c = checked(center);
  if (axis >= dimension_count()) {
    throw ConfigError("effect axis " + std::to_string(axis) + " out of range");
  }
  if (samples < 1) throw ConfigError("effect needs at least one sample");
  if (!std::isfinite(radius) || radius < 0.0) throw ConfigError("effect radius must be >= 0");
  std::vector<XFieldCoord> out;
  for (std::size_t i = 0; i < samples; ++i) {
    std::vector<double> v = c.values();
    if (samples > 1) {
      const double t = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(samples - 1);
      v[axis] += radius * t;
    }
    out.push_back(XFieldCoord(std::move(v)).clamped());
  }
  return out;
}

Tensor<float> Renderer::render_effect(const XFieldCoord& center, std::size_t axis,
                                      double radius, std::size_t samples,
                                      std::size_t width, std::size_t height) const {
  const auto coords = effect_coords(center, axis, radius, samples);
  std::vector<double> acc;
  ad::Shape shape;
  for (const auto& x : coords) {
    const Tensor<float> frame = render_frame(x, width, height);
    if (acc.empty()) {
      acc.assign(frame.size(), 0.0);
      shape = frame.shape();
    }
    for (std::size_t i = 0; i < frame.size(); ++i) acc[i] += frame[i];
  }
  Tensor<float> out(shape);
  const double n = static_cast<double>(coords.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / n);
  return out;
}

}  // namespace xfields::renderd
