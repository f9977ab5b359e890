// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

// The differentiable interpolation pipeline: coordinate -> per-pixel
// Jacobians -> projected flows -> warped observations -> consistency-weighted
// blend, with an optional shading/albedo split.
//
// Conventions:
//   * Coordinates are normalized to [0, 1] per dimension.
//   * A Jacobian map is H x W x 2 x n_d in output pixels per unit coordinate;
//     row 0 is horizontal motion, row 1 vertical.
//   * Reconstructing coordinate x from an observation at y reads pixel p from
//     q = p + J(x)[p] * (x - y).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xfields/ad/graph.hpp"
#include "xfields/coords.hpp"

namespace xfields::model {

using ad::Graph;
using ad::NodeId;
using ad::Tensor;

inline constexpr double kShadingEpsilon = 1e-8;

struct ModelConfig {
  std::vector<DimensionSpec> dims;
  std::size_t height = 64;
  std::size_t width = 64;
  /// Jacobians are decoded at (height, width) / flow_downsample; 1, 2 or 4.
  std::size_t flow_downsample = 1;
  std::size_t seed_channels = 128;
  std::size_t min_channels = 16;
  double leaky_slope = 0.2;
  /// Consistency bandwidth applied to round-trip L1 pixel residuals.
  double sigma = 10.0;
  bool delight = false;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  std::size_t dimension_count() const { return dims.size(); }
  std::size_t flow_height() const { return height / flow_downsample; }
  std::size_t flow_width() const { return width / flow_downsample; }
  std::size_t stage_count() const;
  std::size_t seed_height() const { return flow_height() >> stage_count(); }
  std::size_t seed_width() const { return flow_width() >> stage_count(); }
  /// Seed channel count followed by the output channels of every stage.
  std::vector<std::size_t> channel_schedule() const;
  /// Decoder output channels: one shared disparity for view dimensions plus
  /// two free channels for every other dimension.
  std::size_t raw_channels() const;
  /// Pixels per unit of decoder output: half the longer image side, so the
  /// heads predict displacements in normalized image coordinates.
  double jacobian_scale() const {
    return static_cast<double>(std::max(height, width)) / 2.0;
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// All trainable state: decoder weights plus, with de-lighting, one log-space
/// shading image per observation ("shading.<index>").
template <typename T>
class DecoderParams {
 public:
  DecoderParams() = default;
  DecoderParams(ModelConfig config, std::vector<NamedTensor<T>> tensors)
      : config_(std::move(config)), tensors_(std::move(tensors)) {}

  const ModelConfig& config() const { return config_; }
  std::vector<NamedTensor<T>>& tensors() { return tensors_; }
  const std::vector<NamedTensor<T>>& tensors() const { return tensors_; }

  bool contains(std::string_view name) const;
  /// Throws MissingTensorError.
  Tensor<T>& get(std::string_view name);
  const Tensor<T>& get(std::string_view name) const;

  /// Scalar count of the network weights (shading images excluded).
  std::size_t network_parameter_count() const;
  std::size_t parameter_count() const;

  template <typename U>
  DecoderParams<U> cast() const {
    std::vector<NamedTensor<U>> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back({t.name, t.value.template cast<U>()});
    return DecoderParams<U>(config_, std::move(out));
  }

 private:
  ModelConfig config_;
  std::vector<NamedTensor<T>> tensors_;
};

std::string shading_name(std::size_t observation);

/// Glorot-uniform FC and convolution weights, zero biases, zero output heads (so the
/// initial flow is identically zero) and zero log-shading.
DecoderParams<float> init_params(const ModelConfig& config,
                                 std::size_t observation_count,
                                 std::uint64_t seed);

/// Graph leaves for a DecoderParams, parallel to its tensor list.
class BoundParams {
 public:
  void add(std::string name, NodeId id) {
    names_.push_back(std::move(name));
    ids_.push_back(id);
  }
  NodeId operator[](std::string_view name) const;
  const std::vector<NodeId>& ids() const { return ids_; }

 private:
  std::vector<std::string> names_;
  std::vector<NodeId> ids_;
};

/// Adds every tensor as a trainable parameter (or as a constant when
/// `trainable` is false).
template <typename T>
BoundParams bind_params(Graph<T>& g, const DecoderParams<T>& params,
                        bool trainable);

struct JacobianHeads {
  NodeId flow;
  std::optional<NodeId> shading;
};

/// Decoder trunk and heads evaluated at x. Outputs are Jacobian maps at the
/// flow resolution.
template <typename T>
JacobianHeads decode_jacobian(Graph<T>& g, const BoundParams& params,
                              const ModelConfig& config, const XFieldCoord& x);

/// Raw decoder channels [h, w, R] -> Jacobian map [h, w, 2, n_d]. A view
/// dimension's column is (d, 0) or (0, d) for the shared disparity d; other
/// dimensions pass their two channels through.
template <typename T>
NodeId disparity_to_jacobian(Graph<T>& g, NodeId raw,
                             std::span<const DimensionSpec> dims);

/// Bilinear 2x steps up to image resolution; factor in {1, 2, 4}.
template <typename T>
NodeId upsample_jacobian(Graph<T>& g, NodeId jacobian, std::size_t factor);

/// Absolute read positions q[p] = p + J[p] * delta, shape [H, W, 2].
template <typename T>
NodeId project_flow(Graph<T>& g, NodeId jacobian, std::span<const double> delta);

/// Spatial-transformer warp: out[p] = image(flow[p]), clamp-to-edge.
template <typename T>
NodeId warp(Graph<T>& g, NodeId image, NodeId flow);

/// Integer pixel-center grid [H, W, 2] (x, y).
template <typename T>
Tensor<T> position_grid(std::size_t height, std::size_t width);

/// Unnormalized weight for a round-trip L1 residual.
inline double consistency_weight(double residual_l1, double sigma) {
  return std::exp(-sigma * residual_l1);
}

struct SourceFlow {
  XFieldCoord coord;
  NodeId jacobian;  // image resolution
};

struct ConsistencyNodes {
  std::vector<NodeId> read_positions;  // q per source, [H, W, 2]
  std::vector<NodeId> residuals;       // |p - b(q)|_1 per source, [H, W, 1]
  std::vector<NodeId> weights;         // normalized, [H, W, 1]
};

/// Partition-of-unity consistency weights for reconstructing x from the
/// given sources. `jacobian_x` must be at image resolution.
template <typename T>
ConsistencyNodes consistency_weights(Graph<T>& g, const XFieldCoord& x,
                                     NodeId jacobian_x,
                                     std::span<const SourceFlow> sources,
                                     double sigma);

/// Sum over sources of weight * warp(image, q).
template <typename T>
NodeId blend(Graph<T>& g, const ConsistencyNodes& consistency,
             std::span<const NodeId> images);

struct ShadingSplit {
  NodeId shading;  // E = exp(raw)
  NodeId albedo;   // A = L / (E + eps)
};

template <typename T>
ShadingSplit delight_decompose(Graph<T>& g, NodeId image, NodeId raw_shading);

struct SourceInput {
  XFieldCoord coord;
  NodeId image;
  JacobianHeads jacobians;  // image resolution
  std::optional<NodeId> raw_shading;
};

/// Weighted combination of warped sources at x. With de-lighting the albedo
/// and shading layers are interpolated with their own Jacobians and
/// multiplied back together.
template <typename T>
NodeId interpolate(Graph<T>& g, const ModelConfig& config, const XFieldCoord& x,
                   const JacobianHeads& target, std::span<const SourceInput> sources);

/// Full prediction of x from the listed observations, decoding every
/// Jacobian from the bound parameters.
template <typename T>
NodeId build_prediction(Graph<T>& g, const BoundParams& params,
                        const ModelConfig& config,
                        std::span<const Observation> observations,
                        std::span<const std::size_t> sources,
                        const XFieldCoord& x);

/// Evaluates the flow (or shading) head Jacobian at x, flow resolution.
Tensor<float> evaluate_jacobian(const DecoderParams<float>& params,
                                const XFieldCoord& x, bool shading_head = false);

/// E and A for one observation, evaluated eagerly.
struct ShadingAlbedo {
  Tensor<float> shading;
  Tensor<float> albedo;
};
ShadingAlbedo delight_decompose(const DecoderParams<float>& params,
                                const Observation& observation,
                                std::size_t observation_index);

}  // namespace xfields::model
