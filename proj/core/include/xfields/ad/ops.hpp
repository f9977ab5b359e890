// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

// Differentiable building blocks for the warping pipeline. Every function
// appends one node to the graph and returns its id. Image-like tensors are
// H x W x C; positions are H x W x 2 with channel 0 horizontal (column) and
// channel 1 vertical (row), in pixel units with pixel centers on integers.

#pragma once

#include <vector>

#include "xfields/ad/graph.hpp"

namespace xfields::ad {

// Elementwise, shapes must match exactly.
template <typename T> NodeId add(Graph<T>& g, NodeId a, NodeId b);
template <typename T> NodeId sub(Graph<T>& g, NodeId a, NodeId b);
template <typename T> NodeId mul(Graph<T>& g, NodeId a, NodeId b);
template <typename T> NodeId div(Graph<T>& g, NodeId a, NodeId b);

template <typename T> NodeId identity(Graph<T>& g, NodeId a);
template <typename T> NodeId scale(Graph<T>& g, NodeId a, double factor);
template <typename T> NodeId add_scalar(Graph<T>& g, NodeId a, double offset);
template <typename T> NodeId abs(Graph<T>& g, NodeId a);
template <typename T> NodeId exp(Graph<T>& g, NodeId a);

/// max(x, slope * x) for slope in (0, 1).
template <typename T> NodeId leaky_relu(Graph<T>& g, NodeId a, double slope);

/// Reductions to a single-element tensor of shape [1].
template <typename T> NodeId sum(Graph<T>& g, NodeId a);
template <typename T> NodeId mean(Graph<T>& g, NodeId a);

/// [..., C] -> [..., 1]
template <typename T> NodeId sum_last_axis(Graph<T>& g, NodeId a);

/// a: [..., C], w: [..., 1]; multiplies every channel by the per-site weight.
template <typename T> NodeId mul_broadcast_last(Graph<T>& g, NodeId a, NodeId w);

template <typename T> NodeId reshape(Graph<T>& g, NodeId a, Shape shape);

/// exp(a) / sum(exp(a)) along the last axis, evaluated with the maximum
/// subtracted so no site underflows to 0/0.
template <typename T> NodeId softmax_last(Graph<T>& g, NodeId a);

/// [..., C] -> [..., 1] holding channel `index`.
template <typename T> NodeId slice_last(Graph<T>& g, NodeId a, std::size_t index);

/// Concatenates along the last axis; leading extents must agree.
template <typename T>
NodeId concat_last(Graph<T>& g, const std::vector<NodeId>& parts);

/// x: [n], weight: [n, m], bias: [m] -> [m].
template <typename T>
NodeId linear(Graph<T>& g, NodeId x, NodeId weight, NodeId bias);

/// Stride-1 cross-correlation with zero "same" padding.
/// input: [H, W, Cin], kernel: [k, k, Cin, Cout] with k odd, bias: [Cout].
template <typename T>
NodeId conv2d(Graph<T>& g, NodeId input, NodeId kernel, NodeId bias);

/// Bilinear 2x magnification. Output pixel i samples source coordinate
/// (i + 0.5) / 2 - 0.5, clamped to the source extent.
template <typename T> NodeId upsample2x(Graph<T>& g, NodeId input);

/// Spatial-transformer read: out[p] = image(positions[p]) with bilinear
/// filtering. Positions are clamped to the image extent; the gradient with
/// respect to a clamped position component is zero.
template <typename T>
NodeId bilinear_sample(Graph<T>& g, NodeId image, NodeId positions);

}  // namespace xfields::ad
