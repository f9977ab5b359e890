// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "xfields/ad/tensor.hpp"

namespace xfields {

enum class DimensionKind { view_horizontal, view_vertical, time, light, generic };

std::string_view to_string(DimensionKind kind);
/// Throws SchemaError for unknown names.
DimensionKind dimension_kind_from_string(std::string_view name);

inline bool is_view(DimensionKind kind) {
  return kind == DimensionKind::view_horizontal ||
         kind == DimensionKind::view_vertical;
}

/// One axis of an X-Field with the raw range used for normalization.
struct DimensionSpec {
  std::string name;
  DimensionKind kind = DimensionKind::generic;
  double min = 0.0;
  double max = 1.0;

  double normalize(double raw) const {
    return max == min ? 0.0 : (raw - min) / (max - min);
  }
  double denormalize(double unit) const { return min + unit * (max - min); }

  bool operator==(const DimensionSpec&) const = default;
};

/// A point in the normalized coordinate cube [0, 1]^n.
class XFieldCoord {
 public:
  XFieldCoord() = default;
  explicit XFieldCoord(std::vector<double> values) : values_(std::move(values)) {}
  XFieldCoord(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

  /// Componentwise clamp into [0, 1]; the X-Field is not extrapolated.
  XFieldCoord clamped() const;

  bool operator==(const XFieldCoord&) const = default;

 private:
  std::vector<double> values_;
};

/// a - b componentwise. Throws ShapeError on length mismatch.
std::vector<double> coord_delta(const XFieldCoord& a, const XFieldCoord& b);

double squared_distance(const XFieldCoord& a, const XFieldCoord& b);

/// A captured image (H x W x 3, values in [0, 1]) at a known coordinate.
struct Observation {
  XFieldCoord coord;
  ad::Tensor<float> image;
};

}  // namespace xfields
