// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/coords.hpp"

#include <algorithm>

namespace xfields {

std::string_view to_string(DimensionKind kind) {
  switch (kind) {
    case DimensionKind::view_horizontal: return "view_horizontal";
    case DimensionKind::view_vertical: return "view_vertical";
    case DimensionKind::time: return "time";
    case DimensionKind::light: return "light";
    case DimensionKind::generic: return "generic";
  }
  return "generic";
}

DimensionKind dimension_kind_from_string(std::string_view name) {
  for (const auto kind :
       {DimensionKind::view_horizontal, DimensionKind::view_vertical,
        DimensionKind::time, DimensionKind::light, DimensionKind::generic}) {
    if (to_string(kind) == name) return kind;
  }
  throw SchemaError("unknown dimension kind '" + std::string(name) + "'");
}

XFieldCoord XFieldCoord::clamped() const {
  std::vector<double> out(values_);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return XFieldCoord(std::move(out));
}

std::vector<double> coord_delta(const XFieldCoord& a, const XFieldCoord& b) {
  if (a.size() != b.size()) {
    throw ShapeError("coordinate lengths differ: " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

double squared_distance(const XFieldCoord& a, const XFieldCoord& b) {
  double acc = 0.0;
  for (const double d : coord_delta(a, b)) acc += d * d;
  return acc;
}

}  // namespace xfields
