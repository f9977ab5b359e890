// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "xfields/ad/graph.hpp"

namespace xfields::ad {

struct GradCheckOptions {
  /// Central-difference step, must lie in [1e-7, 1e-4].
  double step = 1e-5;
  /// Entries probed per parameter tensor; 0 probes every entry. Sampled
  /// entries are drawn deterministically from `seed`.
  std::size_t max_entries_per_parameter = 0;
  std::uint64_t seed = 0;
  /// Inputs closer than this to a kink are reported as non-differentiable.
  double kink_radius = 0.0;
  double denominator_floor = 1e-8;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  NodeId worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t probes = 0;
};

/// Compares reverse-mode gradients of the scalar `output` against central
/// finite differences for every trainable parameter. Throws
/// NonDifferentiablePointError when an op input sits on a kink; the caller
/// must then move the probe point. Parameter values are restored on return.
GradCheckResult grad_check(Graph<double>& graph, NodeId output,
                           const GradCheckOptions& options = {});

}  // namespace xfields::ad
