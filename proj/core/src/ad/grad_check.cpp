// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace xfields::ad {

GradCheckResult grad_check(Graph<double>& graph, NodeId output,
                           const GradCheckOptions& options) {
  if (!(options.step >= 1e-7 && options.step <= 1e-4)) {
    throw ConfigError("grad_check step must lie in [1e-7, 1e-4]");
  }
  graph.forward();
  graph.check_kinks(options.kink_radius);
  const Gradients<double> analytic = graph.backward(output);

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (const NodeId param : graph.parameters()) {
    const Tensor<double> original = graph.value(param);
    const Tensor<double>& grad = analytic.at(param);

    std::vector<std::size_t> entries(original.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.max_entries_per_parameter > 0 &&
        entries.size() > options.max_entries_per_parameter) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_parameter);
    }

    Tensor<double> probe = original;
    for (const std::size_t i : entries) {
      probe[i] = original[i] + options.step;
      graph.bind(param, probe);
      graph.forward();
      const double plus = graph.value(output)[0];
      probe[i] = original[i] - options.step;
      graph.bind(param, probe);
      graph.forward();
      const double minus = graph.value(output)[0];
      probe[i] = original[i];

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = grad[i];
      const double denom = std::max({std::abs(a), std::abs(numeric),
                                     options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.probes;
      if (result.probes == 1 || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = param;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
    graph.bind(param, original);
  }
  graph.forward();
  return result;
}

}  // namespace xfields::ad
