// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xfields/model.hpp"

namespace xfields::train {

using ad::Tensor;

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamMoments {
  Tensor<T> first;
  Tensor<T> second;
};

/// One bias-corrected Adam update; `t` is the 1-based step count.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamMoments<T>& moments,
               std::int64_t t, const AdamConfig& config);

/// Indices of the k pool entries nearest to `target` (L2 over normalized
/// coordinates), ties broken by pool order. Entries equal to the target are
/// never returned when `exclude_target` is set.
std::vector<std::size_t> neighbor_select(const XFieldCoord& target,
                                         std::span<const XFieldCoord> pool,
                                         std::size_t k,
                                         bool exclude_target = true);

/// All other observations for small captures, else the 4 nearest.
std::size_t default_neighbor_count(std::size_t observation_count);

struct TrainConfig {
  AdamConfig adam;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  /// Sources per reconstruction; 0 picks default_neighbor_count.
  std::size_t k = 0;
  /// Steps between checkpoint callbacks; 0 disables them.
  std::size_t checkpoint_interval = 0;

  std::size_t neighbor_count(std::size_t observation_count) const {
    return k == 0 ? default_neighbor_count(observation_count) : k;
  }
  /// Throws ConfigError.
  void validate(std::size_t observation_count) const;
};

/// Mean absolute error of predicting observation `target` from `sources`.
template <typename T>
ad::NodeId build_training_loss(ad::Graph<T>& g, const model::BoundParams& params,
                               const model::ModelConfig& config,
                               std::span<const Observation> observations,
                               std::size_t target,
                               std::span<const std::size_t> sources);

struct Checkpoint {
  model::DecoderParams<float> params;
  std::vector<AdamMoments<float>> moments;  // parallel to params.tensors()
  std::size_t step = 0;
  std::vector<double> loss_history;
};

struct StepResult {
  std::size_t step = 0;    // 0-based index of the step just taken
  std::size_t target = 0;  // observation reconstructed
  double loss = 0.0;       // loss before the update
};

/// Single-target reconstruction step followed by an Adam update of every
/// parameter. Throws NonFiniteError on a NaN/Inf loss or gradient.
double training_step(model::DecoderParams<float>& params,
                     std::vector<AdamMoments<float>>& moments, std::int64_t t,
                     std::span<const Observation> observations,
                     std::size_t target, const TrainConfig& config);

/// Per-scene optimizer. Iterates the observed coordinates in seeded shuffled
/// epochs and never evaluates an unobserved coordinate.
class Trainer {
 public:
  Trainer(std::vector<Observation> observations,
          model::DecoderParams<float> params, TrainConfig config);
  Trainer(std::vector<Observation> observations, Checkpoint checkpoint,
          TrainConfig config);

  StepResult step();

  using Callback = std::function<void(const StepResult&, const Trainer&)>;
  /// Runs until config.steps steps have been taken. `on_checkpoint` fires
  /// every checkpoint_interval steps and after the final step.
  void run(const Callback& on_step = {}, const Callback& on_checkpoint = {});

  /// Observation reconstructed at the given global step.
  std::size_t target_for_step(std::size_t step) const;

  const model::DecoderParams<float>& params() const { return params_; }
  const std::vector<Observation>& observations() const { return observations_; }
  const TrainConfig& config() const { return config_; }
  std::size_t step_index() const { return step_; }
  const std::vector<double>& loss_history() const { return losses_; }
  Checkpoint checkpoint() const;

 private:
  std::vector<Observation> observations_;
  model::DecoderParams<float> params_;
  std::vector<AdamMoments<float>> moments_;
  TrainConfig config_;
  std::size_t step_ = 0;
  std::vector<double> losses_;
};

}  // namespace xfields::train
