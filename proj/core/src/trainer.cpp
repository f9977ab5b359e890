// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "xfields/ad/ops.hpp"

namespace xfields::train {

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamMoments<T>& moments,
               std::int64_t t, const AdamConfig& config) {
  if (t < 1) throw ConfigError("adam step count must be >= 1");
  if (grad.shape() != param.shape()) {
    throw ShapeError("adam: gradient shape " + ad::shape_to_string(grad.shape()) +
                     " != parameter shape " + ad::shape_to_string(param.shape()));
  }
  if (moments.first.empty()) moments.first = Tensor<T>(param.shape());
  if (moments.second.empty()) moments.second = Tensor<T>(param.shape());

  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.epsilon);
  const T c1 = T(1) - static_cast<T>(std::pow(config.beta1, static_cast<double>(t)));
  const T c2 = T(1) - static_cast<T>(std::pow(config.beta2, static_cast<double>(t)));

  T* p = param.ptr();
  T* m = moments.first.ptr();
  T* v = moments.second.ptr();
  const T* g = grad.ptr();
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const T m_hat = m[i] / c1;
    const T v_hat = v[i] / c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template void adam_step<float>(Tensor<float>&, const Tensor<float>&,
                               AdamMoments<float>&, std::int64_t, const AdamConfig&);
template void adam_step<double>(Tensor<double>&, const Tensor<double>&,
                                AdamMoments<double>&, std::int64_t, const AdamConfig&);

std::vector<std::size_t> neighbor_select(const XFieldCoord& target,
                                         std::span<const XFieldCoord> pool,
                                         std::size_t k, bool exclude_target) {
  if (pool.empty()) throw ConfigError("neighbor_select: empty pool");
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (exclude_target && pool[i] == target) continue;
    ranked.emplace_back(squared_distance(target, pool[i]), i);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  ranked.resize(std::min(k, ranked.size()));
  std::vector<std::size_t> out;
  for (const auto& r : ranked) out.push_back(r.second);
  return out;
}

std::size_t default_neighbor_count(std::size_t observation_count) {
  if (observation_count <= 9) return observation_count > 0 ? observation_count - 1 : 0;
  return 4;
}

void TrainConfig::validate(std::size_t observation_count) const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (observation_count < 2) {
    throw ConfigError("training needs at least two observations");
  }
  const std::size_t kk = neighbor_count(observation_count);
  if (kk < 1 || kk > observation_count - 1) {
    throw ConfigError("k must lie in [1, " + std::to_string(observation_count - 1) +
                      "], got " + std::to_string(kk));
  }
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

template <typename T>
ad::NodeId build_training_loss(ad::Graph<T>& g, const model::BoundParams& params,
                               const model::ModelConfig& config,
                               std::span<const Observation> observations,
                               std::size_t target,
                               std::span<const std::size_t> sources) {
  const Observation& obs = observations[target];
  const ad::NodeId prediction =
      model::build_prediction(g, params, config, observations, sources, obs.coord);
  const ad::NodeId truth = g.constant(obs.image.template cast<T>());
  return ad::mean(g, ad::abs(g, ad::sub(g, prediction, truth)));
}

template ad::NodeId build_training_loss<float>(
    ad::Graph<float>&, const model::BoundParams&, const model::ModelConfig&,
    std::span<const Observation>, std::size_t, std::span<const std::size_t>);
template ad::NodeId build_training_loss<double>(
    ad::Graph<double>&, const model::BoundParams&, const model::ModelConfig&,
    std::span<const Observation>, std::size_t, std::span<const std::size_t>);

namespace {

std::vector<XFieldCoord> coords_of(std::span<const Observation> observations) {
  std::vector<XFieldCoord> out;
  for (const auto& o : observations) out.push_back(o.coord);
  return out;
}

}  // namespace

double training_step(model::DecoderParams<float>& params,
                     std::vector<AdamMoments<float>>& moments, std::int64_t t,
                     std::span<const Observation> observations,
                     std::size_t target, const TrainConfig& config) {
  const auto pool = coords_of(observations);
  const auto sources = neighbor_select(
      observations[target].coord, pool, config.neighbor_count(observations.size()));

  ad::Graph<float> g;
  const model::BoundParams bound = model::bind_params(g, params, true);
  const ad::NodeId loss =
      build_training_loss(g, bound, params.config(), observations, target, sources);
  g.forward();
  const double value = g.value(loss)[0];
  const ad::Gradients<float> grads = g.backward(loss);

  if (moments.size() != params.tensors().size()) {
    moments.resize(params.tensors().size());
  }
  auto& tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Tensor<float>& grad = grads.at(bound.ids()[i]);
    if (!grad.all_finite()) {
      throw NonFiniteError(bound.ids()[i].index, "gradient of " + tensors[i].name);
    }
    adam_step(tensors[i].value, grad, moments[i], t, config.adam);
  }
  return value;
}

Trainer::Trainer(std::vector<Observation> observations,
                 model::DecoderParams<float> params, TrainConfig config)
    : observations_(std::move(observations)),
      params_(std::move(params)),
      moments_(params_.tensors().size()),
      config_(config) {
  config_.validate(observations_.size());
}

Trainer::Trainer(std::vector<Observation> observations, Checkpoint checkpoint,
                 TrainConfig config)
    : observations_(std::move(observations)),
      params_(std::move(checkpoint.params)),
      moments_(std::move(checkpoint.moments)),
      config_(config),
      step_(checkpoint.step),
      losses_(std::move(checkpoint.loss_history)) {
  config_.validate(observations_.size());
  moments_.resize(params_.tensors().size());
}

std::size_t Trainer::target_for_step(std::size_t step) const {
  const std::size_t n = observations_.size();
  const std::uint64_t epoch = step / n;
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed),
                    static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with plain modulo keeps the schedule independent of the
  // standard library's distribution implementations.
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  return order[step % n];
}

StepResult Trainer::step() {
  StepResult r;
  r.step = step_;
  r.target = target_for_step(step_);
  r.loss = training_step(params_, moments_, static_cast<std::int64_t>(step_ + 1),
                         observations_, r.target, config_);
  losses_.push_back(r.loss);
  ++step_;
  return r;
}

void Trainer::run(const Callback& on_step, const Callback& on_checkpoint) {
  while (step_ < config_.steps) {
    const StepResult r = step();
    if (on_step) on_step(r, *this);
    const bool last = step_ == config_.steps;
    const bool interval = config_.checkpoint_interval > 0 &&
                          step_ % config_.checkpoint_interval == 0;
    if (on_checkpoint && (interval || last)) on_checkpoint(r, *this);
  }
}

Checkpoint Trainer::checkpoint() const {
  return Checkpoint{params_, moments_, step_, losses_};
}

}  // namespace xfields::train
