// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/model.hpp"

#include <algorithm>
#include <bit>
#include <random>

#include "xfields/ad/ops.hpp"

namespace xfields::model {
namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Where each dimension's Jacobian column comes from in the raw channels.
struct ColumnSource {
  DimensionKind kind;
  std::size_t channel;  // disparity channel for view kinds, first of two otherwise
};

std::vector<ColumnSource> column_layout(std::span<const DimensionSpec> dims) {
  std::vector<ColumnSource> layout;
  const bool any_view =
      std::any_of(dims.begin(), dims.end(),
                  [](const DimensionSpec& d) { return is_view(d.kind); });
  std::size_t next = any_view ? 1 : 0;
  for (const auto& d : dims) {
    if (is_view(d.kind)) {
      layout.push_back({d.kind, 0});
    } else {
      layout.push_back({d.kind, next});
      next += 2;
    }
  }
  return layout;
}

std::size_t layout_channels(std::span<const DimensionSpec> dims) {
  std::size_t n = 0;
  bool any_view = false;
  for (const auto& d : dims) {
    if (is_view(d.kind)) {
      any_view = true;
    } else {
      n += 2;
    }
  }
  return n + (any_view ? 1 : 0);
}

template <typename T>
class DisparityToJacobianOp final : public ad::Op<T> {
 public:
  explicit DisparityToJacobianOp(std::vector<ColumnSource> layout)
      : layout_(std::move(layout)) {}

  std::string name() const override { return "disparity_to_jacobian"; }

  ad::Shape output_shape(std::span<const ad::Shape> in) const override {
    if (in.size() != 1 || in[0].size() != 3) {
      throw ShapeError("expects one [h, w, R] input");
    }
    std::size_t needed = 0;
    for (const auto& c : layout_) {
      needed = std::max(needed, c.channel + (is_view(c.kind) ? 1 : 2));
    }
    if (in[0][2] != needed) {
      throw ShapeError("raw channel count " + std::to_string(in[0][2]) +
                       " does not match the dimension layout (" +
                       std::to_string(needed) + ")");
    }
    return {in[0][0], in[0][1], 2, layout_.size()};
  }

  void forward(typename ad::Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t r = in[0]->extent(2);
    const std::size_t nd = layout_.size();
    const std::size_t sites = in[0]->size() / r;
    const T* raw = in[0]->ptr();
    T* o = out.ptr();
    for (std::size_t s = 0; s < sites; ++s) {
      const T* px = raw + s * r;
      T* j = o + s * 2 * nd;
      for (std::size_t i = 0; i < nd; ++i) {
        const auto& c = layout_[i];
        switch (c.kind) {
          case DimensionKind::view_horizontal:
            j[i] = px[c.channel];
            j[nd + i] = T(0);
            break;
          case DimensionKind::view_vertical:
            j[i] = T(0);
            j[nd + i] = px[c.channel];
            break;
          default:
            j[i] = px[c.channel];
            j[nd + i] = px[c.channel + 1];
        }
      }
    }
  }

  void backward(typename ad::Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const std::size_t r = in[0]->extent(2);
    const std::size_t nd = layout_.size();
    const std::size_t sites = in[0]->size() / r;
    T* g = grads[0]->ptr();
    const T* go = grad_out.ptr();
    for (std::size_t s = 0; s < sites; ++s) {
      T* px = g + s * r;
      const T* j = go + s * 2 * nd;
      for (std::size_t i = 0; i < nd; ++i) {
        const auto& c = layout_[i];
        switch (c.kind) {
          case DimensionKind::view_horizontal: px[c.channel] += j[i]; break;
          case DimensionKind::view_vertical: px[c.channel] += j[nd + i]; break;
          default:
            px[c.channel] += j[i];
            px[c.channel + 1] += j[nd + i];
        }
      }
    }
  }

 private:
  std::vector<ColumnSource> layout_;
};

template <typename T>
class ProjectFlowOp final : public ad::Op<T> {
 public:
  explicit ProjectFlowOp(std::vector<double> delta) : delta_(std::move(delta)) {}

  std::string name() const override { return "project_flow"; }

  ad::Shape output_shape(std::span<const ad::Shape> in) const override {
    if (in.size() != 1 || in[0].size() != 4 || in[0][2] != 2) {
      throw ShapeError("expects one [H, W, 2, n_d] Jacobian map");
    }
    if (in[0][3] != delta_.size()) {
      throw ShapeError("delta has " + std::to_string(delta_.size()) +
                       " components, Jacobian has " + std::to_string(in[0][3]));
    }
    return {in[0][0], in[0][1], 2};
  }

  void forward(typename ad::Op<T>::Inputs in, Tensor<T>& out) const override {
    const std::size_t h = in[0]->extent(0), w = in[0]->extent(1);
    const std::size_t nd = delta_.size();
    const T* jac = in[0]->ptr();
    T* o = out.ptr();
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t s = y * w + x;
        const T* j = jac + s * 2 * nd;
        T dx = T(0), dy = T(0);
        for (std::size_t i = 0; i < nd; ++i) {
          dx += j[i] * static_cast<T>(delta_[i]);
          dy += j[nd + i] * static_cast<T>(delta_[i]);
        }
        o[2 * s] = static_cast<T>(x) + dx;
        o[2 * s + 1] = static_cast<T>(y) + dy;
      }
    }
  }

  void backward(typename ad::Op<T>::Inputs in, const Tensor<T>&,
                const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grads) const override {
    if (!grads[0]) return;
    const std::size_t nd = delta_.size();
    const std::size_t sites = in[0]->size() / (2 * nd);
    T* g = grads[0]->ptr();
    for (std::size_t s = 0; s < sites; ++s) {
      const T gx = grad_out[2 * s], gy = grad_out[2 * s + 1];
      T* j = g + s * 2 * nd;
      for (std::size_t i = 0; i < nd; ++i) {
        j[i] += gx * static_cast<T>(delta_[i]);
        j[nd + i] += gy * static_cast<T>(delta_[i]);
      }
    }
  }

 private:
  std::vector<double> delta_;
};

template <typename T>
NodeId coord_channels(Graph<T>& g, const ModelConfig& config,
                      const XFieldCoord& x) {
  const std::size_t h = config.seed_height(), w = config.seed_width();
  const std::size_t nd = config.dimension_count();
  Tensor<T> t({h, w, nd + 2});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      for (std::size_t i = 0; i < nd; ++i) t.at(y, xx, i) = static_cast<T>(x[i]);
      t.at(y, xx, nd) = static_cast<T>((xx + 0.5) / w * 2.0 - 1.0);
      t.at(y, xx, nd + 1) = static_cast<T>((y + 0.5) / h * 2.0 - 1.0);
    }
  }
  return g.constant(std::move(t));
}

std::string stage_name(std::size_t i, const char* what) {
  return "stage" + std::to_string(i) + "." + what;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (dims.empty()) throw ConfigError("model needs at least one dimension");
  if (flow_downsample != 1 && flow_downsample != 2 && flow_downsample != 4) {
    throw ConfigError("flow_downsample must be 1, 2 or 4");
  }
  if (height % flow_downsample || width % flow_downsample) {
    throw ConfigError("image size must be divisible by flow_downsample");
  }
  const std::size_t fh = flow_height(), fw = flow_width();
  if (fh < 2 || fw < 2 || !is_power_of_two(fh) || !is_power_of_two(fw)) {
    throw ConfigError("flow resolution " + std::to_string(fh) + "x" +
                      std::to_string(fw) +
                      " is not a power-of-two multiple of 2");
  }
  if (seed_channels == 0 || min_channels == 0 || min_channels > seed_channels) {
    throw ConfigError("channel schedule needs 0 < min_channels <= seed_channels");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ConfigError("leaky_slope must lie in (0, 1)");
  }
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
}

std::size_t ModelConfig::stage_count() const {
  const std::size_t smallest = std::min(flow_height(), flow_width());
  return static_cast<std::size_t>(std::countr_zero(smallest)) - 1;
}

std::vector<std::size_t> ModelConfig::channel_schedule() const {
  std::vector<std::size_t> out{seed_channels};
  for (std::size_t i = 0; i < stage_count(); ++i) {
    out.push_back(std::max(min_channels, out.back() / 2));
  }
  return out;
}

std::size_t ModelConfig::raw_channels() const { return layout_channels(dims); }

// ---------------------------------------------------------------------------
// DecoderParams

template <typename T>
bool DecoderParams<T>::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const auto& t) { return t.name == name; });
}

template <typename T>
Tensor<T>& DecoderParams<T>::get(std::string_view name) {
  for (auto& t : tensors_) {
    if (t.name == name) return t.value;
  }
  throw MissingTensorError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Tensor<T>& DecoderParams<T>::get(std::string_view name) const {
  return const_cast<DecoderParams*>(this)->get(name);
}

template <typename T>
std::size_t DecoderParams<T>::network_parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) {
    if (!t.name.starts_with("shading.")) n += t.value.size();
  }
  return n;
}

template <typename T>
std::size_t DecoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

template class DecoderParams<float>;
template class DecoderParams<double>;

std::string shading_name(std::size_t observation) {
  return "shading." + std::to_string(observation);
}

DecoderParams<float> init_params(const ModelConfig& config,
                                 std::size_t observation_count,
                                 std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto glorot_uniform = [&rng](ad::Shape shape, std::size_t fan_in, std::size_t fan_out) {
    Tensor<float> t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (float& v : t.data()) v = static_cast<float>(dist(rng));
    return t;
  };

  const std::size_t nd = config.dimension_count();
  const auto schedule = config.channel_schedule();
  const std::size_t seed_size =
      config.seed_height() * config.seed_width() * schedule[0];

  std::vector<NamedTensor<float>> tensors;
  tensors.push_back({"fc.weight", glorot_uniform({nd, seed_size}, nd, seed_size)});
  tensors.push_back({"fc.bias", Tensor<float>({seed_size})});

  std::size_t in_channels = schedule[0] + nd + 2;
  for (std::size_t i = 0; i + 1 < schedule.size(); ++i) {
    const std::size_t out_channels = schedule[i + 1];
    tensors.push_back({stage_name(i, "weight"),
                       glorot_uniform({3, 3, in_channels, out_channels},
                                      9 * in_channels, 9 * out_channels)});
    tensors.push_back({stage_name(i, "bias"), Tensor<float>({out_channels})});
    in_channels = out_channels;
  }

  const std::size_t raw = config.raw_channels();
  tensors.push_back({"head.flow.weight", Tensor<float>({3, 3, in_channels, raw})});
  tensors.push_back({"head.flow.bias", Tensor<float>({raw})});
  if (config.delight) {
    tensors.push_back({"head.shading.weight", Tensor<float>({3, 3, in_channels, raw})});
    tensors.push_back({"head.shading.bias", Tensor<float>({raw})});
    for (std::size_t j = 0; j < observation_count; ++j) {
      tensors.push_back(
          {shading_name(j), Tensor<float>({config.height, config.width, 3})});
    }
  }
  return DecoderParams<float>(config, std::move(tensors));
}

NodeId BoundParams::operator[](std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return ids_[i];
  }
  throw MissingTensorError("parameter '" + std::string(name) + "' is not bound");
}

template <typename T>
BoundParams bind_params(Graph<T>& g, const DecoderParams<T>& params,
                        bool trainable) {
  BoundParams bound;
  for (const auto& t : params.tensors()) {
    bound.add(t.name, trainable ? g.parameter(t.value, t.name)
                                : g.constant(t.value));
  }
  return bound;
}

// ---------------------------------------------------------------------------
// Decoder

template <typename T>
JacobianHeads decode_jacobian(Graph<T>& g, const BoundParams& params,
                              const ModelConfig& config, const XFieldCoord& x) {
  if (x.size() != config.dimension_count()) {
    throw ShapeError("coordinate has " + std::to_string(x.size()) +
                     " components, model has " +
                     std::to_string(config.dimension_count()));
  }
  const double slope = config.leaky_slope;
  const auto schedule = config.channel_schedule();

  Tensor<T> xin({x.size()});
  for (std::size_t i = 0; i < x.size(); ++i) xin[i] = static_cast<T>(x[i]);
  NodeId h = ad::linear(g, g.constant(std::move(xin)), params["fc.weight"],
                        params["fc.bias"]);
  h = ad::leaky_relu(g, h, slope);
  h = ad::reshape(g, h, {config.seed_height(), config.seed_width(), schedule[0]});
  h = ad::concat_last(g, {h, coord_channels(g, config, x)});

  for (std::size_t i = 0; i < config.stage_count(); ++i) {
    h = ad::upsample2x(g, h);
    h = ad::conv2d(g, h, params[stage_name(i, "weight")],
                   params[stage_name(i, "bias")]);
    h = ad::leaky_relu(g, h, slope);
  }

  // Heads speak normalized image units; scaling to pixels here keeps the
  // optimizer's step size independent of the resolution.
  const double to_px = config.jacobian_scale();
  JacobianHeads heads;
  const NodeId raw = ad::conv2d(g, h, params["head.flow.weight"],
                                params["head.flow.bias"]);
  heads.flow = disparity_to_jacobian(g, ad::scale(g, raw, to_px), config.dims);
  if (config.delight) {
    const NodeId raw_s = ad::conv2d(g, h, params["head.shading.weight"],
                                    params["head.shading.bias"]);
    heads.shading = disparity_to_jacobian(g, ad::scale(g, raw_s, to_px), config.dims);
  }
  return heads;
}

template <typename T>
NodeId disparity_to_jacobian(Graph<T>& g, NodeId raw,
                             std::span<const DimensionSpec> dims) {
  if (dims.empty()) {
    throw ConfigError("disparity_to_jacobian needs dimension metadata");
  }
  return g.apply(std::make_shared<const DisparityToJacobianOp<T>>(column_layout(dims)),
                 {raw});
}

template <typename T>
NodeId upsample_jacobian(Graph<T>& g, NodeId jacobian, std::size_t factor) {
  if (factor != 1 && factor != 2 && factor != 4) {
    throw ConfigError("flow upsampling factor must be 1, 2 or 4");
  }
  if (factor == 1) return jacobian;
  const ad::Shape s = g.shape(jacobian);
  NodeId flat = ad::reshape(g, jacobian, {s[0], s[1], s[2] * s[3]});
  for (std::size_t f = factor; f > 1; f /= 2) flat = ad::upsample2x(g, flat);
  return ad::reshape(g, flat, {s[0] * factor, s[1] * factor, s[2], s[3]});
}

template <typename T>
NodeId project_flow(Graph<T>& g, NodeId jacobian, std::span<const double> delta) {
  return g.apply(std::make_shared<const ProjectFlowOp<T>>(
                     std::vector<double>(delta.begin(), delta.end())),
                 {jacobian});
}

template <typename T>
NodeId warp(Graph<T>& g, NodeId image, NodeId flow) {
  return ad::bilinear_sample(g, image, flow);
}

template <typename T>
Tensor<T> position_grid(std::size_t height, std::size_t width) {
  Tensor<T> grid({height, width, 2});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      grid.at(y, x, 0) = static_cast<T>(x);
      grid.at(y, x, 1) = static_cast<T>(y);
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Consistency and blending

template <typename T>
ConsistencyNodes consistency_weights(Graph<T>& g, const XFieldCoord& x,
                                     NodeId jacobian_x,
                                     std::span<const SourceFlow> sources,
                                     double sigma) {
  if (sources.empty()) throw ConfigError("consistency needs at least one source");
  const ad::Shape& js = g.shape(jacobian_x);
  const NodeId grid = g.constant(position_grid<T>(js[0], js[1]));

  ConsistencyNodes out;
  for (const SourceFlow& s : sources) {
    const auto forward_delta = coord_delta(x, s.coord);
    const auto backward_delta = coord_delta(s.coord, x);
    const NodeId q = project_flow(g, jacobian_x, forward_delta);
    const NodeId back = project_flow(g, s.jacobian, backward_delta);
    const NodeId back_at_q = ad::bilinear_sample(g, back, q);
    const NodeId residual =
        ad::sum_last_axis(g, ad::abs(g, ad::sub(g, grid, back_at_q)));
    out.read_positions.push_back(q);
    out.residuals.push_back(residual);
  }
  // exp(-sigma r_s) / sum exp(-sigma r) with the per-pixel maximum factored out.
  const NodeId logits = ad::scale(g, ad::concat_last(g, out.residuals), -sigma);
  const NodeId normalized = ad::softmax_last(g, logits);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    out.weights.push_back(ad::slice_last(g, normalized, i));
  }
  return out;
}

template <typename T>
NodeId blend(Graph<T>& g, const ConsistencyNodes& consistency,
             std::span<const NodeId> images) {
  if (images.size() != consistency.weights.size() || images.empty()) {
    throw ShapeError("blend needs one image per consistency weight");
  }
  std::optional<NodeId> acc;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const NodeId warped = warp(g, images[i], consistency.read_positions[i]);
    const NodeId term = ad::mul_broadcast_last(g, warped, consistency.weights[i]);
    acc = acc ? ad::add(g, *acc, term) : term;
  }
  return *acc;
}

template <typename T>
ShadingSplit delight_decompose(Graph<T>& g, NodeId image, NodeId raw_shading) {
  const NodeId shading = ad::exp(g, raw_shading);
  const NodeId albedo =
      ad::div(g, image, ad::add_scalar(g, shading, kShadingEpsilon));
  return {shading, albedo};
}

template <typename T>
NodeId interpolate(Graph<T>& g, const ModelConfig& config, const XFieldCoord& x,
                   const JacobianHeads& target,
                   std::span<const SourceInput> sources) {
  if (sources.empty()) throw ConfigError("interpolate needs at least one source");

  auto layer = [&](NodeId target_jacobian, bool shading_head,
                   const std::vector<NodeId>& images) {
    std::vector<SourceFlow> flows;
    for (const auto& s : sources) {
      flows.push_back({s.coord, shading_head ? *s.jacobians.shading
                                             : s.jacobians.flow});
    }
    const auto cons = consistency_weights(g, x, target_jacobian,
                                          std::span<const SourceFlow>(flows),
                                          config.sigma);
    return blend(g, cons, std::span<const NodeId>(images));
  };

  if (!config.delight) {
    std::vector<NodeId> images;
    for (const auto& s : sources) images.push_back(s.image);
    return layer(target.flow, false, images);
  }

  if (!target.shading) throw ConfigError("de-lighting needs a shading Jacobian");
  std::vector<NodeId> albedo, shading;
  for (const auto& s : sources) {
    if (!s.raw_shading || !s.jacobians.shading) {
      throw ConfigError("de-lighting needs per-source shading parameters");
    }
    const auto split = delight_decompose(g, s.image, *s.raw_shading);
    albedo.push_back(split.albedo);
    shading.push_back(split.shading);
  }
  const NodeId a = layer(target.flow, false, albedo);
  const NodeId e = layer(*target.shading, true, shading);
  return ad::mul(g, a, e);
}

template <typename T>
NodeId build_prediction(Graph<T>& g, const BoundParams& params,
                        const ModelConfig& config,
                        std::span<const Observation> observations,
                        std::span<const std::size_t> sources,
                        const XFieldCoord& x) {
  const std::size_t factor = config.flow_downsample;
  auto full_res = [&](JacobianHeads heads) {
    heads.flow = upsample_jacobian(g, heads.flow, factor);
    if (heads.shading) heads.shading = upsample_jacobian(g, *heads.shading, factor);
    return heads;
  };

  const JacobianHeads target = full_res(decode_jacobian(g, params, config, x));
  std::vector<SourceInput> inputs;
  for (const std::size_t idx : sources) {
    const Observation& obs = observations[idx];
    SourceInput in;
    in.coord = obs.coord;
    in.image = g.constant(obs.image.template cast<T>());
    in.jacobians = full_res(decode_jacobian(g, params, config, obs.coord));
    if (config.delight) in.raw_shading = params[shading_name(idx)];
    inputs.push_back(std::move(in));
  }
  return interpolate(g, config, x, target, std::span<const SourceInput>(inputs));
}

Tensor<float> evaluate_jacobian(const DecoderParams<float>& params,
                                const XFieldCoord& x, bool shading_head) {
  Graph<float> g;
  const BoundParams bound = bind_params(g, params, false);
  const JacobianHeads heads = decode_jacobian(g, bound, params.config(), x);
  if (shading_head && !heads.shading) {
    throw ConfigError("model has no shading head");
  }
  g.forward();
  return g.value(shading_head ? *heads.shading : heads.flow);
}

ShadingAlbedo delight_decompose(const DecoderParams<float>& params,
                                const Observation& observation,
                                std::size_t observation_index) {
  if (!params.config().delight) {
    throw ConfigError("de-lighting is disabled for this model");
  }
  Graph<float> g;
  const NodeId image = g.constant(observation.image);
  const NodeId raw = g.constant(params.get(shading_name(observation_index)));
  const ShadingSplit split = delight_decompose(g, image, raw);
  g.forward();
  return {g.value(split.shading), g.value(split.albedo)};
}

#define XFIELDS_INSTANTIATE_MODEL(T)                                           \
  template BoundParams bind_params<T>(Graph<T>&, const DecoderParams<T>&, bool); \
  template JacobianHeads decode_jacobian<T>(Graph<T>&, const BoundParams&,     \
                                            const ModelConfig&,                \
                                            const XFieldCoord&);               \
  template NodeId disparity_to_jacobian<T>(Graph<T>&, NodeId,                  \
                                           std::span<const DimensionSpec>);    \
  template NodeId upsample_jacobian<T>(Graph<T>&, NodeId, std::size_t);        \
  template NodeId project_flow<T>(Graph<T>&, NodeId, std::span<const double>); \
  template NodeId warp<T>(Graph<T>&, NodeId, NodeId);                          \
  template Tensor<T> position_grid<T>(std::size_t, std::size_t);               \
  template ConsistencyNodes consistency_weights<T>(                            \
      Graph<T>&, const XFieldCoord&, NodeId, std::span<const SourceFlow>,      \
      double);                                                                 \
  template NodeId blend<T>(Graph<T>&, const ConsistencyNodes&,                 \
                           std::span<const NodeId>);                           \
  template ShadingSplit delight_decompose<T>(Graph<T>&, NodeId, NodeId);       \
  template NodeId interpolate<T>(Graph<T>&, const ModelConfig&,                \
                                 const XFieldCoord&, const JacobianHeads&,     \
                                 std::span<const SourceInput>);                \
  template NodeId build_prediction<T>(                                         \
      Graph<T>&, const BoundParams&, const ModelConfig&,                       \
      std::span<const Observation>, std::span<const std::size_t>,              \
      const XFieldCoord&);

XFIELDS_INSTANTIATE_MODEL(float)
XFIELDS_INSTANTIATE_MODEL(double)

#undef XFIELDS_INSTANTIATE_MODEL

}  // namespace xfields::model
