// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/model_file.hpp"

#include <bit>
#include <cstring>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "xfields/image_io.hpp"

namespace xfields::renderd {
namespace {

using Json = nlohmann::ordered_json;

constexpr std::size_t kMaxRank = 8;
constexpr std::size_t kMaxNameLength = 4096;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32s(std::span<const float> values) {
    out_.reserve(out_.size() + values.size() * 4);
    for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw TruncatedFileError(std::string("model file truncated while reading ") + what);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void header_fail(const std::string& what) {
  throw SchemaError("model header: " + what);
}

const Json& field(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) header_fail(std::string("missing \"") + key + "\"");
  return *it;
}

template <typename V>
V get(const Json& obj, const char* key) {
  try {
    return field(obj, key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    header_fail(std::string("bad \"") + key + "\": " + e.what());
  }
}

std::string observation_tensor(std::size_t i) { return "obs/" + std::to_string(i); }
std::string moment_name(const char* which, const std::string& param) {
  return std::string("adam.") + which + "." + param;
}

}  // namespace

RawModelFile parse_model_file(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::size_t head = std::min<std::size_t>(bytes.size(), 4);
  if (bytes.empty() || std::memcmp(bytes.data(), kModelMagic, head) != 0) {
    throw BadMagicError("not an xfields model file (bad magic)");
  }
  r.take(4, "magic");
  RawModelFile file;
  file.version = r.u32("version");
  if (file.version != kModelFormatVersion) {
    throw UnsupportedVersionError("unsupported model format version " +
                                  std::to_string(file.version) + " (expected " +
                                  std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint32_t header_len = r.u32("header length");
  const auto header = r.take(header_len, "header");
  file.header.assign(reinterpret_cast<const char*>(header.data()), header.size());

  std::set<std::string> names;
  while (!r.done()) {
    const std::uint32_t name_len = r.u32("tensor name length");
    if (name_len == 0 || name_len > kMaxNameLength) {
      throw SchemaError("model file: invalid tensor name length " + std::to_string(name_len));
    }
    const auto name_bytes = r.take(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
    if (!names.insert(name).second) {
      throw DuplicateTensorError("model file: tensor \"" + name + "\" appears twice");
    }
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > kMaxRank) {
      throw SchemaError("model file: tensor \"" + name + "\" has rank " + std::to_string(rank));
    }
    ad::Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t e = r.u64("tensor extent");
      if (e == 0) throw SchemaError("model file: tensor \"" + name + "\" has a zero extent");
      if (e > r.remaining() || count > r.remaining() / e) {
        throw TruncatedFileError("model file truncated inside tensor \"" + name + "\"");
      }
      count *= static_cast<std::size_t>(e);
      shape.push_back(static_cast<std::size_t>(e));
    }
    if (count > r.remaining() / 4) {
      throw TruncatedFileError("model file truncated inside tensor \"" + name + "\"");
    }
    const auto data = r.take(count * 4, "tensor data");
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(data[i * 4 + b]) << (8 * b);
      values[i] = std::bit_cast<float>(u);
    }
    file.tensors.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
  }
  return file;
}

std::vector<std::uint8_t> serialize_model_file(const RawModelFile& file) {
  Writer w;
  w.bytes(kModelMagic, 4);
  w.u32(file.version);
  w.u32(static_cast<std::uint32_t>(file.header.size()));
  w.bytes(file.header.data(), file.header.size());
  for (const auto& t : file.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t e : t.value.shape()) w.u64(e);
    w.f32s(t.value.data());
  }
  return w.take();
}

RawModelFile encode_model(const Model& m, const OptimizerState* state) {
  const model::ModelConfig& c = m.config();
  c.validate();
  if (m.image_indices.size() != m.observations.size()) {
    throw ConfigError("image_indices must parallel observations");
  }

  Json h;
  h["format"] = "xfields-model";
  h["name"] = m.name;
  h["n_d"] = c.dimension_count();
  Json dims = Json::array();
  for (const auto& d : c.dims) {
    dims.push_back({{"name", d.name}, {"kind", std::string(to_string(d.kind))},
                    {"min", d.min}, {"max", d.max}});
  }
  h["dims"] = std::move(dims);
  h["resolution"] = {{"width", c.width}, {"height", c.height}};
  h["flow_downsample"] = c.flow_downsample;
  h["seed_channels"] = c.seed_channels;
  h["min_channels"] = c.min_channels;
  h["channel_schedule"] = c.channel_schedule();
  h["leaky_slope"] = c.leaky_slope;
  h["sigma"] = c.sigma;
  h["flags"] = {{"delight", c.delight}};
  h["training"] = {{"seed", m.training.seed},
                   {"steps", m.training.steps},
                   {"learning_rate", m.training.learning_rate},
                   {"k", m.training.k},
                   {"final_loss", m.training.final_loss}};
  Json obs = Json::array();
  for (std::size_t i = 0; i < m.observations.size(); ++i) {
    obs.push_back({{"tensor", observation_tensor(i)},
                   {"image_index", m.image_indices[i]},
                   {"coord", m.observations[i].coord.values()}});
  }
  h["observations"] = std::move(obs);
  Json names = Json::array();
  for (const auto& t : m.params.tensors()) names.push_back(t.name);
  h["parameters"] = std::move(names);
  if (state) {
    h["checkpoint"] = {{"step", state->step}, {"loss_history", state->loss_history}};
  }

  RawModelFile file;
  file.header = h.dump();
  for (const auto& t : m.params.tensors()) file.tensors.push_back(t);
  for (std::size_t i = 0; i < m.observations.size(); ++i) {
    file.tensors.push_back({observation_tensor(i), m.observations[i].image});
  }
  if (state) {
    const auto& tensors = m.params.tensors();
    if (state->moments.size() != tensors.size()) {
      throw ConfigError("optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& mo = state->moments[i];
      // Moments are created lazily; an untouched parameter stores zeros.
      file.tensors.push_back({moment_name("m", tensors[i].name),
                              mo.first.empty() ? Tensor<float>(tensors[i].value.shape()) : mo.first});
      file.tensors.push_back({moment_name("v", tensors[i].name),
                              mo.second.empty() ? Tensor<float>(tensors[i].value.shape()) : mo.second});
    }
  }
  return file;
}

Model decode_model(const RawModelFile& file, OptimizerState* state) {
  Json h;
  try {
    h = Json::parse(file.header);
  } catch (const nlohmann::json::exception& e) {
    header_fail(std::string("invalid JSON: ") + e.what());
  }
  if (!h.is_object()) header_fail("not an object");
  if (get<std::string>(h, "format") != "xfields-model") header_fail("unknown format tag");

  model::ModelConfig c;
  for (const Json& d : field(h, "dims")) {
    DimensionSpec spec;
    spec.name = get<std::string>(d, "name");
    spec.kind = dimension_kind_from_string(get<std::string>(d, "kind"));
    spec.min = get<double>(d, "min");
    spec.max = get<double>(d, "max");
    c.dims.push_back(std::move(spec));
  }
  if (get<std::size_t>(h, "n_d") != c.dims.size()) header_fail("n_d disagrees with dims");
  const Json& res = field(h, "resolution");
  c.width = get<std::size_t>(res, "width");
  c.height = get<std::size_t>(res, "height");
  c.flow_downsample = get<std::size_t>(h, "flow_downsample");
  c.seed_channels = get<std::size_t>(h, "seed_channels");
  c.min_channels = get<std::size_t>(h, "min_channels");
  c.leaky_slope = get<double>(h, "leaky_slope");
  c.sigma = get<double>(h, "sigma");
  c.delight = get<bool>(field(h, "flags"), "delight");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    header_fail(std::string("invalid configuration: ") + e.what());
  }
  if (get<std::vector<std::size_t>>(h, "channel_schedule") != c.channel_schedule()) {
    header_fail("channel schedule disagrees with the configuration");
  }

  std::unordered_map<std::string, const Tensor<float>*> by_name;
  for (const auto& t : file.tensors) {
    if (!by_name.emplace(t.name, &t.value).second) {
      throw DuplicateTensorError("model file: tensor \"" + t.name + "\" appears twice");
    }
  }
  auto tensor = [&](const std::string& name) -> const Tensor<float>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw MissingTensorError("model file: missing tensor \"" + name + "\"");
    return *it->second;
  };

  Model m;
  m.name = get<std::string>(h, "name");
  const Json& tr = field(h, "training");
  m.training.seed = get<std::uint64_t>(tr, "seed");
  m.training.steps = get<std::size_t>(tr, "steps");
  m.training.learning_rate = get<double>(tr, "learning_rate");
  m.training.k = get<std::size_t>(tr, "k");
  m.training.final_loss = get<double>(tr, "final_loss");

  const ad::Shape image_shape{c.height, c.width, 3};
  for (const Json& o : field(h, "observations")) {
    const auto coord = get<std::vector<double>>(o, "coord");
    if (coord.size() != c.dims.size()) {
      throw CoordinateLengthError("model header: observation coordinate has " +
                                  std::to_string(coord.size()) + " components");
    }
    const Tensor<float>& img = tensor(get<std::string>(o, "tensor"));
    if (img.shape() != image_shape) header_fail("observation image has the wrong shape");
    m.observations.push_back({XFieldCoord(coord), img});
    m.image_indices.push_back(get<std::size_t>(o, "image_index"));
  }

  const auto names = get<std::vector<std::string>>(h, "parameters");
  const model::DecoderParams<float> expected =
      model::init_params(c, m.observations.size(), 0);
  if (names.size() != expected.tensors().size()) {
    header_fail("parameter list has " + std::to_string(names.size()) + " entries, expected " +
                std::to_string(expected.tensors().size()));
  }
  std::vector<model::NamedTensor<float>> params;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& want = expected.tensors()[i];
    if (names[i] != want.name) header_fail("unexpected parameter \"" + names[i] + "\"");
    const Tensor<float>& t = tensor(names[i]);
    if (t.shape() != want.value.shape()) {
      header_fail("parameter \"" + names[i] + "\" has shape " + ad::shape_to_string(t.shape()) +
                  ", expected " + ad::shape_to_string(want.value.shape()));
    }
    params.push_back({names[i], t});
  }
  m.params = model::DecoderParams<float>(c, std::move(params));

  if (state) {
    auto it = h.find("checkpoint");
    if (it == h.end()) header_fail("not a checkpoint (no optimizer state)");
    state->step = get<std::size_t>(*it, "step");
    state->loss_history = get<std::vector<double>>(*it, "loss_history");
    state->moments.clear();
    for (const auto& p : m.params.tensors()) {
      train::AdamMoments<float> mo{tensor(moment_name("m", p.name)),
                                   tensor(moment_name("v", p.name))};
      if (mo.first.shape() != p.value.shape() || mo.second.shape() != p.value.shape()) {
        header_fail("optimizer moments for \"" + p.name + "\" have the wrong shape");
      }
      state->moments.push_back(std::move(mo));
    }
  }
  return m;
}

void export_model(const Model& model, const std::filesystem::path& path) {
  data::write_file(path, serialize_model_file(encode_model(model)));
}

Model import_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FileNotFoundError("model not found: " + path.string());
  return decode_model(parse_model_file(data::read_file(path)));
}

void save_checkpoint(const Model& model, const OptimizerState& state,
                     const std::filesystem::path& path) {
  data::write_file(path, serialize_model_file(encode_model(model, &state)));
}

Model load_checkpoint(const std::filesystem::path& path, OptimizerState& state) {
  if (!std::filesystem::exists(path)) {
    throw FileNotFoundError("checkpoint not found: " + path.string());
  }
  return decode_model(parse_model_file(data::read_file(path)), &state);
}

}  // namespace xfields::renderd
