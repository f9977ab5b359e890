// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

// Binary model container:
//
//   "XFLD" | u32 version | u32 header_len | header (UTF-8 JSON)
//   then per tensor: u32 name_len | name | u32 rank | u64 extent * rank
//                    | f32 * prod(extents)
//
// All integers and floats are little-endian. The header lists the parameter
// tensors, the observation images ("obs/<i>") the renderer blends, the
// training metadata and, for checkpoints, the optimizer state.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xfields/trainer.hpp"

namespace xfields::renderd {

using ad::Tensor;

inline constexpr char kModelMagic[4] = {'X', 'F', 'L', 'D'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// The container as stored, with the header kept verbatim so that
/// serialize(parse(bytes)) == bytes.
struct RawModelFile {
  std::uint32_t version = kModelFormatVersion;
  std::string header;
  std::vector<model::NamedTensor<float>> tensors;
};

/// Throws BadMagicError, UnsupportedVersionError, TruncatedFileError,
/// DuplicateTensorError or SchemaError.
RawModelFile parse_model_file(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_model_file(const RawModelFile& file);

struct TrainingInfo {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double learning_rate = 0.0;
  std::size_t k = 0;  // sources per training reconstruction
  double final_loss = 0.0;

  bool operator==(const TrainingInfo&) const = default;
};

/// A trained X-Field: decoder parameters plus the observations it blends.
struct Model {
  std::string name;
  model::DecoderParams<float> params;
  std::vector<Observation> observations;
  std::vector<std::size_t> image_indices;  // manifest index of each observation
  TrainingInfo training;

  const model::ModelConfig& config() const { return params.config(); }
};

/// Optimizer state carried by checkpoints.
struct OptimizerState {
  std::vector<train::AdamMoments<float>> moments;  // parallel to params.tensors()
  std::size_t step = 0;
  std::vector<double> loss_history;
};

RawModelFile encode_model(const Model& model, const OptimizerState* state = nullptr);
/// Throws MissingTensorError when a listed tensor is absent, SchemaError for
/// header problems. `state` is filled from a checkpoint; requesting it from a
/// plain model file throws SchemaError.
Model decode_model(const RawModelFile& file, OptimizerState* state = nullptr);

void export_model(const Model& model, const std::filesystem::path& path);
Model import_model(const std::filesystem::path& path);

void save_checkpoint(const Model& model, const OptimizerState& state,
                     const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, OptimizerState& state);

}  // namespace xfields::renderd
