// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "xfields/ad/tensor.hpp"

namespace xfields::data {

/// Decodes any PNG to an H x W x 3 tensor with values k / 255.
ad::Tensor<float> decode_png(std::span<const std::uint8_t> bytes);

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded to the nearest
/// code. Accepts H x W x 3 (or H x W x 1, replicated to gray RGB).
std::vector<std::uint8_t> encode_png(const ad::Tensor<float>& image);

ad::Tensor<float> load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ad::Tensor<float>& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace xfields::data
