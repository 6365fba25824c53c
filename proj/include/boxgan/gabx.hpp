// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// GABX tensor container used for checkpoints.
//
//   "GABX"                      4 bytes
//   version                     u32
//   tensor count                u32
//   per tensor:
//     name length, name bytes   u32, UTF-8
//     rank, extents             u32, u32 x rank
//     payload                   float32 x product(extents)
//
// Every integer and float is little-endian.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "boxgan/tensor.hpp"

namespace boxgan::ad {

inline constexpr std::uint32_t kGabxVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

using TensorBundle = std::vector<NamedTensor>;

std::string encode_gabx(const TensorBundle& bundle);
/// Throws DataError on a bad magic, unsupported version, or truncation.
TensorBundle decode_gabx(std::string_view bytes);

void write_gabx(const std::filesystem::path& path, const TensorBundle& bundle);
TensorBundle read_gabx(const std::filesystem::path& path);

const Tensor<float>* find_tensor(const TensorBundle& bundle, std::string_view name);

}  // namespace boxgan::ad
