// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "boxgan/tensor.hpp"

namespace boxgan {

/// SplitMix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed of the independent stream `index` derived from `seed`.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ull));
}

template <typename T>
ad::Tensor<T> normal_tensor(const ad::Shape& shape, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> n(0.0, stddev);
  ad::Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(n(rng));
  return t;
}

}  // namespace boxgan
