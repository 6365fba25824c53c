// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic single-object scenes (circle, square, triangle on a gradient
// background) and the on-disk dataset format:
//
//   <dir>/images/<name>.png   8-bit RGB
//   <dir>/labels/<name>.txt   one line per object: "class_id x1 y1 x2 y2"
//
// Coordinates are normalized and written with 6 decimals.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "boxgan/detloss.hpp"
#include "boxgan/tensor.hpp"

namespace boxgan::scenes {

enum class Shape { circle = 0, square = 1, triangle = 2 };
inline constexpr int kClassCount = 3;

struct LabeledImage {
  std::string name;
  ad::Tensor<float> pixels;  // [3, H, W] in [-1, 1]
  std::vector<det::Label> labels;
};

using Dataset = std::vector<LabeledImage>;

struct SceneConfig {
  int image_side = 64;
  double min_size = 0.2;  // object extent as a fraction of the side
  double max_size = 0.6;
  double min_contrast = 0.4;       // RGB distance between fill and background colors, [-1,1] units
  double noise_amplitude = 0.03;   // stddev of per-pixel background noise
  double background_complexity = 1.0;  // 0 = flat color, 1 = full two-color gradient

  /// Throws PreconditionError when no valid placement exists.
  void validate() const;
};

using Rgb = std::array<float, 3>;

/// Everything needed to render one scene, drawn before any pixel is written.
struct SceneDescription {
  Shape shape = Shape::circle;
  int left = 0;  // object bounding square, pixels
  int top = 0;
  int extent = 0;
  Rgb fill{};
  Rgb color0{};  // gradient endpoints
  Rgb color1{};
  double gradient_angle = 0.0;
  double noise_amplitude = 0.0;
  std::uint64_t noise_seed = 0;
};

SceneDescription sample_scene(const SceneConfig& config, std::mt19937_64& rng);
/// Pixels whose centers fall inside the shape.
std::vector<std::uint8_t> shape_raster(const SceneDescription& d, int side);
/// Renders [3, side, side]; `with_object = false` gives the bare background.
ad::Tensor<float> render_scene(const SceneDescription& d, int side, bool with_object = true);

/// One scene; the label box is the tight bounding box of the shape raster.
LabeledImage generate_scene(const SceneConfig& config, std::mt19937_64& rng);
/// Scene i is drawn from its own stream derived from (seed, i).
Dataset generate_dataset(const SceneConfig& config, int count, std::uint64_t seed);

/// Minimum RGB distance from `fill` to the background color segment.
double contrast(const Rgb& fill, const Rgb& color0, const Rgb& color1);

// ---------------------------------------------------------------------------
// I/O

/// Writes images/<name>.png and labels/<name>.txt; unnamed items get a
/// zero-padded index.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Inverse of write_dataset. Missing directories give an empty dataset;
/// unmatched names or malformed labels throw DataError.
Dataset load_dataset(const std::filesystem::path& dir);
/// Like load_dataset but accepts any source resolution and resizes
/// bilinearly to side x side.
Dataset load_external(const std::filesystem::path& dir, int side = 64);

std::string format_label(const det::Label& label);
/// Parses one label line; `where` names the source in error messages.
det::Label parse_label(const std::string& line, const std::string& where);

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, interleaved
};

Rgb8Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Rgb8Image& image);
Rgb8Image to_rgb8(const ad::Tensor<float>& pixels);
ad::Tensor<float> from_rgb8(const Rgb8Image& image);
/// Bilinear resize (half-pixel centers, edge clamping) of [3, H, W].
ad::Tensor<float> resize_bilinear(const ad::Tensor<float>& pixels, int side);

}  // namespace boxgan::scenes
