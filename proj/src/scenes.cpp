// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/scenes.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "boxgan/boxgeom.hpp"
#include "boxgan/errors.hpp"
#include "boxgan/random.hpp"

namespace boxgan::scenes {
namespace fs = std::filesystem;

namespace {

int min_extent(const SceneConfig& c) { return static_cast<int>(std::ceil(c.min_size * c.image_side - 1e-9)); }
int max_extent(const SceneConfig& c) { return static_cast<int>(std::floor(c.max_size * c.image_side + 1e-9)); }

Rgb random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Rgb c;
  for (auto& v : c) v = u(rng);
  return c;
}

std::string padded(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

std::map<std::string, fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) out[entry.path().stem().string()] = entry.path();
  }
  return out;
}

std::vector<det::Label> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read label file " + path.string());
  std::vector<det::Label> labels;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    labels.push_back(parse_label(line, path.string() + ":" + std::to_string(lineno)));
  }
  return labels;
}

template <typename Convert>
Dataset load_with(const fs::path& dir, Convert convert) {
  const auto images = files_with_extension(dir / "images", ".png");
  const auto labels = files_with_extension(dir / "labels", ".txt");
  for (const auto& [name, path] : images) {
    if (!labels.count(name)) throw DataError("image " + path.string() + " has no label file");
  }
  for (const auto& [name, path] : labels) {
    if (!images.count(name)) throw DataError("label file " + path.string() + " has no image");
  }
  Dataset out;
  for (const auto& [name, path] : images) {
    out.push_back({name, convert(from_rgb8(read_png(path))), read_labels(labels.at(name))});
  }
  return out;
}

}  // namespace

void SceneConfig::validate() const {
  if (image_side < 4) throw PreconditionError("scene image side must be >= 4");
  if (!(min_size > 0.0 && min_size <= max_size && max_size <= 1.0)) {
    throw PreconditionError("scene size range must satisfy 0 < min <= max <= 1");
  }
  if (min_extent(*this) < 4 || min_extent(*this) > max_extent(*this)) {
    throw PreconditionError("scene size range [" + std::to_string(min_size) + ", " + std::to_string(max_size) +
                            "] leaves no placement of at least 4 pixels on a " + std::to_string(image_side) +
                            "-pixel side");
  }
  if (!(min_contrast >= 0.0 && min_contrast <= 1.0)) throw PreconditionError("min contrast must be in [0, 1]");
  if (!(noise_amplitude >= 0.0)) throw PreconditionError("noise amplitude must be >= 0");
  if (!(background_complexity >= 0.0 && background_complexity <= 1.0)) {
    throw PreconditionError("background complexity must be in [0, 1]");
  }
}

double contrast(const Rgb& fill, const Rgb& c0, const Rgb& c1) {
  double dd = 0, dp = 0;
  for (int k = 0; k < 3; ++k) {
    dd += double(c1[k] - c0[k]) * (c1[k] - c0[k]);
    dp += double(fill[k] - c0[k]) * (c1[k] - c0[k]);
  }
  const double t = dd > 0 ? std::clamp(dp / dd, 0.0, 1.0) : 0.0;
  double dist = 0;
  for (int k = 0; k < 3; ++k) {
    const double closest = c0[k] + t * (c1[k] - c0[k]);
    dist += (fill[k] - closest) * (fill[k] - closest);
  }
  return std::sqrt(dist);
}

SceneDescription sample_scene(const SceneConfig& config, std::mt19937_64& rng) {
  config.validate();
  const int side = config.image_side;
  SceneDescription d;
  d.shape = static_cast<Shape>(std::uniform_int_distribution<int>(0, kClassCount - 1)(rng));
  d.extent = std::uniform_int_distribution<int>(min_extent(config), max_extent(config))(rng);
  d.left = std::uniform_int_distribution<int>(0, side - d.extent)(rng);
  d.top = std::uniform_int_distribution<int>(0, side - d.extent)(rng);

  d.color0 = random_color(rng);
  const Rgb far = random_color(rng);
  for (int k = 0; k < 3; ++k) {
    d.color1[k] = d.color0[k] + static_cast<float>(config.background_complexity) * (far[k] - d.color0[k]);
  }
  d.gradient_angle = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);

  bool found = false;
  for (int attempt = 0; attempt < 256 && !found; ++attempt) {
    d.fill = random_color(rng);
    found = contrast(d.fill, d.color0, d.color1) >= config.min_contrast;
  }
  if (!found) {
    // Fall back to the cube corner farthest from the background colors.
    double best = -1;
    for (int corner = 0; corner < 8; ++corner) {
      const Rgb c{corner & 1 ? 1.0f : -1.0f, corner & 2 ? 1.0f : -1.0f, corner & 4 ? 1.0f : -1.0f};
      const double k = contrast(c, d.color0, d.color1);
      if (k > best) best = k, d.fill = c;
    }
  }
  d.noise_amplitude = config.noise_amplitude;
  d.noise_seed = rng();
  return d;
}

std::vector<std::uint8_t> shape_raster(const SceneDescription& d, int side) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(side) * side, 0);
  for (int r = d.top; r < d.top + d.extent; ++r) {
    for (int c = d.left; c < d.left + d.extent; ++c) {
      const double u = (c + 0.5 - d.left) / d.extent, v = (r + 0.5 - d.top) / d.extent;
      bool inside = true;
      switch (d.shape) {
        case Shape::square:
          break;
        case Shape::circle:
          inside = (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25;
          break;
        case Shape::triangle:  // apex at top center, base along the bottom edge
          inside = std::abs(u - 0.5) <= 0.5 * v;
          break;
      }
      if (inside) out[static_cast<std::size_t>(r) * side + c] = 1;
    }
  }
  return out;
}

ad::Tensor<float> render_scene(const SceneDescription& d, int side, bool with_object) {
  ad::Tensor<float> px(ad::Shape{3, side, side});
  const double ca = std::cos(d.gradient_angle), sa = std::sin(d.gradient_angle);
  const double half_span = 0.5 * (std::abs(ca) + std::abs(sa));
  std::mt19937_64 noise_rng(d.noise_seed);
  const auto noise = normal_tensor<float>(px.shape(), noise_rng, d.noise_amplitude);
  const auto raster = with_object ? shape_raster(d, side) : std::vector<std::uint8_t>();
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const double x = (c + 0.5) / side - 0.5, y = (r + 0.5) / side - 0.5;
      const float t = static_cast<float>(half_span > 0 ? 0.5 + 0.5 * (x * ca + y * sa) / half_span : 0.5);
      const std::size_t i = static_cast<std::size_t>(r) * side + c;
      const bool object = with_object && raster[i];
      for (int k = 0; k < 3; ++k) {
        const float base = object ? d.fill[k] : d.color0[k] + t * (d.color1[k] - d.color0[k]);
        px.data()[k * plane + i] = std::clamp(base + noise.data()[k * plane + i], -1.0f, 1.0f);
      }
    }
  }
  return px;
}

LabeledImage generate_scene(const SceneConfig& config, std::mt19937_64& rng) {
  const SceneDescription d = sample_scene(config, rng);
  const int side = config.image_side;
  const auto raster = shape_raster(d, side);
  geom::Mask mask(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) mask.set(r, c, raster[static_cast<std::size_t>(r) * side + c]);
  }
  ad::Tensor<float> pixels = render_scene(d, side);
  return {"", std::move(pixels), {det::Label{geom::mask_to_box(mask), static_cast<int>(d.shape)}}};
}

Dataset generate_dataset(const SceneConfig& config, int count, std::uint64_t seed) {
  if (count < 0) throw PreconditionError("scene count must be >= 0");
  Dataset out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
    LabeledImage item = generate_scene(config, rng);
    item.name = padded(static_cast<std::size_t>(i));
    out.push_back(std::move(item));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels

std::string format_label(const det::Label& l) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f", l.class_id, l.box.x1, l.box.y1, l.box.x2, l.box.y2);
  return buf;
}

det::Label parse_label(const std::string& line, const std::string& where) {
  std::istringstream ss(line);
  std::vector<std::string> tok;
  for (std::string t; ss >> t;) tok.push_back(t);
  if (tok.size() != 5) {
    throw DataError(where + ": expected 'class_id x1 y1 x2 y2', got '" + line + "'");
  }
  det::Label l;
  const auto [end, ec] = std::from_chars(tok[0].data(), tok[0].data() + tok[0].size(), l.class_id);
  if (ec != std::errc() || end != tok[0].data() + tok[0].size() || l.class_id < 0) {
    throw DataError(where + ": bad class id '" + tok[0] + "'");
  }
  double* coords[] = {&l.box.x1, &l.box.y1, &l.box.x2, &l.box.y2};
  for (int k = 0; k < 4; ++k) {
    const std::string& t = tok[static_cast<std::size_t>(k) + 1];
    char* stop = nullptr;
    *coords[k] = std::strtod(t.c_str(), &stop);
    if (stop != t.c_str() + t.size()) throw DataError(where + ": bad coordinate '" + t + "'");
  }
  if (!geom::is_valid(l.box)) throw DataError(where + ": box outside [0,1] or without area");
  return l;
}

// ---------------------------------------------------------------------------
// Pixels

Rgb8Image read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Rgb8Image out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("corrupt PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const fs::path& path, const Rgb8Image& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

Rgb8Image to_rgb8(const ad::Tensor<float>& px) {
  if (px.rank() != 3 || px.dim(0) != 3) throw ShapeError("image tensor must be [3,H,W], got " + ad::shape_string(px.shape()));
  Rgb8Image out{static_cast<int>(px.dim(2)), static_cast<int>(px.dim(1)), {}};
  const std::size_t plane = static_cast<std::size_t>(out.width) * out.height;
  out.rgb.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const float v = std::clamp(px.data()[k * plane + i], -1.0f, 1.0f);
      out.rgb[i * 3 + k] = static_cast<std::uint8_t>(std::lround((v + 1.0f) * 127.5f));
    }
  }
  return out;
}

ad::Tensor<float> from_rgb8(const Rgb8Image& img) {
  ad::Tensor<float> px(ad::Shape{3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t k = 0; k < 3; ++k) px.data()[k * plane + i] = img.rgb[i * 3 + k] / 127.5f - 1.0f;
  }
  return px;
}

ad::Tensor<float> resize_bilinear(const ad::Tensor<float>& px, int side) {
  if (px.rank() != 3 || side < 1) throw ShapeError("resize_bilinear expects [C,H,W] and side >= 1");
  const ad::Index ch = px.dim(0), h = px.dim(1), w = px.dim(2);
  ad::Tensor<float> out(ad::Shape{ch, side, side});
  const auto source = [](int dst, ad::Index src_extent, int dst_extent) {
    const double s = std::clamp((dst + 0.5) * static_cast<double>(src_extent) / dst_extent - 0.5, 0.0,
                                static_cast<double>(src_extent - 1));
    const ad::Index lo = static_cast<ad::Index>(std::floor(s));
    return std::tuple{lo, std::min(lo + 1, src_extent - 1), static_cast<float>(s - static_cast<double>(lo))};
  };
  const auto lerp = [](float a, float b, float t) { return a + t * (b - a); };
  for (int r = 0; r < side; ++r) {
    const auto [y0, y1, ty] = source(r, h, side);
    for (int c = 0; c < side; ++c) {
      const auto [x0, x1, tx] = source(c, w, side);
      for (ad::Index k = 0; k < ch; ++k) {
        const float* p = px.ptr() + k * h * w;
        const float top = lerp(p[y0 * w + x0], p[y0 * w + x1], tx);
        const float bottom = lerp(p[y1 * w + x0], p[y1 * w + x1], tx);
        out[(k * side + r) * side + c] = lerp(top, bottom, ty);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "labels", ec);
  if (!fs::is_directory(dir / "images") || !fs::is_directory(dir / "labels")) {
    throw DataError("cannot create dataset directories under " + dir.string());
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& item = dataset[i];
    const std::string name = item.name.empty() ? padded(i) : item.name;
    write_png(dir / "images" / (name + ".png"), to_rgb8(item.pixels));
    std::ofstream out(dir / "labels" / (name + ".txt"), std::ios::trunc);
    for (const auto& l : item.labels) out << format_label(l) << "\n";
    if (!out) throw DataError("cannot write labels for " + name + " under " + dir.string());
  }
}

Dataset load_dataset(const fs::path& dir) {
  return load_with(dir, [](ad::Tensor<float> px) { return px; });
}

Dataset load_external(const fs::path& dir, int side) {
  return load_with(dir, [side](const ad::Tensor<float>& px) { return resize_bilinear(px, side); });
}

}  // namespace boxgan::scenes
