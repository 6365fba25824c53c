// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Detector pretraining, the two GAN training steps, the score-gated position
// loss, augmentation and conditioning evaluation.
//
// Checkpoints are GABX bundles. A GAN checkpoint holds the generator and
// critic parameters plus "spec/generator" and "spec/critic"; a detector
// checkpoint holds the detector parameters plus "spec/detector".
//
// Files written when an output directory is given:
//   metrics.csv            one row per iteration (GAN steps)
//   detector_loss.csv      iter,loss (detector pretraining)
//   ckpt_<iter>.gabx       every checkpoint_every iterations
//   final.gabx             after the last iteration

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "boxgan/config.hpp"
#include "boxgan/detloss.hpp"
#include "boxgan/gabx.hpp"
#include "boxgan/metrics.hpp"
#include "boxgan/netzoo.hpp"
#include "boxgan/scenes.hpp"

namespace boxgan {

using ad::Tensor;
using ad::Var;

// ---------------------------------------------------------------------------
// Box requests

/// Bounds of the "hard" request preset: small objects inside a corner square.
struct HardPreset {
  double min_size = 0.1;
  double max_size = 0.25;
  double corner = 0.4;  // side of the corner square holding the box
};

/// Draws (box, class) requests. "scene" matches the synthetic scene
/// distribution exactly; "hard" draws small, corner-bound boxes. Boxes are
/// pixel-aligned so their masks are exact.
class RequestSampler {
 public:
  static RequestSampler scene(const scenes::SceneConfig& config);
  static RequestSampler hard(int image_side, HardPreset preset = {});
  /// "scene" or "hard"; throws PreconditionError otherwise.
  static RequestSampler named(const std::string& name, const scenes::SceneConfig& config);

  det::Label operator()(std::mt19937_64& rng) const;
  std::vector<det::Label> sample(int count, std::uint64_t seed) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  scenes::SceneConfig scene_;
  HardPreset hard_;
};

/// Rounds every coordinate to 6 decimals, the precision of label files.
std::vector<det::Label> quantize_requests(const std::vector<det::Label>& requests);

/// Condition planes [N, P, side, side] for the requests.
Tensor<float> request_conditions(const std::vector<det::Label>& requests, const nets::GeneratorSpec& spec);

// ---------------------------------------------------------------------------
// Checkpoints

ad::TensorBundle gan_checkpoint(const nets::Generator<float>& generator, const nets::Critic<float>& critic);
nets::Generator<float> load_generator(const ad::TensorBundle& bundle);
nets::Critic<float> load_critic(const ad::TensorBundle& bundle);
ad::TensorBundle detector_checkpoint(const nets::Detector<float>& detector);
nets::Detector<float> load_detector(const ad::TensorBundle& bundle);

// ---------------------------------------------------------------------------
// Detection reports

struct ConditioningRow {
  det::Label requested;
  std::optional<det::Detection> detected;
  double iou = 0;  // 0 when nothing is detected
  bool class_match = false;
};

struct ConditioningReport {
  std::vector<ConditioningRow> rows;
  double mean_iou = 0;
  double class_accuracy = 0;
};

/// Scores the best detection of each [N,S,S,D] grid against its label.
ConditioningReport score_grids(const Tensor<float>& grids, const det::GridLayout& layout,
                               const std::vector<det::Label>& labels);

/// Detector output for [N,3,H,W] images, evaluated without gradients.
Tensor<float> detect_grids(const nets::Detector<float>& detector, const Tensor<float>& images);

/// detect_grids followed by score_grids.
ConditioningReport detection_report(const nets::Detector<float>& detector, const Tensor<float>& images,
                                    const std::vector<det::Label>& labels);

// ---------------------------------------------------------------------------
// Detector pretraining

struct DetectorReport {
  int train_size = 0;
  int holdout_size = 0;
  double mean_iou = 0;  // holdout
  double class_accuracy = 0;
  double final_loss = 0;
};

struct DetectorResult {
  ad::TensorBundle checkpoint;
  DetectorReport report;
};

/// Shuffles with the config seed, holds out `holdout_fraction`, and trains
/// with Adam on the mean combined detection loss.
DetectorResult pretrain_detector(const scenes::Dataset& dataset, const nets::DetectorSpec& spec,
                                 const TrainConfig& config, const std::filesystem::path& out_dir = {});

// ---------------------------------------------------------------------------
// Position loss

template <typename T>
using DetectFn = std::function<Var<T>(const Var<T>&)>;

template <typename T>
struct PositionLoss {
  Var<T> loss;  // scalar
  std::vector<std::uint8_t> gates;
  double gate_fraction = 0;
};

/// Linear-interpolation quantile (q in [0, 1]) of a non-empty sample.
double quantile(std::vector<double> values, double q);

/// Sample i is gated in when fake_scores[i] >= quantile(real_scores, q).
/// loss = sum_i g_i * L_i / max(1, sum_i g_i) with L_i the combined detection
/// loss of detect(images_i) against requests_i. The detector must be frozen.
template <typename T>
PositionLoss<T> position_loss(const DetectFn<T>& detect, const Var<T>& images,
                              const std::vector<det::Label>& requests, const Tensor<T>& fake_scores,
                              const Tensor<T>& real_scores, const det::GridLayout& layout,
                              const det::LossWeights& weights, double q);

// ---------------------------------------------------------------------------
// GAN training

struct GanResult {
  ad::TensorBundle checkpoint;
  MetricsLog log;
  long critic_updates = 0;
  long generator_updates = 0;
};

/// Unconditional WGAN-GP; the generator's condition features are zeroed.
GanResult train_step1(const scenes::Dataset& dataset, const nets::GeneratorSpec& generator_spec,
                      const nets::CriticSpec& critic_spec, const TrainConfig& config,
                      const std::filesystem::path& out_dir = {});

/// Continues from a Step-1 checkpoint with mask-conditioned generation and the
/// gated position loss. Requests follow `config.sampler` over `scene_config`.
/// The detector is frozen for the duration and restored to its previous
/// trainable state afterwards; the critic never sees masks.
GanResult train_step2(const ad::TensorBundle& step1, const scenes::Dataset& dataset,
                      nets::Detector<float>& detector, const TrainConfig& config,
                      const scenes::SceneConfig& scene_config, const std::filesystem::path& out_dir = {});

// ---------------------------------------------------------------------------
// Generation

/// One image per request; sample i uses noise from stream (seed, i).
Tensor<float> generate_images(const nets::Generator<float>& generator, const std::vector<det::Label>& requests,
                              std::uint64_t seed);

/// Generates images for the quantized requests and labels them with exactly
/// those requests.
scenes::Dataset augment(const nets::Generator<float>& generator, const std::vector<det::Label>& requests,
                        std::uint64_t seed);
/// As above, then writes the dataset to `dir`.
scenes::Dataset augment(const nets::Generator<float>& generator, const std::vector<det::Label>& requests,
                        std::uint64_t seed, const std::filesystem::path& dir);

/// Images [N,3,H,W] for requests, given a noise seed.
using ImageFn = std::function<Tensor<float>(const std::vector<det::Label>&, std::uint64_t)>;
/// Detection grids [N,S,S,D] for images.
using GridFn = std::function<Tensor<float>(const Tensor<float>&)>;

/// Requests n boxes from the sampler, generates, detects, and compares.
ConditioningReport evaluate_conditioning(const ImageFn& generate, const GridFn& detect, const det::GridLayout& layout,
                                         int n, const RequestSampler& sampler, std::uint64_t seed);
ConditioningReport evaluate_conditioning(const nets::Generator<float>& generator,
                                         const nets::Detector<float>& detector, int n,
                                         const RequestSampler& sampler, std::uint64_t seed);

}  // namespace boxgan
