// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

// Training hyperparameters and their JSON form.
//
// A config document is one JSON object. TrainConfig fields sit at the top
// level under their snake_case names; the optional objects "generator",
// "critic", "detector", "scenes" and "detection_weights" hold the network
// specs, the synthetic-scene settings and the detection-loss weights. Missing
// keys keep their defaults; unknown keys are rejected.

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "boxgan/detloss.hpp"
#include "boxgan/netzoo.hpp"
#include "boxgan/scenes.hpp"

namespace boxgan {

struct TrainConfig {
  int batch_size = 16;
  int n_critic = 5;   // critic updates per iteration
  int gen_steps = 1;  // generator updates per iteration

  double lr = 1e-4;
  double lr_decay = 1.0;   // multiplied into lr every lr_decay_every iterations
  int lr_decay_every = 0;  // 0 disables decay
  double critic_lr_scale = 1.0;  // critic lr = lr * critic_lr_scale
  double lambda_gp = 10.0;
  /// Weight clipping instead of the gradient penalty when > 0.
  double weight_clip = 0.0;

  /// Instance noise: sigma_t = noise_sigma * max(0, 1 - t / noise_decay_iters).
  double noise_sigma = 0.05;
  int noise_decay_iters = 1000;

  double mu = 1.0;      // position-loss weight
  double gate_q = 0.5;  // quantile of real scores a fake must reach
  det::LossWeights detection_weights;

  int iterations = 2000;
  int checkpoint_every = 500;  // 0 writes only the final checkpoint

  int detector_iterations = 3000;
  int detector_batch_size = 32;
  double detector_lr = 1e-3;
  double holdout_fraction = 0.1;

  std::string sampler = "scene";  // request distribution: "scene" or "hard"
  std::uint64_t seed = 0;

  /// Throws PreconditionError on out-of-range values.
  void validate() const;
  /// Learning rate in effect at iteration t (0-based).
  double lr_at(int t) const;
  /// Instance-noise stddev at iteration t (0-based).
  double noise_sigma_at(int t) const;
};

/// Everything a CLI run needs besides its flags.
struct ExperimentConfig {
  TrainConfig train;
  nets::GeneratorSpec generator;
  nets::CriticSpec critic;
  nets::DetectorSpec detector;
  scenes::SceneConfig scenes;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Throws PreconditionError on unknown keys, wrong types or invalid values.
ExperimentConfig experiment_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment(const std::string& path);

}  // namespace boxgan
