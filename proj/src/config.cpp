// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <variant>
#include <vector>

#include "boxgan/errors.hpp"

namespace boxgan {
namespace {

using nlohmann::json;

// One JSON field bound to a struct member.
struct Field {
  std::string name;
  std::variant<int*, double*, std::uint64_t*, std::string*> target;
};

std::vector<Field> fields(TrainConfig& c) {
  return {{"batch_size", &c.batch_size},
          {"n_critic", &c.n_critic},
          {"gen_steps", &c.gen_steps},
          {"lr", &c.lr},
          {"lr_decay", &c.lr_decay},
          {"lr_decay_every", &c.lr_decay_every},
          {"critic_lr_scale", &c.critic_lr_scale},
          {"lambda_gp", &c.lambda_gp},
          {"weight_clip", &c.weight_clip},
          {"noise_sigma", &c.noise_sigma},
          {"noise_decay_iters", &c.noise_decay_iters},
          {"mu", &c.mu},
          {"gate_q", &c.gate_q},
          {"iterations", &c.iterations},
          {"checkpoint_every", &c.checkpoint_every},
          {"detector_iterations", &c.detector_iterations},
          {"detector_batch_size", &c.detector_batch_size},
          {"detector_lr", &c.detector_lr},
          {"holdout_fraction", &c.holdout_fraction},
          {"sampler", &c.sampler},
          {"seed", &c.seed}};
}

std::vector<Field> fields(det::LossWeights& w) {
  return {{"alpha", &w.alpha}, {"beta", &w.beta}, {"theta", &w.theta}, {"lambda_noobj", &w.lambda_noobj}};
}

std::vector<Field> fields(nets::GeneratorSpec& s) {
  return {{"image_side", &s.image_side},         {"noise_channels", &s.noise_channels},
          {"condition_channels", &s.condition_channels}, {"condition_planes", &s.condition_planes},
          {"depth", &s.depth},                   {"base_width", &s.base_width}};
}

std::vector<Field> fields(nets::CriticSpec& s) {
  return {{"layers", &s.layers}, {"base_width", &s.base_width}, {"leaky_slope", &s.leaky_slope}};
}

std::vector<Field> fields(nets::DetectorSpec& s) {
  return {{"cells", &s.cells},   {"slots", &s.slots},          {"classes", &s.classes},
          {"layers", &s.layers}, {"base_width", &s.base_width}};
}

std::vector<Field> fields(scenes::SceneConfig& s) {
  return {{"image_side", &s.image_side},
          {"min_size", &s.min_size},
          {"max_size", &s.max_size},
          {"min_contrast", &s.min_contrast},
          {"noise_amplitude", &s.noise_amplitude},
          {"background_complexity", &s.background_complexity}};
}

template <typename S>
json dump(S s) {
  json out = json::object();
  for (const auto& f : fields(s)) {
    std::visit([&](auto* p) { out[f.name] = *p; }, f.target);
  }
  return out;
}

template <typename S>
void load(S& s, const json& doc, const std::string& where, const std::set<std::string>& nested = {}) {
  if (!doc.is_object()) throw PreconditionError("config: " + where + " must be a JSON object");
  const auto fs = fields(s);
  for (const auto& [key, value] : doc.items()) {
    if (nested.count(key)) continue;
    const auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.name == key; });
    if (it == fs.end()) throw PreconditionError("config: unknown key '" + key + "' in " + where);
    const std::string path = where + "." + key;
    std::visit(
        [&](auto* p) {
          using V = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<V, std::string>) {
            if (!value.is_string()) throw PreconditionError("config: " + path + " must be a string");
            *p = value.template get<std::string>();
          } else if constexpr (std::is_same_v<V, double>) {
            if (!value.is_number()) throw PreconditionError("config: " + path + " must be a number");
            *p = value.template get<double>();
          } else {
            if (!value.is_number_integer()) throw PreconditionError("config: " + path + " must be an integer");
            if (std::is_unsigned_v<V> && value.is_number_integer() && !value.is_number_unsigned()) {
              throw PreconditionError("config: " + path + " must be non-negative");
            }
            *p = value.template get<V>();
          }
        },
        it->target);
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw PreconditionError("config: " + what);
}

}  // namespace

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size must be >= 1");
  require(n_critic >= 1, "n_critic must be >= 1");
  require(gen_steps >= 1, "gen_steps must be >= 1");
  require(lr >= 0 && detector_lr >= 0, "learning rates must be >= 0");
  require(lr_decay > 0 && lr_decay <= 1, "lr_decay must be in (0, 1]");
  require(lr_decay_every >= 0, "lr_decay_every must be >= 0");
  require(critic_lr_scale > 0, "critic_lr_scale must be > 0");
  require(lambda_gp >= 0, "lambda_gp must be >= 0");
  require(weight_clip >= 0, "weight_clip must be >= 0");
  require(noise_sigma >= 0, "noise_sigma must be >= 0");
  require(noise_decay_iters >= 1, "noise_decay_iters must be >= 1");
  require(mu >= 0, "mu must be >= 0");
  require(gate_q >= 0 && gate_q <= 1, "gate_q must be in [0, 1]");
  require(iterations >= 0 && detector_iterations >= 0, "iteration counts must be >= 0");
  require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  require(detector_batch_size >= 1, "detector_batch_size must be >= 1");
  require(holdout_fraction >= 0 && holdout_fraction < 1, "holdout_fraction must be in [0, 1)");
  require(sampler == "scene" || sampler == "hard", "sampler must be \"scene\" or \"hard\"");
  detection_weights.validate();
}

double TrainConfig::lr_at(int t) const {
  if (lr_decay_every <= 0) return lr;
  return lr * std::pow(lr_decay, t / lr_decay_every);
}

double TrainConfig::noise_sigma_at(int t) const {
  return noise_sigma * std::max(0.0, 1.0 - static_cast<double>(t) / noise_decay_iters);
}

void ExperimentConfig::validate() const {
  train.validate();
  generator.validate();
  critic.validate();
  detector.validate();
  scenes.validate();
  require(generator.image_side == scenes.image_side, "generator.image_side must equal scenes.image_side");
  require(detector.cells << detector.layers == generator.image_side,
          "detector cells * 2^layers must equal the image side");
  require(detector.classes == scenes::kClassCount, "detector.classes must be 3");
  require(generator.condition_planes == 1 || generator.condition_planes == detector.classes,
          "generator.condition_planes must be 1 or the class count");
}

nlohmann::json to_json(const ExperimentConfig& config) {
  json doc = dump(config.train);
  doc["detection_weights"] = dump(config.train.detection_weights);
  doc["generator"] = dump(config.generator);
  doc["critic"] = dump(config.critic);
  doc["detector"] = dump(config.detector);
  doc["scenes"] = dump(config.scenes);
  return doc;
}

ExperimentConfig experiment_from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  load(c.train, doc, "config", {"detection_weights", "generator", "critic", "detector", "scenes"});
  if (doc.contains("detection_weights")) load(c.train.detection_weights, doc["detection_weights"], "detection_weights");
  if (doc.contains("generator")) load(c.generator, doc["generator"], "generator");
  if (doc.contains("critic")) load(c.critic, doc["critic"], "critic");
  if (doc.contains("detector")) load(c.detector, doc["detector"], "detector");
  if (doc.contains("scenes")) load(c.scenes, doc["scenes"], "scenes");
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw PreconditionError("config " + path + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(doc);
}

}  // namespace boxgan
