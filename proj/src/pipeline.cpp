// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "boxgan/errors.hpp"
#include "boxgan/ganloss.hpp"
#include "boxgan/optim.hpp"
#include "boxgan/random.hpp"

namespace boxgan {
namespace fs = std::filesystem;

namespace {

// Independent random streams of one run.
enum Stream : std::uint64_t {
  kGeneratorInit = 1,
  kCriticInit,
  kDetectorInit,
  kSplit,
  kBatches,
  kNoise,
  kPenalty,
  kInstanceNoise,
  kRequests,
};

std::mt19937_64 stream(const TrainConfig& c, Stream s) { return std::mt19937_64(stream_seed(c.seed, s)); }

std::string checkpoint_name(long iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06ld.gabx", iter);
  return buf;
}

void prepare_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

void check_dataset(const scenes::Dataset& dataset, int side) {
  if (dataset.empty()) throw PreconditionError("training needs a non-empty dataset");
  for (const auto& item : dataset) {
    if (item.pixels.shape() != ad::Shape{3, side, side}) {
      throw ShapeError("image " + item.name + " is " + ad::shape_string(item.pixels.shape()) + ", expected [3," +
                       std::to_string(side) + "," + std::to_string(side) + "]");
    }
  }
}

Tensor<float> stack(const scenes::Dataset& dataset, const std::vector<std::size_t>& idx) {
  const auto& shape = dataset.front().pixels.shape();
  const ad::Index per = dataset.front().pixels.size();
  Tensor<float> out(ad::Shape{static_cast<ad::Index>(idx.size()), shape[0], shape[1], shape[2]});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(dataset[idx[i]].pixels.ptr(), per, out.ptr() + static_cast<ad::Index>(i) * per);
  }
  return out;
}

std::vector<std::size_t> draw(std::size_t population, int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> u(0, population - 1);
  std::vector<std::size_t> idx(static_cast<std::size_t>(count));
  for (auto& i : idx) i = u(rng);
  return idx;
}

double finite_or_throw(double v, const std::string& what, const fs::path& last_checkpoint) {
  if (!std::isfinite(v)) {
    throw DivergenceError(what + " is not finite; last checkpoint: " +
                          (last_checkpoint.empty() ? std::string("none") : last_checkpoint.string()));
  }
  return v;
}

Tensor<float> with_noise(const Tensor<float>& x, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0) return x;
  Tensor<float> out = x;
  const auto n = normal_tensor<float>(x.shape(), rng, sigma);
  for (ad::Index i = 0; i < out.size(); ++i) out[i] += n[i];
  return out;
}

Tensor<float> generator_noise(const nets::GeneratorSpec& spec, int n, std::mt19937_64& rng) {
  return normal_tensor<float>({n, spec.noise_channels, spec.image_side, spec.image_side}, rng);
}

double mean_of(const Var<float>& v) {
  double s = 0;
  for (float x : v.value().data()) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Requests

RequestSampler RequestSampler::scene(const scenes::SceneConfig& config) {
  config.validate();
  RequestSampler s;
  s.name_ = "scene";
  s.scene_ = config;
  return s;
}

RequestSampler RequestSampler::hard(int image_side, HardPreset preset) {
  RequestSampler s;
  s.name_ = "hard";
  s.scene_.image_side = image_side;
  s.hard_ = preset;
  const int lo = static_cast<int>(std::ceil(preset.min_size * image_side - 1e-9));
  const int hi = static_cast<int>(std::floor(preset.max_size * image_side + 1e-9));
  const int corner = static_cast<int>(std::floor(preset.corner * image_side + 1e-9));
  if (lo < 1 || lo > hi || hi > corner || corner > image_side) {
    throw PreconditionError("hard preset: need 1 <= min size <= max size <= corner <= side in pixels");
  }
  return s;
}

RequestSampler RequestSampler::named(const std::string& name, const scenes::SceneConfig& config) {
  if (name == "scene") return scene(config);
  if (name == "hard") return hard(config.image_side);
  throw PreconditionError("unknown request sampler '" + name + "'");
}

det::Label RequestSampler::operator()(std::mt19937_64& rng) const {
  const int side = scene_.image_side;
  if (name_ == "scene") {
    const auto d = scenes::sample_scene(scene_, rng);
    const auto raster = scenes::shape_raster(d, side);
    geom::Mask mask(side, side);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) mask.set(r, c, raster[static_cast<std::size_t>(r) * side + c]);
    }
    return {geom::mask_to_box(mask), static_cast<int>(d.shape)};
  }
  const int lo = static_cast<int>(std::ceil(hard_.min_size * side - 1e-9));
  const int hi = static_cast<int>(std::floor(hard_.max_size * side + 1e-9));
  const int corner = static_cast<int>(std::floor(hard_.corner * side + 1e-9));
  const int cls = std::uniform_int_distribution<int>(0, scenes::kClassCount - 1)(rng);
  const int w = std::uniform_int_distribution<int>(lo, hi)(rng);
  const int h = std::uniform_int_distribution<int>(lo, hi)(rng);
  const int which = std::uniform_int_distribution<int>(0, 3)(rng);
  int left = std::uniform_int_distribution<int>(0, corner - w)(rng);
  int top = std::uniform_int_distribution<int>(0, corner - h)(rng);
  if (which & 1) left = side - left - w;
  if (which & 2) top = side - top - h;
  const double s = side;
  return {{left / s, top / s, (left + w) / s, (top + h) / s}, cls};
}

std::vector<det::Label> RequestSampler::sample(int count, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::vector<det::Label> out;
  for (int i = 0; i < count; ++i) out.push_back((*this)(rng));
  return out;
}

std::vector<det::Label> quantize_requests(const std::vector<det::Label>& requests) {
  std::vector<det::Label> out = requests;
  for (auto& l : out) {
    for (double* v : {&l.box.x1, &l.box.y1, &l.box.x2, &l.box.y2}) *v = std::round(*v * 1e6) / 1e6;
  }
  return out;
}

Tensor<float> request_conditions(const std::vector<det::Label>& requests, const nets::GeneratorSpec& spec) {
  std::vector<geom::Mask> masks;
  std::vector<int> classes;
  for (const auto& r : requests) {
    masks.push_back(geom::rasterize_mask(r.box, spec.image_side, spec.image_side));
    classes.push_back(spec.condition_planes > 1 ? r.class_id : 0);
  }
  return nets::condition_batch<float>(masks, classes, spec.condition_planes);
}

// ---------------------------------------------------------------------------
// Checkpoints

ad::TensorBundle gan_checkpoint(const nets::Generator<float>& generator, const nets::Critic<float>& critic) {
  ad::TensorBundle b;
  nets::export_spec(b, generator.spec());
  nets::export_spec(b, critic.spec());
  generator.export_to(b);
  critic.export_to(b);
  return b;
}

nets::Generator<float> load_generator(const ad::TensorBundle& bundle) {
  nets::Generator<float> g(nets::import_generator_spec(bundle), 0);
  g.import_from(bundle);
  return g;
}

nets::Critic<float> load_critic(const ad::TensorBundle& bundle) {
  nets::Critic<float> c(nets::import_critic_spec(bundle), 0);
  c.import_from(bundle);
  return c;
}

ad::TensorBundle detector_checkpoint(const nets::Detector<float>& detector) {
  ad::TensorBundle b;
  nets::export_spec(b, detector.spec());
  detector.export_to(b);
  return b;
}

nets::Detector<float> load_detector(const ad::TensorBundle& bundle) {
  nets::Detector<float> d(nets::import_detector_spec(bundle), 0);
  d.import_from(bundle);
  return d;
}

// ---------------------------------------------------------------------------
// Reports

ConditioningReport score_grids(const Tensor<float>& grids, const det::GridLayout& layout,
                               const std::vector<det::Label>& labels) {
  const ad::Index cells = layout.cells, depth = layout.depth(), grid_size = cells * cells * depth;
  if (grids.rank() != 4 || grids.dim(0) != static_cast<ad::Index>(labels.size()) || grids.dim(1) != cells ||
      grids.dim(2) != cells || grids.dim(3) != depth) {
    throw ShapeError("score_grids: need one [S,S,D] grid per label, got " + ad::shape_string(grids.shape()));
  }
  ConditioningReport report;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Tensor<float> grid(ad::Shape{cells, cells, depth});
    std::copy_n(grids.ptr() + static_cast<ad::Index>(i) * grid_size, grid_size, grid.ptr());
    ConditioningRow row;
    row.requested = labels[i];
    row.detected = det::decode_single(grid, layout, 0.0);
    if (row.detected) {
      row.iou = geom::iou(row.requested.box, row.detected->box);
      row.class_match = row.detected->class_id == row.requested.class_id;
    }
    report.mean_iou += row.iou;
    report.class_accuracy += row.class_match ? 1.0 : 0.0;
    report.rows.push_back(row);
  }
  if (!report.rows.empty()) {
    report.mean_iou /= static_cast<double>(report.rows.size());
    report.class_accuracy /= static_cast<double>(report.rows.size());
  }
  return report;
}

Tensor<float> detect_grids(const nets::Detector<float>& detector, const Tensor<float>& images) {
  if (images.rank() != 4) throw ShapeError("detect_grids: images must be [N,3,H,W]");
  const auto layout = detector.spec().layout();
  const ad::Index n = images.dim(0), per = images.size() / std::max<ad::Index>(n, 1);
  const ad::Index grid_size = layout.cells * layout.cells * layout.depth();
  Tensor<float> out(ad::Shape{n, layout.cells, layout.cells, layout.depth()});
  const ad::Index chunk = 32;
  ad::NoGradGuard no_grad;
  for (ad::Index begin = 0; begin < n; begin += chunk) {
    const ad::Index m = std::min(chunk, n - begin);
    Tensor<float> batch(ad::Shape{m, images.dim(1), images.dim(2), images.dim(3)});
    std::copy_n(images.ptr() + begin * per, m * per, batch.ptr());
    const Tensor<float> grids = detector.forward(Var<float>(batch)).value();
    std::copy_n(grids.ptr(), m * grid_size, out.ptr() + begin * grid_size);
  }
  return out;
}

ConditioningReport detection_report(const nets::Detector<float>& detector, const Tensor<float>& images,
                                    const std::vector<det::Label>& labels) {
  if (images.rank() != 4 || images.dim(0) != static_cast<ad::Index>(labels.size())) {
    throw ShapeError("detection_report: need one label per image");
  }
  return score_grids(detect_grids(detector, images), detector.spec().layout(), labels);
}

// ---------------------------------------------------------------------------
// Detector pretraining

DetectorResult pretrain_detector(const scenes::Dataset& dataset, const nets::DetectorSpec& spec,
                                 const TrainConfig& config, const fs::path& out_dir) {
  config.validate();
  spec.validate();
  const int side = spec.cells << spec.layers;
  check_dataset(dataset, side);
  for (const auto& item : dataset) {
    if (item.labels.size() != 1) throw DataError("image " + item.name + " must carry exactly one label");
    if (item.labels[0].class_id >= spec.classes) throw DataError("image " + item.name + " has an unknown class");
  }
  prepare_dir(out_dir);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  auto split_rng = stream(config, kSplit);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t holdout = static_cast<std::size_t>(std::lround(config.holdout_fraction * dataset.size()));
  if (config.holdout_fraction > 0 && dataset.size() >= 2) holdout = std::clamp<std::size_t>(holdout, 1, dataset.size() - 1);
  const std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(holdout));
  const std::vector<std::size_t> held(order.end() - static_cast<std::ptrdiff_t>(holdout), order.end());

  nets::Detector<float> detector(spec, stream_seed(config.seed, kDetectorInit));
  const auto layout = spec.layout();
  ad::Adam<float> opt(detector.variables(), {config.detector_lr, 0.9, 0.999, 1e-8});
  auto batch_rng = stream(config, kBatches);
  std::ofstream loss_log;
  if (!out_dir.empty()) {
    loss_log.open(out_dir / "detector_loss.csv", std::ios::binary | std::ios::trunc);
    loss_log << "iter,loss\n";
  }

  DetectorResult result;
  fs::path last_checkpoint;
  for (int t = 0; t < config.detector_iterations; ++t) {
    const auto pick = draw(train.size(), config.detector_batch_size, batch_rng);
    std::vector<std::size_t> idx;
    std::vector<std::vector<det::Label>> labels;
    for (std::size_t p : pick) {
      idx.push_back(train[p]);
      labels.push_back(dataset[train[p]].labels);
    }
    const auto pred = detector.forward(Var<float>(stack(dataset, idx)));
    const auto loss =
        ad::mean(det::total_detection_loss(pred, det::encode_targets<float>(labels, layout), layout,
                                           config.detection_weights)
                     .total);
    result.report.final_loss = finite_or_throw(loss.item(), "detector loss", last_checkpoint);
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
    if (loss_log.is_open()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%d,%.6f\n", t + 1, result.report.final_loss);
      loss_log << buf;
    }
    if (!out_dir.empty() && config.checkpoint_every > 0 && (t + 1) % config.checkpoint_every == 0) {
      last_checkpoint = out_dir / ("detector_" + checkpoint_name(t + 1));
      ad::write_gabx(last_checkpoint, detector_checkpoint(detector));
    }
  }
  detector.set_trainable(false);

  std::vector<det::Label> held_labels;
  for (std::size_t i : held) held_labels.push_back(dataset[i].labels[0]);
  const auto report = held.empty() ? ConditioningReport{} : detection_report(detector, stack(dataset, held), held_labels);
  result.report.train_size = static_cast<int>(train.size());
  result.report.holdout_size = static_cast<int>(held.size());
  result.report.mean_iou = report.mean_iou;
  result.report.class_accuracy = report.class_accuracy;
  result.checkpoint = detector_checkpoint(detector);
  if (!out_dir.empty()) ad::write_gabx(out_dir / "detector.gabx", result.checkpoint);
  return result;
}

// ---------------------------------------------------------------------------
// Position loss

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw PreconditionError("quantile of an empty sample");
  if (!(q >= 0 && q <= 1)) throw PreconditionError("quantile level must be in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

template <typename T>
PositionLoss<T> position_loss(const DetectFn<T>& detect, const Var<T>& images, const std::vector<det::Label>& requests,
                              const Tensor<T>& fake_scores, const Tensor<T>& real_scores,
                              const det::GridLayout& layout, const det::LossWeights& weights, double q) {
  const auto n = static_cast<ad::Index>(requests.size());
  if (n == 0) throw PreconditionError("position_loss: empty batch");
  if (images.shape().empty() || images.shape()[0] != n || fake_scores.shape() != ad::Shape{n}) {
    throw ShapeError("position_loss: images, requests and fake scores must agree in batch size");
  }
  if (real_scores.rank() != 1 || real_scores.size() == 0) throw PreconditionError("position_loss: empty real batch");
  const double threshold = quantile(std::vector<double>(real_scores.data().begin(), real_scores.data().end()), q);

  PositionLoss<T> out;
  Tensor<T> gate(ad::Shape{n});
  long open = 0;
  for (ad::Index i = 0; i < n; ++i) {
    const bool on = static_cast<double>(fake_scores[i]) >= threshold;
    out.gates.push_back(on ? 1 : 0);
    gate[i] = on ? T{1} : T{0};
    open += on;
  }
  out.gate_fraction = static_cast<double>(open) / static_cast<double>(n);
  if (open == 0) {
    out.loss = Var<T>(Tensor<T>::scalar(T{0}));
    return out;
  }
  std::vector<std::vector<det::Label>> targets;
  for (const auto& r : requests) targets.push_back({r});
  const auto per_sample =
      det::total_detection_loss(detect(images), det::encode_targets<T>(targets, layout), layout, weights).total;
  out.loss = ad::scale(ad::sum(ad::mul(per_sample, Var<T>(gate))), static_cast<T>(1.0 / static_cast<double>(open)));
  return out;
}

template PositionLoss<float> position_loss(const DetectFn<float>&, const Var<float>&, const std::vector<det::Label>&,
                                           const Tensor<float>&, const Tensor<float>&, const det::GridLayout&,
                                           const det::LossWeights&, double);
template PositionLoss<double> position_loss(const DetectFn<double>&, const Var<double>&,
                                            const std::vector<det::Label>&, const Tensor<double>&,
                                            const Tensor<double>&, const det::GridLayout&, const det::LossWeights&,
                                            double);

// ---------------------------------------------------------------------------
// GAN training

namespace {

class GanTrainer {
 public:
  GanTrainer(nets::Generator<float>& g, nets::Critic<float>& c, nets::Detector<float>* detector,
             const scenes::Dataset& dataset, const TrainConfig& config, const scenes::SceneConfig& scene_config,
             fs::path out_dir)
      : g_(g),
        c_(c),
        detector_(detector),
        data_(dataset),
        config_(config),
        out_dir_(std::move(out_dir)),
        sampler_(RequestSampler::named(config.sampler, scene_config)),
        g_opt_(g.variables(), {config.lr, 0.5, 0.9, 1e-8}),
        c_opt_(c.variables(), {config.lr * config.critic_lr_scale, 0.5, 0.9, 1e-8}),
        batch_rng_(stream(config, kBatches)),
        noise_rng_(stream(config, kNoise)),
        gp_rng_(stream(config, kPenalty)),
        instance_rng_(stream(config, kInstanceNoise)),
        request_rng_(stream(config, kRequests)) {}

  GanResult run() {
    prepare_dir(out_dir_);
    std::optional<MetricsWriter> writer;
    if (!out_dir_.empty()) writer.emplace(out_dir_ / "metrics.csv");
    GanResult result;
    for (int t = 0; t < config_.iterations; ++t) {
      g_opt_.set_lr(config_.lr_at(t));
      c_opt_.set_lr(config_.lr_at(t) * config_.critic_lr_scale);
      const double sigma = config_.noise_sigma_at(t);
      MetricsRow row;
      row.iter = t + 1;

      c_.set_trainable(true);
      g_.set_trainable(false);
      for (int k = 0; k < config_.n_critic; ++k) {
        critic_update(sigma, row);
        ++result.critic_updates;
      }
      c_.set_trainable(false);
      g_.set_trainable(true);
      for (int k = 0; k < config_.gen_steps; ++k) {
        generator_update(sigma, row);
        ++result.generator_updates;
      }
      result.log.append(row);
      if (writer) writer->write(row);
      if (!out_dir_.empty() && config_.checkpoint_every > 0 && (t + 1) % config_.checkpoint_every == 0) {
        last_checkpoint_ = out_dir_ / checkpoint_name(t + 1);
        ad::write_gabx(last_checkpoint_, gan_checkpoint(g_, c_));
      }
    }
    c_.set_trainable(true);
    g_.set_trainable(true);
    result.checkpoint = gan_checkpoint(g_, c_);
    if (!out_dir_.empty()) ad::write_gabx(out_dir_ / "final.gabx", result.checkpoint);
    return result;
  }

 private:
  bool conditional() const { return detector_ != nullptr; }

  Tensor<float> real_batch() { return stack(data_, draw(data_.size(), config_.batch_size, batch_rng_)); }

  // Generator inputs for one batch; requests are left empty in Step 1.
  std::pair<Var<float>, Var<float>> generator_inputs(std::vector<det::Label>& requests) {
    const int n = config_.batch_size;
    Var<float> noise(generator_noise(g_.spec(), n, noise_rng_));
    requests.clear();
    if (!conditional()) return {noise, Var<float>()};
    for (int i = 0; i < n; ++i) requests.push_back(sampler_(request_rng_));
    return {noise, Var<float>(request_conditions(requests, g_.spec()))};
  }

  void critic_update(double sigma, MetricsRow& row) {
    const Tensor<float> real = with_noise(real_batch(), sigma, instance_rng_);
    std::vector<det::Label> requests;
    Tensor<float> fake;
    {
      ad::NoGradGuard no_grad;
      const auto [noise, condition] = generator_inputs(requests);
      fake = g_.forward(noise, condition).value();
    }
    fake = with_noise(fake, sigma, instance_rng_);
    const gan::GanBatchScores<float> scores{c_.forward(Var<float>(real)).scores, c_.forward(Var<float>(fake)).scores};
    Var<float> loss = gan::critic_loss(scores);
    double penalty = 0;
    if (config_.weight_clip <= 0 && config_.lambda_gp > 0) {
      const auto gp = gan::gradient_penalty(gan::score_fn(c_), real, fake, config_.lambda_gp, gp_rng_);
      penalty = finite_or_throw(gp.item(), "gradient penalty", last_checkpoint_);
      loss = loss + gp;
    }
    finite_or_throw(loss.item(), "critic loss", last_checkpoint_);
    c_opt_.zero_grad();
    ad::backward(loss);
    step(c_opt_);
    if (config_.weight_clip > 0) gan::clip_weights(c_, config_.weight_clip);
    row.real_score = mean_of(scores.real);
    row.fake_score = mean_of(scores.fake);
    row.w_estimate = gan::wasserstein_estimate(scores);
    row.grad_penalty = penalty;
  }

  void generator_update(double sigma, MetricsRow& row) {
    std::vector<det::Label> requests;
    const auto [noise, condition] = generator_inputs(requests);
    const Var<float> images = g_.forward(noise, condition);
    Var<float> critic_in = images;
    if (sigma > 0) critic_in = images + Var<float>(normal_tensor<float>(images.shape(), instance_rng_, sigma));
    const Var<float> fake_scores = c_.forward(critic_in).scores;
    Var<float> loss = gan::generator_loss(fake_scores);
    row.gen_loss = finite_or_throw(loss.item(), "generator loss", last_checkpoint_);
    row.pos_loss = 0;
    row.gate_frac = 0;
    if (conditional() && config_.mu > 0) {
      Tensor<float> real_scores;
      {
        ad::NoGradGuard no_grad;
        real_scores = c_.forward(Var<float>(with_noise(real_batch(), sigma, instance_rng_))).scores.value();
      }
      const nets::Detector<float>& det = *detector_;
      const DetectFn<float> detect = [&det](const Var<float>& x) { return det.forward(x); };
      const auto pos = position_loss(detect, images, requests, fake_scores.value(), real_scores,
                                     det.spec().layout(), config_.detection_weights, config_.gate_q);
      row.pos_loss = finite_or_throw(pos.loss.item(), "position loss", last_checkpoint_);
      row.gate_frac = pos.gate_fraction;
      loss = loss + ad::scale(pos.loss, static_cast<float>(config_.mu));
    }
    g_opt_.zero_grad();
    ad::backward(loss);
    step(g_opt_);
  }

  void step(ad::Adam<float>& opt) {
    try {
      opt.step();
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + "; last checkpoint: " +
                            (last_checkpoint_.empty() ? std::string("none") : last_checkpoint_.string()));
    }
  }

  nets::Generator<float>& g_;
  nets::Critic<float>& c_;
  nets::Detector<float>* detector_;
  const scenes::Dataset& data_;
  const TrainConfig& config_;
  fs::path out_dir_;
  RequestSampler sampler_;
  ad::Adam<float> g_opt_;
  ad::Adam<float> c_opt_;
  std::mt19937_64 batch_rng_, noise_rng_, gp_rng_, instance_rng_, request_rng_;
  fs::path last_checkpoint_;
};

scenes::SceneConfig scene_config_for(int side) {
  scenes::SceneConfig s;
  s.image_side = side;
  return s;
}

}  // namespace

GanResult train_step1(const scenes::Dataset& dataset, const nets::GeneratorSpec& generator_spec,
                      const nets::CriticSpec& critic_spec, const TrainConfig& config, const fs::path& out_dir) {
  config.validate();
  check_dataset(dataset, generator_spec.image_side);
  nets::Generator<float> g(generator_spec, stream_seed(config.seed, kGeneratorInit));
  nets::Critic<float> c(critic_spec, stream_seed(config.seed, kCriticInit));
  return GanTrainer(g, c, nullptr, dataset, config, scene_config_for(generator_spec.image_side), out_dir).run();
}

GanResult train_step2(const ad::TensorBundle& step1, const scenes::Dataset& dataset, nets::Detector<float>& detector,
                      const TrainConfig& config, const scenes::SceneConfig& scene_config, const fs::path& out_dir) {
  config.validate();
  nets::Generator<float> g = load_generator(step1);
  nets::Critic<float> c = load_critic(step1);
  check_dataset(dataset, g.spec().image_side);
  if (scene_config.image_side != g.spec().image_side) {
    throw PreconditionError("scene image side does not match the generator's image side");
  }
  if ((detector.spec().cells << detector.spec().layers) != g.spec().image_side) {
    throw ShapeError("detector input side does not match the generator's image side");
  }
  const bool was_trainable = detector.trainable();
  detector.set_trainable(false);
  try {
    auto result = GanTrainer(g, c, &detector, dataset, config, scene_config, out_dir).run();
    detector.set_trainable(was_trainable);
    return result;
  } catch (...) {
    detector.set_trainable(was_trainable);
    throw;
  }
}

// ---------------------------------------------------------------------------
// Generation

Tensor<float> generate_images(const nets::Generator<float>& generator, const std::vector<det::Label>& requests,
                              std::uint64_t seed) {
  const auto& spec = generator.spec();
  const ad::Index n = static_cast<ad::Index>(requests.size()), side = spec.image_side;
  const ad::Index per = 3 * side * side;
  Tensor<float> out(ad::Shape{n, 3, side, side});
  ad::NoGradGuard no_grad;
  const ad::Index chunk = 16;
  for (ad::Index begin = 0; begin < n; begin += chunk) {
    const ad::Index m = std::min(chunk, n - begin);
    const ad::Index noise_per = static_cast<ad::Index>(spec.noise_channels) * side * side;
    Tensor<float> noise(ad::Shape{m, spec.noise_channels, side, side});
    for (ad::Index i = 0; i < m; ++i) {
      std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(begin + i)));
      const auto z = generator_noise(spec, 1, rng);
      std::copy_n(z.ptr(), noise_per, noise.ptr() + i * noise_per);
    }
    const std::vector<det::Label> part(requests.begin() + begin, requests.begin() + begin + m);
    const auto images = generator.forward(Var<float>(noise), Var<float>(request_conditions(part, spec))).value();
    std::copy_n(images.ptr(), m * per, out.ptr() + begin * per);
  }
  return out;
}

scenes::Dataset augment(const nets::Generator<float>& generator, const std::vector<det::Label>& requests,
                        std::uint64_t seed) {
  const auto labels = quantize_requests(requests);
  const auto images = generate_images(generator, labels, seed);
  const ad::Index side = generator.spec().image_side, per = 3 * side * side;
  scenes::Dataset out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Tensor<float> px(ad::Shape{3, side, side});
    std::copy_n(images.ptr() + static_cast<ad::Index>(i) * per, per, px.ptr());
    char name[16];
    std::snprintf(name, sizeof name, "%06zu", i);
    out.push_back({name, std::move(px), {labels[i]}});
  }
  return out;
}

scenes::Dataset augment(const nets::Generator<float>& generator, const std::vector<det::Label>& requests,
                        std::uint64_t seed, const fs::path& dir) {
  auto out = augment(generator, requests, seed);
  scenes::write_dataset(out, dir);
  return out;
}

ConditioningReport evaluate_conditioning(const ImageFn& generate, const GridFn& detect, const det::GridLayout& layout,
                                         int n, const RequestSampler& sampler, std::uint64_t seed) {
  if (n < 1) throw PreconditionError("evaluate_conditioning needs n >= 1");
  const auto requests = sampler.sample(n, stream_seed(seed, kRequests));
  return score_grids(detect(generate(requests, stream_seed(seed, kNoise))), layout, requests);
}

ConditioningReport evaluate_conditioning(const nets::Generator<float>& generator,
                                         const nets::Detector<float>& detector, int n,
                                         const RequestSampler& sampler, std::uint64_t seed) {
  return evaluate_conditioning(
      [&](const std::vector<det::Label>& r, std::uint64_t s) { return generate_images(generator, r, s); },
      [&](const Tensor<float>& images) { return detect_grids(detector, images); }, detector.spec().layout(), n,
      sampler, seed);
}

}  // namespace boxgan
