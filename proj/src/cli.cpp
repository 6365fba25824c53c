// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "boxgan/config.hpp"
#include "boxgan/errors.hpp"
#include "boxgan/gabx.hpp"
#include "boxgan/pipeline.hpp"
#include "boxgan/plot.hpp"
#include "boxgan/random.hpp"

namespace boxgan::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Stream indices for seeds derived inside the CLI.
enum : std::uint64_t { kRequestStream = 1, kNoiseStream = 2, kBaselineStream = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string external;
  std::string step1;
  std::string detector;
  std::string ckpt;
  std::string boxes;
  std::string preset;
  std::string metrics;
  std::optional<int> count;
  int window = DiagnoseOptions{}.window;
};

const char* const kSubcommands[] = {"synth", "pretrain-det", "train1", "train2",
                                    "generate", "eval", "diagnose", "plot"};

// ---------------------------------------------------------------------------
// Helpers

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + path.string());
}

scenes::Dataset load_training_data(const Options& o, int side) {
  if (o.data.empty() == o.external.empty()) throw UsageError("give exactly one of --data and --external");
  auto data = o.data.empty() ? scenes::load_external(o.external, side) : scenes::load_dataset(o.data);
  if (data.empty()) throw DataError("no labeled images found in " + (o.data.empty() ? o.external : o.data));
  return data;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing ") + flag);
}

std::vector<det::Label> read_boxes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read box file " + path.string());
  std::vector<det::Label> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(scenes::parse_label(line, path.string() + ":" + std::to_string(lineno)));
  }
  if (out.empty()) throw DataError("box file " + path.string() + " has no boxes");
  return out;
}

std::string csv_row(const ConditioningRow& r) {
  char buf[256];
  const auto& q = r.requested.box;
  int n = std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,", r.requested.class_id, q.x1, q.y1, q.x2, q.y2);
  if (r.detected) {
    const auto& d = r.detected->box;
    n += std::snprintf(buf + n, sizeof buf - n, "%d,%.6f,%.6f,%.6f,%.6f,%.6f,", r.detected->class_id, d.x1, d.y1,
                       d.x2, d.y2, r.detected->confidence);
  } else {
    n += std::snprintf(buf + n, sizeof buf - n, "-1,,,,,,");
  }
  std::snprintf(buf + n, sizeof buf - n, "%.6f", r.iou);
  return buf;
}

// printf-style line on std::cout.
void say(const char* format, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  std::cout << buf << "\n";
}

json metrics_summary(const MetricsLog& log) {
  if (log.empty()) return json::object();
  const auto& last = log.rows().back();
  return {{"iterations", last.iter}, {"final_w_estimate", last.w_estimate}, {"final_gen_loss", last.gen_loss}};
}

// ---------------------------------------------------------------------------
// Subcommands

int do_synth(const Options& o, const ExperimentConfig& c) {
  const int count = o.count.value_or(2000);
  if (count < 1) throw UsageError("--count must be >= 1");
  scenes::write_dataset(scenes::generate_dataset(c.scenes, count, c.train.seed), o.out);
  std::cout << "wrote " << count << " scenes to " << o.out << "\n";
  return kOk;
}

int do_pretrain(const Options& o, const ExperimentConfig& c) {
  const auto data = load_training_data(o, c.detector.cells << c.detector.layers);
  const auto result = pretrain_detector(data, c.detector, c.train, o.out);
  const auto& r = result.report;
  write_json(fs::path(o.out) / "report.json", {{"train_size", r.train_size},
                                               {"holdout_size", r.holdout_size},
                                               {"mean_iou", r.mean_iou},
                                               {"class_accuracy", r.class_accuracy},
                                               {"final_loss", r.final_loss}});
  say("holdout mean IoU %.4f, class accuracy %.4f", r.mean_iou, r.class_accuracy);
  return kOk;
}

int do_train1(const Options& o, const ExperimentConfig& c) {
  const auto data = load_training_data(o, c.generator.image_side);
  const auto result = train_step1(data, c.generator, c.critic, c.train, o.out);
  write_json(fs::path(o.out) / "report.json", metrics_summary(result.log));
  say("final wasserstein estimate %.6f", result.log.rows().back().w_estimate);
  return kOk;
}

int do_train2(const Options& o, const ExperimentConfig& c) {
  require(o.step1, "--step1");
  require(o.detector, "--detector");
  const auto step1 = ad::read_gabx(o.step1);
  auto detector = load_detector(ad::read_gabx(o.detector));
  const auto data = load_training_data(o, c.scenes.image_side);
  const auto result = train_step2(step1, data, detector, c.train, c.scenes, o.out);
  write_json(fs::path(o.out) / "report.json", metrics_summary(result.log));
  say("final wasserstein estimate %.6f", result.log.rows().back().w_estimate);
  return kOk;
}

RequestSampler sampler_for(const Options& o, const ExperimentConfig& c, int side) {
  auto scene = c.scenes;
  scene.image_side = side;
  return RequestSampler::named(o.preset.empty() ? c.train.sampler : o.preset, scene);
}

int do_generate(const Options& o, const ExperimentConfig& c) {
  require(o.ckpt, "--ckpt");
  if (o.boxes.empty() == o.preset.empty()) throw UsageError("give exactly one of --boxes and --preset");
  const auto generator = load_generator(ad::read_gabx(o.ckpt));
  std::vector<det::Label> requests;
  if (!o.boxes.empty()) {
    requests = read_boxes(o.boxes);
    if (o.count && *o.count != static_cast<int>(requests.size())) {
      throw UsageError("--count " + std::to_string(*o.count) + " does not match the " +
                       std::to_string(requests.size()) + " boxes in " + o.boxes);
    }
  } else {
    if (!o.count || *o.count < 1) throw UsageError("--preset needs --count >= 1");
    requests = sampler_for(o, c, generator.spec().image_side)
                   .sample(*o.count, stream_seed(c.train.seed, kRequestStream));
  }
  const auto out = augment(generator, requests, stream_seed(c.train.seed, kNoiseStream), o.out);
  std::cout << "wrote " << out.size() << " labeled images to " << o.out << "\n";
  return kOk;
}

int do_eval(const Options& o, const ExperimentConfig& c) {
  require(o.ckpt, "--ckpt");
  require(o.detector, "--detector");
  const int n = o.count.value_or(200);
  if (n < 1) throw UsageError("--count must be >= 1");
  const auto generator = load_generator(ad::read_gabx(o.ckpt));
  const auto detector = load_detector(ad::read_gabx(o.detector));
  const auto sampler = sampler_for(o, c, generator.spec().image_side);
  const auto report = evaluate_conditioning(generator, detector, n, sampler, c.train.seed);
  const nets::Generator<float> untrained(generator.spec(), stream_seed(c.train.seed, kBaselineStream));
  const auto baseline = evaluate_conditioning(untrained, detector, n, sampler, c.train.seed);

  std::ofstream csv(fs::path(o.out) / "conditioning.csv", std::ios::binary | std::ios::trunc);
  csv << "class,x1,y1,x2,y2,det_class,det_x1,det_y1,det_x2,det_y2,confidence,iou\n";
  for (const auto& r : report.rows) csv << csv_row(r) << "\n";
  if (!csv) throw DataError("cannot write conditioning.csv");
  write_json(fs::path(o.out) / "report.json", {{"count", n},
                                               {"sampler", sampler.name()},
                                               {"mean_iou", report.mean_iou},
                                               {"class_accuracy", report.class_accuracy},
                                               {"untrained_mean_iou", baseline.mean_iou},
                                               {"untrained_class_accuracy", baseline.class_accuracy}});
  say("mean IoU %.4f (untrained generator %.4f), class accuracy %.4f", report.mean_iou, baseline.mean_iou,
      report.class_accuracy);
  return kOk;
}

int do_diagnose(const Options& o, const ExperimentConfig&) {
  require(o.metrics, "--metrics");
  const auto log = read_metrics(o.metrics);
  DiagnoseOptions d;
  d.window = o.window;
  const Regime regime = diagnose_balance(log, d);
  write_json(fs::path(o.out) / "diagnosis.json",
             {{"regime", to_string(regime)}, {"window", d.window}, {"rows", log.size()}});
  std::cout << to_string(regime) << "\n";
  return kOk;
}

int do_plot(const Options& o, const ExperimentConfig&) {
  require(o.metrics, "--metrics");
  write_plot(fs::path(o.out) / "scores.svg", read_metrics(o.metrics));
  std::cout << "wrote " << (fs::path(o.out) / "scores.svg").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Manifest replay

struct Replay {
  std::vector<std::string> args;
  std::optional<json> config;
};

// Expands --from-manifest into the recorded invocation followed by the
// caller's remaining flags, which therefore take precedence.
Replay expand_manifest(const std::vector<std::string>& args) {
  Replay r{args, std::nullopt};
  std::optional<std::string> path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--from-manifest") {
      if (i + 1 == args.size()) throw UsageError("--from-manifest needs a file");
      path = args[++i];
    } else if (args[i].rfind("--from-manifest=", 0) == 0) {
      path = args[i].substr(16);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return r;
  const json m = read_json(*path);
  if (!m.is_object() || !m.contains("command") || !m.contains("args") || !m.contains("config")) {
    throw DataError(*path + " is not a boxgan manifest");
  }
  const std::string command = m.at("command").get<std::string>();
  if (!rest.empty() && rest.front().rfind("-", 0) != 0) {
    if (rest.front() != command) throw UsageError("manifest records '" + command + "', not '" + rest.front() + "'");
    rest.erase(rest.begin());
  }
  r.args = {command};
  for (const auto& [key, value] : m.at("args").items()) {
    if (key == "config") continue;  // the snapshot below replaces the file
    r.args.push_back("--" + key);
    r.args.push_back(value.get<std::string>());
  }
  r.args.insert(r.args.end(), rest.begin(), rest.end());
  const bool explicit_config =
      std::any_of(rest.begin(), rest.end(), [](const std::string& a) { return a.rfind("--config", 0) == 0; });
  if (!explicit_config) r.config = m.at("config");
  return r;
}

int dispatch(const std::string& name, const Options& o, const ExperimentConfig& c) {
  if (name == "synth") return do_synth(o, c);
  if (name == "pretrain-det") return do_pretrain(o, c);
  if (name == "train1") return do_train1(o, c);
  if (name == "train2") return do_train2(o, c);
  if (name == "generate") return do_generate(o, c);
  if (name == "eval") return do_eval(o, c);
  if (name == "diagnose") return do_diagnose(o, c);
  return do_plot(o, c);
}

int run_checked(const std::vector<std::string>& raw) {
  const Replay replay = expand_manifest(raw);

  CLI::App app{"Two-step GAN augmentation for object detection", "boxgan"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Options o;
  std::string unused_manifest;
  for (const char* name : kSubcommands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--config", o.config, "experiment config JSON");
    sub->add_option("--seed", o.seed, "overrides the config seed");
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--from-manifest", unused_manifest, "re-run a recorded manifest.json");
    const std::string n = name;
    if (n == "pretrain-det" || n == "train1" || n == "train2") {
      sub->add_option("--data", o.data, "dataset directory (images/, labels/)");
      sub->add_option("--external", o.external, "dataset directory resized to the model side");
    }
    if (n == "train2") {
      sub->add_option("--step1", o.step1, "Step-1 checkpoint");
      sub->add_option("--detector", o.detector, "detector checkpoint");
    }
    if (n == "generate" || n == "eval") {
      sub->add_option("--ckpt", o.ckpt, "GAN checkpoint");
      sub->add_option("--preset", o.preset, "request distribution: scene or hard");
    }
    if (n == "generate") sub->add_option("--boxes", o.boxes, "box file, one 'class x1 y1 x2 y2' per line");
    if (n == "eval") sub->add_option("--detector", o.detector, "detector checkpoint");
    if (n == "synth" || n == "generate" || n == "eval") sub->add_option("--count", o.count, "number of items");
    if (n == "diagnose" || n == "plot") sub->add_option("--metrics", o.metrics, "metrics.csv");
    if (n == "diagnose") sub->add_option("--window", o.window, "trailing rows examined");
  }

  std::vector<std::string> reversed(replay.args.rbegin(), replay.args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();

  ExperimentConfig config;
  if (replay.config) {
    config = experiment_from_json(*replay.config);
  } else if (!o.config.empty()) {
    config = load_experiment(o.config);
  }
  if (o.seed) config.train.seed = *o.seed;
  config.validate();

  json args = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string key = opt->get_single_name();
    if (opt->count() == 0 || key == "help" || key == "from-manifest") continue;
    args[key] = opt->results().back();
  }
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "manifest.json", {{"tool", "boxgan"},
                                                 {"version", kVersion},
                                                 {"command", command},
                                                 {"seed", config.train.seed},
                                                 {"config", to_json(config)},
                                                 {"args", args}});
  return dispatch(command, o, config);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    return run_checked(args);
  } catch (const UsageError& e) {
    std::cerr << "boxgan: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "boxgan: training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "boxgan: error: " << e.what() << "\n";
    return kDataError;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace boxgan::cli
