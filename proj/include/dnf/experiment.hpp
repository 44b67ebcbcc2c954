// dnf/experiment.hpp

// Copyright 2026  dnfkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// CONDITIONS OF TITLE, MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE OR
// NONINFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DNF_EXPERIMENT_HPP_
#define DNF_EXPERIMENT_HPP_

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dnf/checkpoint.hpp"
#include "dnf/data.hpp"
#include "dnf/errors.hpp"
#include "dnf/flow.hpp"
#include "dnf/objectives.hpp"
#include "dnf/training.hpp"

namespace dnf {

// Table I nomenclature: NF-<within> for the plain flow, DNF-<between>-<within>
// with N(one)/L(ikelihood)/G(aussianality) slots for the class-conditional
// model.  The pure-MG flow omits the entropy term; DNF-G-G keeps it.
inline const std::vector<std::string> &KnownVariants() {
  static const std::vector<std::string> names = {
      "NF-ML",   "NF-MG",   "DNF-N-L", "DNF-L-L",
      "DNF-G-L", "DNF-G-G", "DNF-G-LG"};
  return names;
}

inline bool VariantIsNf(const std::string &name) {
  return name == "NF-ML" || name == "NF-MG";
}

inline ObjectiveSpec VariantObjective(const std::string &name,
                                      ObjectiveSpec base) {
  if (name == "NF-ML") {
    base.between = Criterion::kNone;
    base.within = Criterion::kMl;
  } else if (name == "NF-MG") {
    base.between = Criterion::kNone;
    base.within = Criterion::kMg;
    base.include_entropy_with_mg = false;
  } else if (name == "DNF-N-L") {
    base.between = Criterion::kNone;
    base.within = Criterion::kMl;
  } else if (name == "DNF-L-L") {
    base.between = Criterion::kMl;
    base.within = Criterion::kMl;
  } else if (name == "DNF-G-L") {
    base.between = Criterion::kMg;
    base.within = Criterion::kMl;
  } else if (name == "DNF-G-G") {
    base.between = Criterion::kMg;
    base.within = Criterion::kMg;
    base.include_entropy_with_mg = true;
  } else if (name == "DNF-G-LG") {
    base.between = Criterion::kMg;
    base.within = Criterion::kMlMg;
  } else {
    throw UsageError("unknown variant '" + name + "'");
  }
  return base;
}

struct FlowConfig {
  long blocks = 10;
  long hidden = 0;  // 0 = max(64, 2 dim)
  double scale_clamp = 5.0;
  uint64_t seed = 1;
};

struct RunConfig {
  std::string data_path;  // exclusive with synth
  bool has_synth = false;
  SynthSpec synth;
  std::vector<std::string> variants;
  FlowConfig flow;
  TrainConfig train;
  ObjectiveSpec objective;  // criteria slots overwritten per variant
  std::string output_dir;
};

namespace detail {

inline void CheckKeys(const nlohmann::json &j,
                      const std::vector<std::string> &allowed,
                      const std::string &where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto &item : j.items()) {
    bool ok = false;
    for (const auto &k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw UsageError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
T GetOr(const nlohmann::json &j, const std::string &key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline SynthSpec ParseSynth(const nlohmann::json &j) {
  CheckKeys(j,
            {"kind", "dim", "classes", "samples_per_class", "seed",
             "mean_radius", "sigma", "means", "warp_depth",
             "class_mean_scale", "within_scale_min", "within_scale_max"},
            "synth");
  if (!j.contains("seed"))
    throw UsageError("synth requires an explicit seed");
  SynthSpec s;
  s.kind = GetOr<std::string>(j, "kind", s.kind);
  s.dim = GetOr<long>(j, "dim", s.dim);
  s.classes = GetOr<long>(j, "classes", s.classes);
  s.samples_per_class = GetOr<long>(j, "samples_per_class", s.samples_per_class);
  s.seed = j.at("seed").get<uint64_t>();
  s.mean_radius = GetOr<double>(j, "mean_radius", s.mean_radius);
  s.sigma = GetOr<double>(j, "sigma", s.sigma);
  if (j.contains("means"))
    s.means = j.at("means").get<std::vector<std::vector<double>>>();
  s.warp_depth = GetOr<long>(j, "warp_depth", s.warp_depth);
  s.class_mean_scale = GetOr<double>(j, "class_mean_scale", s.class_mean_scale);
  s.within_scale_min = GetOr<double>(j, "within_scale_min", s.within_scale_min);
  s.within_scale_max = GetOr<double>(j, "within_scale_max", s.within_scale_max);
  return s;
}

inline FlowConfig ParseFlow(const nlohmann::json &j) {
  CheckKeys(j, {"blocks", "hidden", "scale_clamp", "seed"}, "flow");
  FlowConfig f;
  f.blocks = GetOr<long>(j, "blocks", f.blocks);
  f.hidden = GetOr<long>(j, "hidden", f.hidden);
  f.scale_clamp = GetOr<double>(j, "scale_clamp", f.scale_clamp);
  f.seed = GetOr<uint64_t>(j, "seed", f.seed);
  return f;
}

inline TrainConfig ParseTrain(const nlohmann::json &j) {
  CheckKeys(j,
            {"epochs", "max_steps", "batch_size", "samples_per_class",
             "learning_rate", "beta1", "beta2", "seed",
             "divergence_threshold", "checkpoint_interval", "log_interval",
             "probe_size"},
            "train");
  TrainConfig t;
  t.epochs = GetOr<long>(j, "epochs", t.epochs);
  t.max_steps = GetOr<long>(j, "max_steps", t.max_steps);
  t.batch_size = GetOr<long>(j, "batch_size", t.batch_size);
  t.samples_per_class = GetOr<long>(j, "samples_per_class", t.samples_per_class);
  t.learning_rate = GetOr<double>(j, "learning_rate", t.learning_rate);
  t.beta1 = GetOr<double>(j, "beta1", t.beta1);
  t.beta2 = GetOr<double>(j, "beta2", t.beta2);
  t.seed = GetOr<uint64_t>(j, "seed", t.seed);
  t.divergence_threshold =
      GetOr<double>(j, "divergence_threshold", t.divergence_threshold);
  t.checkpoint_interval =
      GetOr<long>(j, "checkpoint_interval", t.checkpoint_interval);
  t.log_interval = GetOr<long>(j, "log_interval", t.log_interval);
  t.probe_size = GetOr<long>(j, "probe_size", t.probe_size);
  return t;
}

inline ObjectiveSpec ParseObjective(const nlohmann::json &j) {
  CheckKeys(j,
            {"alpha", "beta_within", "beta_between", "delta", "delta_prime",
             "epsilon", "xi"},
            "objective");
  ObjectiveSpec s;
  s.alpha = GetOr<double>(j, "alpha", s.alpha);
  s.beta_within = GetOr<double>(j, "beta_within", s.beta_within);
  s.beta_between = GetOr<double>(j, "beta_between", s.beta_between);
  s.delta = GetOr<double>(j, "delta", s.delta);
  s.delta_prime = GetOr<double>(j, "delta_prime", s.delta_prime);
  s.epsilon = GetOr<double>(j, "epsilon", s.epsilon);
  s.xi = GetOr<double>(j, "xi", s.xi);
  return s;
}

}  // namespace detail

inline RunConfig ParseRunConfig(const nlohmann::json &j) {
  detail::CheckKeys(
      j, {"data", "synth", "variants", "flow", "train", "objective",
          "output_dir"},
      "run config");
  RunConfig cfg;
  if (j.contains("data") && j.contains("synth"))
    throw UsageError("run config: 'data' and 'synth' are mutually exclusive");
  if (!j.contains("data") && !j.contains("synth"))
    throw UsageError("run config: one of 'data' or 'synth' is required");
  if (j.contains("data")) cfg.data_path = j.at("data").get<std::string>();
  if (j.contains("synth")) {
    cfg.has_synth = true;
    cfg.synth = detail::ParseSynth(j.at("synth"));
  }
  if (!j.contains("variants") || !j.at("variants").is_array() ||
      j.at("variants").empty())
    throw UsageError("run config: 'variants' must be a nonempty array");
  for (const auto &v : j.at("variants")) {
    const std::string name = v.get<std::string>();
    VariantObjective(name, ObjectiveSpec{});  // validates the name
    cfg.variants.push_back(name);
  }
  if (j.contains("flow")) cfg.flow = detail::ParseFlow(j.at("flow"));
  if (j.contains("train")) cfg.train = detail::ParseTrain(j.at("train"));
  if (j.contains("objective"))
    cfg.objective = detail::ParseObjective(j.at("objective"));
  if (!j.contains("output_dir"))
    throw UsageError("run config: 'output_dir' is required");
  cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

inline RunConfig LoadRunConfig(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw DataError("run config " + path + ": " + e.what());
  }
  return ParseRunConfig(j);
}

struct VariantResult {
  std::string variant;
  TrainLog log;
  DnfModel model;
  std::string checkpoint_path;
  std::string log_path;
};

struct ExperimentResult {
  std::string output_dir;
  VectorStore data;
  std::vector<VariantResult> variants;
  bool any_diverged = false;
};

// Trains every configured variant on the same data with the same flow
// initialization, writing one checkpoint and one train-log CSV per variant
// into output_dir.
inline ExperimentResult RunExperiment(const RunConfig &cfg) {
  ExperimentResult result;
  result.output_dir = cfg.output_dir;
  std::filesystem::create_directories(cfg.output_dir);

  if (cfg.has_synth) {
    nlohmann::json sidecar;
    result.data = Synthesize(cfg.synth, &sidecar);
    SaveStoreText(result.data, cfg.output_dir + "/data.txt");
    std::ofstream meta(cfg.output_dir + "/data_meta.json");
    meta << sidecar.dump(1) << '\n';
  } else {
    result.data = LoadStore(cfg.data_path);
  }
  if (result.data.Size() == 0)
    throw DataError("experiment dataset is empty");

  for (const std::string &name : cfg.variants) {
    const ObjectiveSpec spec = VariantObjective(name, cfg.objective);
    const long hidden = cfg.flow.hidden;
    FlowModel flow(result.data.dim, cfg.flow.blocks, cfg.flow.seed, hidden);
    for (auto &b : flow.blocks) b.scale_clamp = cfg.flow.scale_clamp;

    DnfModel model = VariantIsNf(name)
                         ? DnfModel::Nf(std::move(flow))
                         : DnfModel::Dnf(std::move(flow), result.data.labels);

    VariantResult vr;
    vr.variant = name;
    vr.checkpoint_path = cfg.output_dir + "/" + name + ".checkpoint.json";
    vr.log_path = cfg.output_dir + "/" + name + ".train.csv";

    vr.log = Train(&model, result.data, spec, cfg.train);
    WriteTrainLogCsv(vr.log, vr.log_path);

    Checkpoint ckpt;
    ckpt.model = model;
    ckpt.objective = spec;
    ckpt.variant = name;
    ckpt.trained_steps = vr.log.final_step;
    ckpt.diverged = vr.log.diverged;
    SaveCheckpoint(ckpt, vr.checkpoint_path);

    result.any_diverged = result.any_diverged || vr.log.diverged;
    vr.model = std::move(model);
    result.variants.push_back(std::move(vr));
  }
  return result;
}

}  // namespace dnf

#endif  // DNF_EXPERIMENT_HPP_
