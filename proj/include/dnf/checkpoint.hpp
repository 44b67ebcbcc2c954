// dnf/checkpoint.hpp

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

#ifndef DNF_CHECKPOINT_HPP_
#define DNF_CHECKPOINT_HPP_

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnf/errors.hpp"
#include "dnf/flow.hpp"
#include "dnf/objectives.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

namespace detail {

inline nlohmann::json TensorToJson(const Tensor &t) {
  nlohmann::json j;
  j["rows"] = t.rows;
  j["cols"] = t.cols;
  j["data"] = t.v;
  return j;
}

inline Tensor TensorFromJson(const nlohmann::json &j) {
  Tensor t(j.at("rows").get<long>(), j.at("cols").get<long>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != t.v.size())
    throw DataError("checkpoint tensor size mismatch");
  t.v = data;
  return t;
}

inline std::string CriterionName(Criterion c) {
  switch (c) {
    case Criterion::kNone:
      return "none";
    case Criterion::kMl:
      return "ml";
    case Criterion::kMg:
      return "mg";
    case Criterion::kMlMg:
      return "ml+mg";
  }
  throw UsageError("unknown criterion value");
}

inline Criterion CriterionFromName(const std::string &name) {
  if (name == "none") return Criterion::kNone;
  if (name == "ml") return Criterion::kMl;
  if (name == "mg") return Criterion::kMg;
  if (name == "ml+mg") return Criterion::kMlMg;
  throw DataError("unknown criterion name '" + name + "'");
}

}  // namespace detail

inline nlohmann::json ObjectiveSpecToJson(const ObjectiveSpec &spec) {
  nlohmann::json j;
  j["between"] = detail::CriterionName(spec.between);
  j["within"] = detail::CriterionName(spec.within);
  j["alpha"] = spec.alpha;
  j["beta_within"] = spec.beta_within;
  j["beta_between"] = spec.beta_between;
  j["delta"] = spec.delta;
  j["delta_prime"] = spec.delta_prime;
  j["epsilon"] = spec.epsilon;
  j["xi"] = spec.xi;
  j["include_entropy_with_mg"] = spec.include_entropy_with_mg;
  return j;
}

inline ObjectiveSpec ObjectiveSpecFromJson(const nlohmann::json &j) {
  ObjectiveSpec spec;
  spec.between = detail::CriterionFromName(j.at("between").get<std::string>());
  spec.within = detail::CriterionFromName(j.at("within").get<std::string>());
  spec.alpha = j.at("alpha").get<double>();
  spec.beta_within = j.at("beta_within").get<double>();
  spec.beta_between = j.at("beta_between").get<double>();
  spec.delta = j.at("delta").get<double>();
  spec.delta_prime = j.at("delta_prime").get<double>();
  spec.epsilon = j.at("epsilon").get<double>();
  spec.xi = j.at("xi").get<double>();
  spec.include_entropy_with_mg = j.at("include_entropy_with_mg").get<bool>();
  return spec;
}

// Everything a downstream command needs to rebuild the model: architecture,
// weights, class table, and the objective it was trained under.  Doubles
// survive the JSON round trip exactly (shortest-round-trip printing).
struct Checkpoint {
  DnfModel model;
  ObjectiveSpec objective;
  std::string variant;  // empty when not trained through a variant name
  long trained_steps = 0;
  bool diverged = false;
};

inline void SaveCheckpoint(const Checkpoint &ckpt, const std::string &path) {
  const DnfModel &m = ckpt.model;
  nlohmann::json j;
  j["format"] = "dnf-checkpoint";
  j["version"] = 1;
  j["dim"] = m.flow.dim;
  j["hidden"] = m.flow.hidden;
  j["scale_clamp"] = m.flow.blocks.empty() ? 5.0 : m.flow.blocks[0].scale_clamp;
  j["nf_mode"] = m.nf_mode;
  j["means_initialized"] = m.means_initialized;
  j["classes"] = m.classes;
  j["means"] = detail::TensorToJson(m.means);
  j["variant"] = ckpt.variant;
  j["trained_steps"] = ckpt.trained_steps;
  j["diverged"] = ckpt.diverged;
  j["objective"] = ObjectiveSpecToJson(ckpt.objective);

  nlohmann::json blocks = nlohmann::json::array();
  for (const MaskedAffineBlock &b : m.flow.blocks) {
    nlohmann::json jb;
    jb["permutation"] = b.perm;
    jb["w1"] = detail::TensorToJson(b.cond.w1);
    jb["b1"] = detail::TensorToJson(b.cond.b1);
    jb["w2"] = detail::TensorToJson(b.cond.w2);
    jb["b2"] = detail::TensorToJson(b.cond.b2);
    jb["wm"] = detail::TensorToJson(b.cond.wm);
    jb["bm"] = detail::TensorToJson(b.cond.bm);
    jb["ws"] = detail::TensorToJson(b.cond.ws);
    jb["bs"] = detail::TensorToJson(b.cond.bs);
    blocks.push_back(jb);
  }
  j["blocks"] = blocks;

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump(1) << '\n';
}

inline Checkpoint LoadCheckpoint(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "dnf-checkpoint")
      throw DataError("checkpoint " + path + ": unrecognized format field");
    if (j.at("version").get<long>() != 1)
      throw DataError("checkpoint " + path + ": unsupported version");

    const long dim = j.at("dim").get<long>();
    const long hidden = j.at("hidden").get<long>();
    const double clamp = j.at("scale_clamp").get<double>();
    const auto &jblocks = j.at("blocks");

    FlowModel flow(dim, static_cast<long>(jblocks.size()), /*seed=*/0, hidden);
    for (size_t k = 0; k < jblocks.size(); k++) {
      const auto &jb = jblocks[k];
      MaskedAffineBlock &b = flow.blocks[k];
      b.scale_clamp = clamp;
      b.perm = jb.at("permutation").get<std::vector<long>>();
      if (static_cast<long>(b.perm.size()) != dim)
        throw DataError("checkpoint block permutation has wrong length");
      b.cond.w1 = detail::TensorFromJson(jb.at("w1"));
      b.cond.b1 = detail::TensorFromJson(jb.at("b1"));
      b.cond.w2 = detail::TensorFromJson(jb.at("w2"));
      b.cond.b2 = detail::TensorFromJson(jb.at("b2"));
      b.cond.wm = detail::TensorFromJson(jb.at("wm"));
      b.cond.bm = detail::TensorFromJson(jb.at("bm"));
      b.cond.ws = detail::TensorFromJson(jb.at("ws"));
      b.cond.bs = detail::TensorFromJson(jb.at("bs"));
    }

    Checkpoint ckpt;
    ckpt.model.flow = std::move(flow);
    ckpt.model.nf_mode = j.at("nf_mode").get<bool>();
    ckpt.model.means_initialized = j.at("means_initialized").get<bool>();
    ckpt.model.classes = j.at("classes").get<std::vector<std::string>>();
    ckpt.model.means = detail::TensorFromJson(j.at("means"));
    if (ckpt.model.means.rows !=
            static_cast<long>(ckpt.model.classes.size()) ||
        ckpt.model.means.cols != dim)
      throw DataError("checkpoint means shape disagrees with class table");
    ckpt.variant = j.at("variant").get<std::string>();
    ckpt.trained_steps = j.at("trained_steps").get<long>();
    ckpt.diverged = j.at("diverged").get<bool>();
    ckpt.objective = ObjectiveSpecFromJson(j.at("objective"));
    return ckpt;
  } catch (const nlohmann::json::exception &e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace dnf

#endif  // DNF_CHECKPOINT_HPP_
