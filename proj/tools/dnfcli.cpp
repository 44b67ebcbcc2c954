// tools/dnfcli.cpp

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

// Command-line front end.  Exit codes: 0 success, 2 usage error,
// 3 divergence stop, 4 data error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dnf/dnf.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitData = 4;

struct SynthArgs {
  std::string kind = "gmm";
  long dim = 2;
  long classes = 3;
  long n = 1000;
  std::int64_t seed = -1;
  double mean_radius = 8.0;
  double sigma = 1.0;
  long warp_depth = 4;
  double class_mean_scale = 3.0;
  double within_scale_min = 0.3;
  double within_scale_max = 3.0;
  std::string out;
  std::string sidecar;
};

int RunSynth(const SynthArgs &args) {
  dnf::SynthSpec spec;
  spec.kind = args.kind;
  spec.dim = args.dim;
  spec.classes = args.classes;
  spec.samples_per_class = args.n;
  spec.seed = static_cast<uint64_t>(args.seed);
  spec.mean_radius = args.mean_radius;
  spec.sigma = args.sigma;
  spec.warp_depth = args.warp_depth;
  spec.class_mean_scale = args.class_mean_scale;
  spec.within_scale_min = args.within_scale_min;
  spec.within_scale_max = args.within_scale_max;

  nlohmann::json sidecar;
  dnf::VectorStore store = dnf::Synthesize(spec, &sidecar);
  dnf::SaveStore(store, args.out);
  if (!args.sidecar.empty()) {
    std::ofstream out(args.sidecar);
    if (!out) throw dnf::DataError("cannot write sidecar: " + args.sidecar);
    out << sidecar.dump(1) << '\n';
  }
  std::printf("wrote %ld vectors (dim %ld, %ld classes) to %s\n",
              store.Size(), store.dim, (long)store.DistinctLabels().size(),
              args.out.c_str());
  return kExitOk;
}

int RunTrain(const std::string &config_path) {
  dnf::RunConfig cfg = dnf::LoadRunConfig(config_path);
  dnf::ExperimentResult result = dnf::RunExperiment(cfg);
  for (const auto &vr : result.variants) {
    std::printf("%-10s steps=%-7ld %s  checkpoint=%s log=%s\n",
                vr.variant.c_str(), vr.log.final_step,
                vr.log.diverged ? "DIVERGED" : "finished",
                vr.checkpoint_path.c_str(), vr.log_path.c_str());
  }
  return result.any_diverged ? kExitDivergence : kExitOk;
}

int RunTransform(const std::string &ckpt_path, const std::string &in_path,
                 const std::string &out_path, bool generate) {
  dnf::Checkpoint ckpt = dnf::LoadCheckpoint(ckpt_path);
  dnf::VectorStore in = dnf::LoadStore(in_path);
  if (in.dim != ckpt.model.flow.dim)
    throw dnf::DataError("store dimension " + std::to_string(in.dim) +
                         " does not match checkpoint dimension " +
                         std::to_string(ckpt.model.flow.dim));
  dnf::Tensor x = in.ToTensor();
  dnf::FlowValues fv = generate ? dnf::GenerateValues(ckpt.model.flow, x)
                                : dnf::NormalizeValues(ckpt.model.flow, x);
  dnf::VectorStore out;
  for (long i = 0; i < in.Size(); i++) {
    std::vector<double> row(in.dim);
    for (long j = 0; j < in.dim; j++) row[j] = fv.out.at(i, j);
    out.AddDouble(in.ids[i], in.labels[i], row);
  }
  dnf::SaveStore(out, out_path);
  std::printf("wrote %ld transformed vectors to %s\n", out.Size(),
              out_path.c_str());
  return kExitOk;
}

int RunDiagnose(const std::string &in_path, const std::string &prefix,
                double epsilon, double xi) {
  dnf::VectorStore store = dnf::LoadStore(in_path);
  dnf::GaussReport gauss = dnf::ComputeGaussReport(store, epsilon, xi);
  dnf::WriteGaussCsv(gauss, prefix + ".gauss.csv");
  {
    std::ofstream out(prefix + ".summary.json");
    if (!out)
      throw dnf::DataError("cannot write summary: " + prefix +
                           ".summary.json");
    out << dnf::GaussSummaryJson(gauss).dump(1) << '\n';
  }
  if (store.DistinctLabels().size() >= 2) {
    dnf::VariationReport var = dnf::ComputeVariationReport(store);
    dnf::WriteVariationCsv(var, prefix + ".between.csv", prefix + ".within.csv");
  } else {
    std::printf("single class: variation report skipped\n");
  }
  std::printf(
      "pooled length mean %.6g var %.6g | pooled angle mean %.6g var %.6g\n",
      gauss.pooled_length_mean, gauss.pooled_length_var,
      gauss.pooled_angle_mean, gauss.pooled_angle_var);
  return kExitOk;
}

int RunPldaTrain(const std::string &in_path, const std::string &out_path,
                 long iters, double tol) {
  dnf::VectorStore store = dnf::LoadStore(in_path);
  dnf::PldaTrainOptions options;
  options.max_iters = iters;
  options.tol = tol;
  std::vector<std::string> warnings;
  dnf::PldaModel model = dnf::PldaTrain(store, options, nullptr, &warnings);
  for (const auto &w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  dnf::SavePldaModel(model, out_path);
  std::printf("wrote plda model (dim %ld) to %s\n", model.dim,
              out_path.c_str());
  return kExitOk;
}

std::vector<double> StoreRow(const dnf::VectorStore &store,
                             const std::string &id) {
  const long row = store.Row(id);
  return std::vector<double>(store.vectors[row].begin(),
                             store.vectors[row].end());
}

int RunScore(const std::string &backend, const std::string &store_path,
             const std::string &enroll_path, const std::string &test_path,
             const std::string &trials_path, const std::string &plda_path,
             const std::string &out_path, bool do_length_norm) {
  if (store_path.empty() == (enroll_path.empty() && test_path.empty())) {
    throw dnf::UsageError(
        "score: give either --store or both --enroll and --test");
  }
  if (store_path.empty() && (enroll_path.empty() || test_path.empty())) {
    throw dnf::UsageError("score: --enroll and --test go together");
  }

  dnf::VectorStore enroll_store, test_store;
  if (!store_path.empty()) {
    enroll_store = dnf::LoadStore(store_path);
    test_store = enroll_store;
  } else {
    enroll_store = dnf::LoadStore(enroll_path);
    test_store = dnf::LoadStore(test_path);
  }

  dnf::TrialList trials = dnf::LoadTrialList(trials_path);
  if (trials.empty()) throw dnf::DataError("score: empty trial list");

  dnf::PldaModel plda;
  if (backend == "plda") {
    if (plda_path.empty())
      throw dnf::UsageError("score: plda backend needs --plda-model");
    plda = dnf::LoadPldaModel(plda_path);
  } else if (backend != "cosine") {
    throw dnf::UsageError("score: backend is 'cosine' or 'plda'");
  }

  const auto fetch = [&](const dnf::VectorStore &store,
                         const std::string &id) {
    std::vector<double> v = StoreRow(store, id);
    if (do_length_norm) {
      double ss = 0.0;
      for (double x : v) ss += x * x;
      if (ss < 1e-24)
        throw dnf::DegenerateInputError("length_norm: zero vector id " + id);
      const double inv = 1.0 / std::sqrt(ss);
      for (double &x : v) x *= inv;
    }
    return v;
  };

  std::vector<dnf::ScoreEntry> entries;
  entries.reserve(trials.size());
  for (const auto &t : trials) {
    const std::vector<double> e = fetch(enroll_store, t.enroll);
    const std::vector<double> s = fetch(test_store, t.test);
    dnf::ScoreEntry entry;
    entry.enroll = t.enroll;
    entry.test = t.test;
    entry.score = backend == "plda" ? dnf::PldaScore(plda, e, s)
                                    : dnf::CosineScore(e, s);
    entries.push_back(entry);
  }
  dnf::SaveScoreFile(entries, out_path);
  std::printf("wrote %zu scores to %s\n", entries.size(), out_path.c_str());
  return kExitOk;
}

int RunEval(const std::string &scores_path, const std::string &trials_path) {
  std::vector<dnf::ScoreEntry> scores = dnf::LoadScoreFile(scores_path);
  dnf::TrialList trials = dnf::LoadTrialList(trials_path);
  long targets = 0;
  for (const auto &t : trials) targets += t.target ? 1 : 0;
  dnf::EerResult r = dnf::EvalEer(scores, trials);
  std::printf("trials %zu targets %ld nontargets %zu\n", trials.size(),
              targets, trials.size() - targets);
  std::printf("eer_percent %.10g\n", r.eer_percent);
  std::printf("threshold %.17g\n", r.threshold);
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"discriminative normalization flow toolkit"};
  app.require_subcommand(1);

  // synth
  SynthArgs synth_args;
  CLI::App *synth = app.add_subcommand("synth", "generate a synthetic store");
  synth->add_option("--kind", synth_args.kind,
                    "generator kind: gmm | warped-speakers");
  synth->add_option("--dim", synth_args.dim, "vector dimension");
  synth->add_option("--classes", synth_args.classes, "number of classes");
  synth->add_option("--n", synth_args.n, "samples per class");
  synth->add_option("--seed", synth_args.seed, "generator seed (required)")
      ->required();
  synth->add_option("--mean-radius", synth_args.mean_radius,
                    "gmm: component mean radius");
  synth->add_option("--sigma", synth_args.sigma, "gmm: component sigma");
  synth->add_option("--warp-depth", synth_args.warp_depth,
                    "warped-speakers: warp layer count");
  synth->add_option("--class-mean-scale", synth_args.class_mean_scale,
                    "warped-speakers: class mean scale");
  synth->add_option("--within-scale-min", synth_args.within_scale_min,
                    "warped-speakers: smallest class scale");
  synth->add_option("--within-scale-max", synth_args.within_scale_max,
                    "warped-speakers: largest class scale");
  synth->add_option("--out", synth_args.out, "output store path")->required();
  synth->add_option("--sidecar", synth_args.sidecar,
                    "optional generator-parameters JSON path");

  // train
  std::string train_config;
  CLI::App *train = app.add_subcommand("train", "run an experiment config");
  train->add_option("--config", train_config, "run-config JSON path")
      ->required();

  // transform
  std::string tf_ckpt, tf_in, tf_out;
  bool tf_generate = false;
  CLI::App *transform =
      app.add_subcommand("transform", "map a store through a checkpoint");
  transform->add_option("--checkpoint", tf_ckpt, "checkpoint path")
      ->required();
  transform->add_option("--in", tf_in, "input store")->required();
  transform->add_option("--out", tf_out, "output store")->required();
  transform->add_flag("--generate", tf_generate,
                      "use the generate direction (z to x)");

  // diagnose
  std::string diag_in, diag_prefix;
  double diag_epsilon = 1.0, diag_xi = 0.0;
  CLI::App *diagnose =
      app.add_subcommand("diagnose", "Gaussianality and variation reports");
  diagnose->add_option("--in", diag_in, "input store")->required();
  diagnose->add_option("--out-prefix", diag_prefix, "report path prefix")
      ->required();
  diagnose->add_option("--epsilon", diag_epsilon, "length metric epsilon");
  diagnose->add_option("--xi", diag_xi, "angle metric xi (0 = 1/dim)");

  // plda-train
  std::string pt_in, pt_out;
  long pt_iters = 20;
  double pt_tol = 1e-6;
  CLI::App *plda_train =
      app.add_subcommand("plda-train", "train a two-covariance plda model");
  plda_train->add_option("--in", pt_in, "labeled store")->required();
  plda_train->add_option("--out", pt_out, "output model path")->required();
  plda_train->add_option("--iters", pt_iters, "max EM iterations");
  plda_train->add_option("--tol", pt_tol, "log-likelihood gain tolerance");

  // score
  std::string sc_backend = "cosine", sc_store, sc_enroll, sc_test;
  std::string sc_trials, sc_plda, sc_out;
  bool sc_lennorm = false;
  CLI::App *score = app.add_subcommand("score", "score a trial list");
  score->add_option("--backend", sc_backend, "cosine | plda");
  score->add_option("--store", sc_store, "single store for both sides");
  score->add_option("--enroll", sc_enroll, "enrollment store");
  score->add_option("--test", sc_test, "test store");
  score->add_option("--trials", sc_trials, "trial list path")->required();
  score->add_option("--plda-model", sc_plda, "plda model path");
  score->add_option("--out", sc_out, "output score file")->required();
  score->add_flag("--length-norm", sc_lennorm,
                  "length-normalize vectors before scoring");

  // eval
  std::string ev_scores, ev_trials;
  CLI::App *eval = app.add_subcommand("eval", "EER of a score file");
  eval->add_option("--scores", ev_scores, "score file")->required();
  eval->add_option("--trials", ev_trials, "trial list")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    // CLI11 prints its own message; --help lands here with exit code 0.
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return RunSynth(synth_args);
    if (train->parsed()) return RunTrain(train_config);
    if (transform->parsed())
      return RunTransform(tf_ckpt, tf_in, tf_out, tf_generate);
    if (diagnose->parsed())
      return RunDiagnose(diag_in, diag_prefix, diag_epsilon, diag_xi);
    if (plda_train->parsed()) return RunPldaTrain(pt_in, pt_out, pt_iters, pt_tol);
    if (score->parsed())
      return RunScore(sc_backend, sc_store, sc_enroll, sc_test, sc_trials,
                      sc_plda, sc_out, sc_lennorm);
    if (eval->parsed()) return RunEval(ev_scores, ev_trials);
    throw dnf::UsageError("no subcommand given");
  } catch (const dnf::DivergenceError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const dnf::UsageError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const dnf::DataError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const dnf::MissingClassError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const dnf::DegenerateInputError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
