// tests/acceptance_main.cpp

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

// Acceptance battery for dnfkit: nine numbered end-to-end checks covering
// gradients, flow invertibility, Gaussian geometry, the 2-D simulation
// behaviors (Gaussianalization and small-data ML divergence), the
// warped-speakers homogeneity and verification trends, the PLDA backend,
// and experiment determinism.  Prints one [PASS]/[FAIL] line per criterion
// and exits nonzero if any check fails.
//
//   acceptance                run everything
//   acceptance --criterion 5  run a single check

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dnf/dnf.hpp"

#ifndef DNFKIT_SOURCE_DIR
#define DNFKIT_SOURCE_DIR "."
#endif

namespace {

using dnf::Batch;
using dnf::BindDnf;
using dnf::Compose;
using dnf::ComputeEer;
using dnf::ComputeGaussReport;
using dnf::CosineScore;
using dnf::DnfBinding;
using dnf::DnfModel;
using dnf::EvalObjective;
using dnf::FlowModel;
using dnf::FlowValues;
using dnf::GaussReport;
using dnf::GenerateValues;
using dnf::NormalizeValues;
using dnf::ObjectiveSpec;
using dnf::PldaModel;
using dnf::PldaScore;
using dnf::PldaTrain;
using dnf::Rng;
using dnf::RunConfig;
using dnf::RunExperiment;
using dnf::SynthSpec;
using dnf::Synthesize;
using dnf::Tape;
using dnf::Tensor;
using dnf::Train;
using dnf::TrainConfig;
using dnf::TrainLog;
using dnf::VariantObjective;
using dnf::VectorStore;

constexpr double kPi = 3.14159265358979323846;

std::string Fmt(const char *fmt, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return std::string(buf);
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects hard requirements and free-form stats for one criterion.  The
// stats always end up on the result line so a green run still shows the
// numbers it was judged on.
class Checker {
 public:
  void Require(bool ok, const std::string &what) {
    if (ok) return;
    pass_ = false;
    Append(&fails_, what);
  }
  void Note(const std::string &s) { Append(&notes_, s); }
  Outcome Done() const {
    Outcome o;
    o.pass = pass_;
    if (!fails_.empty()) {
      o.detail = fails_;
      if (!notes_.empty()) o.detail += " | " + notes_;
    } else {
      o.detail = notes_;
    }
    return o;
  }

 private:
  static void Append(std::string *dst, const std::string &s) {
    if (!dst->empty()) *dst += "; ";
    *dst += s;
  }
  bool pass_ = true;
  std::string fails_;
  std::string notes_;
};

std::string FreshDir(const std::string &leaf) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "dnfkit_acceptance" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string Slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Mean per-sample length metric and mean per-pair angle metric of a raw
// batch around the origin, matching the conventions of the training probe.
struct BatchStats {
  double r_len = 0.0;
  double r_ang = 0.0;
};

BatchStats RawStats(const Tensor &x, double eps, double xi) {
  const long n = x.rows, d = x.cols;
  const double target = std::sqrt(eps * static_cast<double>(d));
  std::vector<double> norms(n, 0.0);
  double len_sum = 0.0;
  for (long i = 0; i < n; i++) {
    double ss = 0.0;
    for (long j = 0; j < d; j++) ss += x.at(i, j) * x.at(i, j);
    norms[i] = std::sqrt(ss);
    const double dev = norms[i] - target;
    len_sum -= dev * dev;
  }
  double ang_sum = 0.0;
  long pairs = 0;
  for (long i = 0; i < n; i++) {
    if (norms[i] < 1e-12) continue;
    for (long j = i + 1; j < n; j++) {
      if (norms[j] < 1e-12) continue;
      double dot = 0.0;
      for (long c = 0; c < d; c++) dot += x.at(i, c) * x.at(j, c);
      const double cos = dot / (norms[i] * norms[j]);
      ang_sum -= cos * cos / (2.0 * xi);
      pairs++;
    }
  }
  BatchStats out;
  out.r_len = len_sum / static_cast<double>(n);
  out.r_ang = pairs > 0 ? ang_sum / static_cast<double>(pairs) : 0.0;
  return out;
}

// Normalize a large store in row chunks so no single tape holds the whole
// dataset's intermediate activations.
Tensor ChunkedNormalize(const FlowModel &flow, const Tensor &x) {
  Tensor z(x.rows, x.cols);
  const long chunk = 512;
  for (long start = 0; start < x.rows; start += chunk) {
    const long n = std::min(chunk, x.rows - start);
    Tensor part(n, x.cols);
    for (long i = 0; i < n; i++)
      for (long j = 0; j < x.cols; j++) part.at(i, j) = x.at(start + i, j);
    FlowValues fv = NormalizeValues(flow, part);
    for (long i = 0; i < n; i++)
      for (long j = 0; j < x.cols; j++) z.at(start + i, j) = fv.out.at(i, j);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Criterion 1: every objective variant passes a finite-difference check of
// the full gradient (flow weights and, when trainable, the class means) on a
// D=4, K=3, N=12 instance.

Outcome Criterion1() {
  Checker c;
  double worst = 0.0;
  std::string worst_at = "-";
  for (const std::string &name : dnf::KnownVariants()) {
    const ObjectiveSpec spec = VariantObjective(name, ObjectiveSpec{});

    FlowModel flow(4, 2, /*seed=*/19, /*hidden_in=*/8);
    Rng rng(23);
    for (Tensor *p : flow.Parameters())
      for (double &v : p->v) v += 0.15 * rng.Normal();
    Tensor centers = rng.Randn(3, 4, 1.5);

    DnfModel model;
    if (dnf::VariantIsNf(name)) {
      model = DnfModel::Nf(std::move(flow));
    } else {
      model = DnfModel::Dnf(std::move(flow), {"a", "b", "c"});
      model.means = centers;
      model.means_initialized = true;
    }

    Batch batch;
    batch.x = Tensor(12, 4);
    for (long y = 0; y < 3; y++)
      for (long i = 0; i < 4; i++) {
        batch.rows.push_back(model.nf_mode ? 0 : y);
        for (long j = 0; j < 4; j++)
          batch.x.at(y * 4 + i, j) = centers.at(y, j) + 0.8 * rng.Normal();
      }
    batch.records.resize(12);
    for (long i = 0; i < 12; i++) batch.records[i] = i;

    Tape t;
    DnfBinding b = BindDnf(&t, model);
    dnf::ObjectiveTerms terms = Compose(&t, spec, model, b, batch);
    t.Backward(terms.total);

    std::vector<Tensor *> params = model.Parameters();
    std::vector<Tensor> grads;
    for (int leaf : b.flow.leaves) grads.push_back(t.Grad(leaf));
    if (model.MeansTrainable()) grads.push_back(t.Grad(b.means));
    if (grads.size() != params.size()) {
      c.Require(false, name + ": grad/param count mismatch");
      continue;
    }

    const double h = 1e-5;
    long bad = 0, checked = 0;
    for (size_t p = 0; p < params.size(); p++) {
      for (size_t i = 0; i < params[p]->v.size(); i++) {
        const double saved = params[p]->v[i];
        params[p]->v[i] = saved + h;
        const double fp = EvalObjective(spec, model, batch).total;
        params[p]->v[i] = saved - h;
        const double fm = EvalObjective(spec, model, batch).total;
        params[p]->v[i] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double ad = grads[p].v[i];
        const double scale = std::max({1.0, std::fabs(fd), std::fabs(ad)});
        const double rel = std::fabs(fd - ad) / scale;
        if (rel > worst) {
          worst = rel;
          worst_at = name;
        }
        if (rel > 1e-3) bad++;
        checked++;
      }
    }
    c.Require(bad == 0,
              Fmt("%s: %ld of %ld partials off by > 1e-3", name.c_str(), bad,
                  checked));
    c.Require(checked > 300, Fmt("%s: only %ld partials", name.c_str(), checked));
  }
  c.Note(Fmt("worst rel err %.2e (%s)", worst, worst_at.c_str()));
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criterion 2: generate inverts normalize to 1e-4 on 100 points at
// D in {2, 8, 32}, and the normalize logdet matches the log-determinant of a
// numerically differentiated full Jacobian at small D.

Outcome Criterion2() {
  Checker c;
  for (long d : {2L, 8L, 32L}) {
    FlowModel flow(d, 10, /*seed=*/400 + d);
    Rng rng(500 + d);
    for (Tensor *p : flow.Parameters())
      for (double &v : p->v) v += 0.1 * rng.Normal();
    Tensor x = rng.Randn(100, d, 1.5);
    FlowValues nz = NormalizeValues(flow, x);
    FlowValues back = GenerateValues(flow, nz.out);
    double worst = 0.0;
    for (size_t i = 0; i < x.v.size(); i++)
      worst = std::max(worst, std::fabs(back.out.v[i] - x.v[i]));
    c.Require(worst < 1e-4, Fmt("d=%ld round trip err %.2e", d, worst));
    c.Note(Fmt("d=%ld trip %.1e", d, worst));
  }

  for (long d : {2L, 4L}) {
    FlowModel flow(d, 6, /*seed=*/700 + d);
    Rng rng(800 + d);
    for (Tensor *p : flow.Parameters())
      for (double &v : p->v) v += 0.1 * rng.Normal();
    Tensor pts = rng.Randn(5, d, 1.2);
    FlowValues nz = NormalizeValues(flow, pts);
    const double h = 1e-5;
    double worst = 0.0;
    for (long i = 0; i < pts.rows; i++) {
      Eigen::MatrixXd jac(d, d);
      for (long j = 0; j < d; j++) {
        Tensor xp(1, d), xm(1, d);
        for (long k = 0; k < d; k++) {
          xp.at(0, k) = pts.at(i, k);
          xm.at(0, k) = pts.at(i, k);
        }
        xp.at(0, j) += h;
        xm.at(0, j) -= h;
        FlowValues fp = NormalizeValues(flow, xp);
        FlowValues fm = NormalizeValues(flow, xm);
        for (long r = 0; r < d; r++)
          jac(r, j) = (fp.out.at(0, r) - fm.out.at(0, r)) / (2.0 * h);
      }
      const double numeric = std::log(std::fabs(jac.determinant()));
      const double taped = nz.logdet.at(i, 0);
      worst = std::max(worst, std::fabs(numeric - taped));
    }
    c.Require(worst < 1e-4, Fmt("d=%ld logdet err %.2e", d, worst));
    c.Note(Fmt("d=%ld logdet %.1e", d, worst));
  }
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criterion 3: geometry of high-dimensional Gaussians.  10^5 samples of
// N(0, I_512): the mean norm must sit on the exact chi mean
// sqrt(2) Gamma((d+1)/2) / Gamma(d/2), the norm variance near 0.5, and the
// mean squared cosine of disjoint sample pairs near 1/d.

Outcome Criterion3() {
  Checker c;
  const long d = 512, n = 100000;
  Rng rng(314159);
  double sum_len = 0.0, sum_sq = 0.0, sum_cos2 = 0.0;
  long pairs = 0;
  std::vector<double> prev(d);
  double prev_norm = 0.0;
  bool have_prev = false;
  std::vector<double> x(d);
  for (long i = 0; i < n; i++) {
    double ss = 0.0;
    for (long j = 0; j < d; j++) {
      x[j] = rng.Normal();
      ss += x[j] * x[j];
    }
    const double len = std::sqrt(ss);
    sum_len += len;
    sum_sq += ss;
    if (have_prev) {
      double dot = 0.0;
      for (long j = 0; j < d; j++) dot += x[j] * prev[j];
      const double cos = dot / (len * prev_norm);
      sum_cos2 += cos * cos;
      pairs++;
      have_prev = false;
    } else {
      prev = x;
      prev_norm = len;
      have_prev = true;
    }
  }
  const double mean_len = sum_len / n;
  const double var_len = sum_sq / n - mean_len * mean_len;
  const double mean_cos2 = sum_cos2 / pairs;
  const double chi_mean =
      std::sqrt(2.0) * std::exp(std::lgamma((d + 1) / 2.0) - std::lgamma(d / 2.0));
  c.Require(std::fabs(mean_len - chi_mean) < 0.01 * chi_mean,
            Fmt("mean norm %.6f vs chi mean %.6f", mean_len, chi_mean));
  c.Require(std::fabs(var_len - 0.5) < 0.05,
            Fmt("norm variance %.4f vs 0.5", var_len));
  c.Require(std::fabs(mean_cos2 - 1.0 / d) < 0.1 / d,
            Fmt("mean cos^2 %.6e vs %.6e", mean_cos2, 1.0 / d));
  c.Note(Fmt("len %.4f (chi %.4f), var %.4f, cos2 %.3e (1/d %.3e)", mean_len,
             chi_mean, var_len, mean_cos2, 1.0 / d));
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criteria 4 and 9 share the checked-in 2-D simulation config.  Criterion 4
// judges the training curves; criterion 9 reruns the config and compares
// logs byte for byte, reusing criterion 4's run as the first copy when both
// execute in one invocation.

struct Fig8Cache {
  bool ran = false;
  std::string dir;
};
Fig8Cache g_fig8;

RunConfig Fig8Config(const std::string &out_dir) {
  RunConfig cfg = dnf::LoadRunConfig(std::string(DNFKIT_SOURCE_DIR) +
                                     "/experiments/fig8_simulation.json");
  cfg.output_dir = out_dir;
  return cfg;
}

Outcome Criterion4() {
  Checker c;
  const std::string dir = FreshDir("fig8_run1");
  RunConfig cfg = Fig8Config(dir);
  dnf::ExperimentResult res = RunExperiment(cfg);
  g_fig8.ran = true;
  g_fig8.dir = dir;

  const dnf::VariantResult *ml = nullptr, *mg = nullptr;
  for (const auto &vr : res.variants) {
    if (vr.variant == "NF-ML") ml = &vr;
    if (vr.variant == "NF-MG") mg = &vr;
  }
  if (!ml || !mg) {
    c.Require(false, "config must train NF-ML and NF-MG");
    return c.Done();
  }
  c.Require(!ml->log.diverged, "NF-ML diverged");
  c.Require(!mg->log.diverged, "NF-MG diverged");
  if (ml->log.records.size() < 2 || mg->log.records.size() < 2) {
    c.Require(false, "train logs too short");
    return c.Done();
  }

  const dnf::TrainRecord &ml0 = ml->log.records.front();
  const dnf::TrainRecord &ml1 = ml->log.records.back();
  const dnf::TrainRecord &mg0 = mg->log.records.front();
  const dnf::TrainRecord &mg1 = mg->log.records.back();

  c.Require(ml1.probe_r_len > ml0.probe_r_len,
            Fmt("ML R_len %.4f -> %.4f did not improve", ml0.probe_r_len,
                ml1.probe_r_len));
  c.Require(ml1.probe_r_ang > ml0.probe_r_ang,
            Fmt("ML R_ang %.4f -> %.4f did not improve", ml0.probe_r_ang,
                ml1.probe_r_ang));
  c.Require(mg1.probe_r_len > mg0.probe_r_len,
            Fmt("MG R_len %.4f -> %.4f did not improve", mg0.probe_r_len,
                mg1.probe_r_len));
  c.Require(mg1.probe_r_ang > mg0.probe_r_ang,
            Fmt("MG R_ang %.4f -> %.4f did not improve", mg0.probe_r_ang,
                mg1.probe_r_ang));

  // Reference: an exact standard-Gaussian batch of the probe's size carries
  // the metric levels a perfectly normalized latent space would show.
  const long probe_n =
      std::min<long>(std::max<long>(2, cfg.train.probe_size), res.data.Size());
  Rng ref_rng(987654321);
  Tensor ref = ref_rng.Randn(probe_n, res.data.dim, 1.0);
  const ObjectiveSpec spec = VariantObjective("NF-MG", cfg.objective);
  BatchStats ref_stats =
      RawStats(ref, spec.epsilon, spec.ResolvedXi(res.data.dim));

  c.Require(std::fabs(mg1.probe_r_len - ref_stats.r_len) <=
                0.2 * std::fabs(ref_stats.r_len),
            Fmt("MG final R_len %.4f not within 20%% of reference %.4f",
                mg1.probe_r_len, ref_stats.r_len));
  c.Require(std::fabs(mg1.probe_r_ang - ref_stats.r_ang) <=
                0.2 * std::fabs(ref_stats.r_ang),
            Fmt("MG final R_ang %.4f not within 20%% of reference %.4f",
                mg1.probe_r_ang, ref_stats.r_ang));
  c.Require(mg1.probe_r_len > ml1.probe_r_len,
            Fmt("MG final R_len %.4f not better than ML %.4f", mg1.probe_r_len,
                ml1.probe_r_len));
  c.Require(mg1.probe_r_ang > ml1.probe_r_ang,
            Fmt("MG final R_ang %.4f not better than ML %.4f", mg1.probe_r_ang,
                ml1.probe_r_ang));

  c.Note(Fmt("R_len init %.2f, ML %.3f, MG %.3f, ref %.3f; R_ang init %.4f, "
             "ML %.4f, MG %.4f, ref %.4f",
             mg0.probe_r_len, ml1.probe_r_len, mg1.probe_r_len,
             ref_stats.r_len, mg0.probe_r_ang, ml1.probe_r_ang,
             mg1.probe_r_ang, ref_stats.r_ang));
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criterion 5: with only 15 training samples, ML training overfits until the
// divergence detector trips in at least 4 of 5 seeds; MG training on the same
// data never trips and still improves both probe metrics in 5 of 5 seeds.

Outcome Criterion5() {
  Checker c;
  SynthSpec synth;
  synth.kind = "gmm";
  synth.dim = 2;
  synth.classes = 3;
  synth.samples_per_class = 5;
  synth.seed = 614;
  synth.sigma = 1.0;
  // Tight component means keep the Gaussian-level objective magnitude around
  // 15 on this set, so a tripwire of 150 sits an order of magnitude above
  // anything stable training produces while ML's overfitting excursions
  // (objective magnitudes past 200 within a few thousand steps) cross it.
  synth.means = {{2.0, 0.0}, {0.0, 2.0}, {-1.5, -1.5}};
  VectorStore data = Synthesize(synth);

  int ml_trips = 0, mg_clean = 0, mg_better = 0;
  for (uint64_t s = 1; s <= 5; s++) {
    TrainConfig tc;
    tc.max_steps = 20000;
    tc.batch_size = 8;
    tc.learning_rate = 1e-3;
    tc.seed = s;
    tc.log_interval = 2000;
    tc.probe_size = 15;
    tc.divergence_threshold = 150;

    {
      DnfModel m = DnfModel::Nf(FlowModel(2, 10, /*seed=*/1000 + s));
      TrainLog log =
          Train(&m, data, VariantObjective("NF-ML", ObjectiveSpec{}), tc);
      if (log.diverged) ml_trips++;
    }
    {
      DnfModel m = DnfModel::Nf(FlowModel(2, 10, /*seed=*/1000 + s));
      TrainLog log =
          Train(&m, data, VariantObjective("NF-MG", ObjectiveSpec{}), tc);
      if (!log.diverged) mg_clean++;
      if (!log.diverged && log.records.size() >= 2 &&
          log.records.back().probe_r_len > log.records.front().probe_r_len &&
          log.records.back().probe_r_ang > log.records.front().probe_r_ang)
        mg_better++;
    }
  }
  c.Require(ml_trips >= 4, Fmt("ML tripped divergence in %d/5 seeds", ml_trips));
  c.Require(mg_clean == 5, Fmt("MG stayed finite in %d/5 seeds", mg_clean));
  c.Require(mg_better == 5,
            Fmt("MG improved both probe metrics in %d/5 seeds", mg_better));
  c.Note(Fmt("ML trips %d/5, MG clean %d/5, MG improved %d/5", ml_trips,
             mg_clean, mg_better));
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7 train on the warped-speakers set.  One helper trains a
// named variant with shared settings so the two criteria stay comparable.

DnfModel TrainVariantOn(const VectorStore &data, const std::string &name,
                        long max_steps, uint64_t flow_seed, uint64_t train_seed,
                        double delta_prime, bool *diverged) {
  FlowModel flow(data.dim, 10, flow_seed);
  DnfModel model = DnfModel::Dnf(std::move(flow), data.labels);
  TrainConfig tc;
  tc.max_steps = max_steps;
  tc.batch_size = 256;
  tc.samples_per_class = 8;
  tc.learning_rate = 1e-3;
  tc.seed = train_seed;
  tc.log_interval = 500;
  tc.probe_size = 256;
  // Hinge tolerances sized for d=32: the chi length variance level is 0.5
  // regardless of dimension, so delta = 0.6 sits just above it, while the
  // Gaussian level of the mean squared pairwise cosine is 1/d and K class
  // means in d dimensions cannot fall below the Welch bound
  // (K-d)/(d(K-1)), so the d=512 defaults (0.03 / 0.002) would leave both
  // hinges permanently active here.  Callers pass delta_prime at roughly
  // 1.3/d, just above both angle levels for their class count.
  ObjectiveSpec base;
  base.delta = 0.6;
  base.delta_prime = delta_prime;
  TrainLog log = Train(&model, data, VariantObjective(name, base), tc);
  if (diverged) *diverged = log.diverged;
  return model;
}

Outcome Criterion6() {
  Checker c;
  SynthSpec synth;
  synth.kind = "warped-speakers";
  synth.dim = 32;
  synth.classes = 50;
  synth.samples_per_class = 40;
  synth.seed = 2026;
  // Class centers at the chi-typical radius (scale 1 puts ||mean|| near
  // sqrt(d)) with a mild two-layer warp: the set stays non-Gaussian and
  // heterogeneous, but the between-class geometry starts within reach of
  // the MG shell constraint, as it is for real embedding front-ends.
  synth.class_mean_scale = 1.0;
  synth.warp_depth = 2;
  VectorStore data = Synthesize(synth);

  bool div_nl = false, div_gg = false;
  DnfModel nl = TrainVariantOn(data, "DNF-N-L", 1500, 71, 5, 0.04, &div_nl);
  DnfModel gg = TrainVariantOn(data, "DNF-G-G", 1500, 71, 5, 0.04, &div_gg);
  c.Require(!div_nl, "DNF-N-L diverged");
  c.Require(!div_gg, "DNF-G-G diverged");

  Tensor raw_x = data.ToTensor();
  GaussReport raw = ComputeGaussReport(raw_x, data.labels);
  GaussReport rep_nl =
      ComputeGaussReport(ChunkedNormalize(nl.flow, raw_x), data.labels);
  GaussReport rep_gg =
      ComputeGaussReport(ChunkedNormalize(gg.flow, raw_x), data.labels);

  c.Require(rep_gg.pooled_length_var < rep_nl.pooled_length_var,
            Fmt("DNF-G-G length var %.4f not below DNF-N-L %.4f",
                rep_gg.pooled_length_var, rep_nl.pooled_length_var));
  c.Require(rep_nl.pooled_length_var < raw.pooled_length_var,
            Fmt("DNF-N-L length var %.4f not below raw %.4f",
                rep_nl.pooled_length_var, raw.pooled_length_var));
  c.Note(Fmt("length var raw %.2f -> DNF-N-L %.3f -> DNF-G-G %.3f",
             raw.pooled_length_var, rep_nl.pooled_length_var,
             rep_gg.pooled_length_var));
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criterion 7: verification trend on a warped-speakers train/eval split with
// a brute-force trial list.  The split is at the sample level: the backend
// population is shared, the trial vectors are unseen during training, as in
// an enrollment/test protocol.  Cosine EER must order raw >= DNF-N-L >=
// DNF-G-G with a >= 20% relative win for DNF-G-G, and PLDA on DNF-G-G
// latents must stay within 2 points of its cosine EER.

double PairwiseEer(const std::vector<std::vector<double>> &vecs,
                   const std::vector<std::string> &labels,
                   const PldaModel *plda) {
  std::vector<double> targets, nontargets;
  const size_t n = vecs.size();
  for (size_t i = 0; i < n; i++)
    for (size_t j = i + 1; j < n; j++) {
      const double s = plda ? PldaScore(*plda, vecs[i], vecs[j])
                            : CosineScore(vecs[i], vecs[j]);
      if (labels[i] == labels[j])
        targets.push_back(s);
      else
        nontargets.push_back(s);
    }
  return ComputeEer(targets, nontargets).eer_percent;
}

std::vector<std::vector<double>> TensorRows(const Tensor &x) {
  std::vector<std::vector<double>> rows(x.rows, std::vector<double>(x.cols));
  for (long i = 0; i < x.rows; i++)
    for (long j = 0; j < x.cols; j++) rows[i][j] = x.at(i, j);
  return rows;
}

Outcome Criterion7() {
  Checker c;
  SynthSpec synth;
  synth.kind = "warped-speakers";
  synth.dim = 32;
  synth.classes = 120;
  synth.samples_per_class = 260;
  synth.seed = 424242;
  // Class centers on the chi-typical shell (as in criterion 6) under a
  // 4-layer warp, with within-class scales log-uniform in [0.2, 4].  The
  // wide scale spread is what inflates raw cosine EER: a scale-4 class has
  // sample lengths near 4*sqrt(d), its directions are residual-dominated,
  // and cosine stops seeing the identity that the lengths still carry.
  // Flows recover it by per-class radial contraction, and DNF-G-G
  // homogenizes more completely than DNF-N-L, which is the ordering this
  // criterion checks.
  synth.class_mean_scale = 1.0;
  synth.warp_depth = 4;
  synth.within_scale_min = 0.2;
  synth.within_scale_max = 4.0;
  VectorStore all = Synthesize(synth);

  // 250 training samples per class; the last 10 of each class are the
  // evaluation vectors.  Dense training clouds keep the flows fitting the
  // population rather than memorizing points: with sparse clouds the map
  // between training samples is unconstrained and fresh samples of the
  // same classes land on distorted geometry.
  std::map<std::string, long> seen;
  VectorStore train_set, eval_set;
  for (long i = 0; i < all.Size(); i++) {
    if (seen[all.labels[i]]++ < 250)
      train_set.Add(all.ids[i], all.labels[i], all.vectors[i]);
    else
      eval_set.Add(all.ids[i], all.labels[i], all.vectors[i]);
  }

  bool div_nl = false, div_gg = false;
  DnfModel nl =
      TrainVariantOn(train_set, "DNF-N-L", 2500, 73, 9, 1.3 / 32.0, &div_nl);
  DnfModel gg =
      TrainVariantOn(train_set, "DNF-G-G", 2500, 73, 9, 1.3 / 32.0, &div_gg);
  c.Require(!div_nl, "DNF-N-L diverged");
  c.Require(!div_gg, "DNF-G-G diverged");

  Tensor eval_x = eval_set.ToTensor();
  std::vector<std::vector<double>> raw_rows = TensorRows(eval_x);
  std::vector<std::vector<double>> nl_rows =
      TensorRows(ChunkedNormalize(nl.flow, eval_x));
  std::vector<std::vector<double>> gg_rows =
      TensorRows(ChunkedNormalize(gg.flow, eval_x));

  const double eer_raw = PairwiseEer(raw_rows, eval_set.labels, nullptr);
  const double eer_nl = PairwiseEer(nl_rows, eval_set.labels, nullptr);
  const double eer_gg = PairwiseEer(gg_rows, eval_set.labels, nullptr);

  c.Require(eer_raw >= eer_nl,
            Fmt("raw EER %.2f below DNF-N-L %.2f", eer_raw, eer_nl));
  c.Require(eer_nl >= eer_gg,
            Fmt("DNF-N-L EER %.2f below DNF-G-G %.2f", eer_nl, eer_gg));
  c.Require(eer_gg <= 0.8 * eer_raw,
            Fmt("DNF-G-G EER %.2f not a 20%% relative win over raw %.2f",
                eer_gg, eer_raw));

  // PLDA trained on the training classes' DNF-G-G latents.
  Tensor train_x = train_set.ToTensor();
  VectorStore latent_train;
  Tensor train_z = ChunkedNormalize(gg.flow, train_x);
  for (long i = 0; i < train_set.Size(); i++) {
    std::vector<double> row(train_z.cols);
    for (long j = 0; j < train_z.cols; j++) row[j] = train_z.at(i, j);
    latent_train.AddDouble(train_set.ids[i], train_set.labels[i], row);
  }
  PldaModel plda = PldaTrain(latent_train);
  const double eer_plda = PairwiseEer(gg_rows, eval_set.labels, &plda);
  c.Require(eer_plda <= eer_gg + 2.0,
            Fmt("PLDA EER %.2f more than 2 points over cosine %.2f", eer_plda,
                eer_gg));

  c.Note(Fmt("EER raw %.2f, DNF-N-L %.2f, DNF-G-G %.2f, PLDA %.2f", eer_raw,
             eer_nl, eer_gg, eer_plda));
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criterion 8: PLDA backend oracles.  (a) EM recovers the generating
// between/within covariances of a synthetic two-covariance population within
// 10% relative Frobenius error; (b) the factored LLR matches brute-force
// numerical integration of the 1-D model; (c) the interpolated EER matches an
// exhaustive threshold sweep.

Eigen::MatrixXd RandomSpd(const std::vector<double> &eigs, uint64_t seed) {
  const long d = static_cast<long>(eigs.size());
  Rng rng(seed);
  Eigen::MatrixXd g(d, d);
  for (long i = 0; i < d; i++)
    for (long j = 0; j < d; j++) g(i, j) = rng.Normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd ev(d);
  for (long i = 0; i < d; i++) ev(i) = eigs[i];
  return q * ev.asDiagonal() * q.transpose();
}

double FrobRelError(const std::vector<std::vector<double>> &est,
                    const Eigen::MatrixXd &truth) {
  double num = 0.0, den = 0.0;
  for (long i = 0; i < truth.rows(); i++)
    for (long j = 0; j < truth.cols(); j++) {
      const double diff = est[i][j] - truth(i, j);
      num += diff * diff;
      den += truth(i, j) * truth(i, j);
    }
  return std::sqrt(num / den);
}

double NormalPdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) /
         std::sqrt(2.0 * kPi * var);
}

// Simpson integration of p(e, t | same class) for the 1-D model with latent
// variance psi and unit within-class variance.
double QuadratureLlr(double psi, double e, double t) {
  const double lo = -12.0, hi = 12.0;
  const long n = 40000;  // even
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (long i = 0; i <= n; i++) {
    const double u = lo + h * i;
    const double f =
        NormalPdf(u, 0.0, psi) * NormalPdf(e, u, 1.0) * NormalPdf(t, u, 1.0);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * f;
  }
  const double joint = acc * h / 3.0;
  return std::log(joint) - std::log(NormalPdf(e, 0.0, 1.0 + psi)) -
         std::log(NormalPdf(t, 0.0, 1.0 + psi));
}

PldaModel ScalarPlda(double psi) {
  PldaModel m;
  m.dim = 1;
  m.mean = {0.0};
  m.transform = {{1.0}};
  m.psi = {psi};
  m.between = {{psi}};
  m.within = {{1.0}};
  return m;
}

Outcome Criterion8() {
  Checker c;

  // (a) generative recovery; the class count keeps the sampling floor of the
  // class-mean scatter (~ sqrt(((tr B)^2 + tr B^2) / classes)) near 5% so
  // the 10% bound is a property of the estimator, not of the draw.
  {
    const long d = 8, classes = 2000, per_class = 10;
    const std::vector<double> b_eigs = {4.0, 2.5, 1.5, 1.0, 0.8, 0.6, 0.5, 0.4};
    const std::vector<double> w_eigs = {1.5, 1.2, 1.0, 1.0, 0.9, 0.8, 0.7, 0.6};
    Eigen::MatrixXd b_true = RandomSpd(b_eigs, 11);
    Eigen::MatrixXd w_true = RandomSpd(w_eigs, 12);
    Eigen::LLT<Eigen::MatrixXd> lb(b_true), lw(w_true);
    Eigen::VectorXd m_true(d);
    for (long j = 0; j < d; j++) m_true(j) = 0.3 * (j - 3);

    Rng rng(515151);
    std::vector<std::vector<double>> vecs;
    std::vector<std::string> labels;
    Eigen::VectorXd g(d);
    for (long k = 0; k < classes; k++) {
      for (long j = 0; j < d; j++) g(j) = rng.Normal();
      Eigen::VectorXd center = m_true + lb.matrixL() * g;
      for (long i = 0; i < per_class; i++) {
        for (long j = 0; j < d; j++) g(j) = rng.Normal();
        Eigen::VectorXd xv = center + lw.matrixL() * g;
        std::vector<double> row(d);
        for (long j = 0; j < d; j++) row[j] = xv(j);
        vecs.push_back(row);
        labels.push_back("s" + std::to_string(k));
      }
    }
    PldaModel model = PldaTrain(vecs, labels);
    const double err_b = FrobRelError(model.between, b_true);
    const double err_w = FrobRelError(model.within, w_true);
    c.Require(err_b < 0.10, Fmt("between recovery err %.3f", err_b));
    c.Require(err_w < 0.10, Fmt("within recovery err %.3f", err_w));
    c.Note(Fmt("recovery B %.3f W %.3f", err_b, err_w));
  }

  // (b) LLR vs numerical quadrature in the 1-D model
  {
    const double closed = PldaScore(ScalarPlda(1.0), {0.0}, {0.0});
    c.Require(std::fabs(closed - 0.5 * std::log(4.0 / 3.0)) < 1e-12,
              Fmt("closed-form LLR %.12f vs 0.5 ln(4/3)", closed));
    double worst = 0.0;
    const double cases[][3] = {
        {1.0, 0.0, 0.0}, {0.8, 0.7, -0.3}, {2.5, 1.2, 0.4}, {0.4, -1.0, 1.5}};
    for (const auto &cs : cases) {
      const double llr = PldaScore(ScalarPlda(cs[0]), {cs[1]}, {cs[2]});
      const double quad = QuadratureLlr(cs[0], cs[1], cs[2]);
      worst = std::max(worst, std::fabs(llr - quad));
    }
    c.Require(worst < 1e-6, Fmt("LLR vs quadrature err %.2e", worst));
    c.Note(Fmt("quadrature err %.1e", worst));
  }

  // (c) EER vs exhaustive sweep
  {
    Rng rng(2718);
    std::vector<double> tg(1000), nt(1000);
    for (double &v : tg) v = 1.0 + rng.Normal();
    for (double &v : nt) v = rng.Normal();
    const double eer = ComputeEer(tg, nt).eer_percent;

    std::vector<double> all = tg;
    all.insert(all.end(), nt.begin(), nt.end());
    std::sort(all.begin(), all.end());
    double best_gap = 1e9, best_eer = 0.0;
    for (double th : all) {
      long fa = 0, fr = 0;
      for (double v : nt)
        if (v >= th) fa++;
      for (double v : tg)
        if (v < th) fr++;
      const double far = static_cast<double>(fa) / nt.size();
      const double frr = static_cast<double>(fr) / tg.size();
      if (std::fabs(far - frr) < best_gap) {
        best_gap = std::fabs(far - frr);
        best_eer = 50.0 * (far + frr);
      }
    }
    c.Require(std::fabs(eer - best_eer) <= 0.1,
              Fmt("EER %.3f vs sweep %.3f", eer, best_eer));
    c.Note(Fmt("eer %.3f sweep %.3f", eer, best_eer));
  }
  return c.Done();
}

// ---------------------------------------------------------------------------
// Criterion 9: rerunning the simulation config must reproduce the train-log
// CSVs byte for byte.

Outcome Criterion9() {
  Checker c;
  std::string dir1 = g_fig8.dir;
  if (!g_fig8.ran) {
    dir1 = FreshDir("fig8_run1");
    RunExperiment(Fig8Config(dir1));
  }
  const std::string dir2 = FreshDir("fig8_run2");
  RunExperiment(Fig8Config(dir2));

  for (const std::string &name : {std::string("NF-ML"), std::string("NF-MG")}) {
    const std::string a = Slurp(dir1 + "/" + name + ".train.csv");
    const std::string b = Slurp(dir2 + "/" + name + ".train.csv");
    c.Require(!a.empty(), name + ": first log missing or empty");
    c.Require(a == b, name + ": train logs differ between reruns");
    c.Note(Fmt("%s %zu bytes", name.c_str(), a.size()));
  }
  return c.Done();
}

}  // namespace

int main(int argc, char **argv) {
  long only = 0;
  for (int i = 1; i < argc; i++) {
    if (!std::strcmp(argv[i], "--criterion") && i + 1 < argc) {
      only = std::atol(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }

  struct Entry {
    int num;
    const char *title;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "objective gradients match finite differences", Criterion1},
      {2, "flow round trip and Jacobian log-determinant", Criterion2},
      {3, "Gaussian geometry oracles (chi mean, annulus variance, angles)",
       Criterion3},
      {4, "2-D GMM simulation: ML and MG both Gaussianalize, MG reaches the "
          "reference",
       Criterion4},
      {5, "15-sample run: ML trips divergence, MG stays stable", Criterion5},
      {6, "warped speakers: latent length-variance ordering GG < NL < raw",
       Criterion6},
      {7, "warped speakers: cosine EER ordering and PLDA parity", Criterion7},
      {8, "PLDA oracles: recovery, quadrature LLR, EER sweep", Criterion8},
      {9, "experiment rerun reproduces train logs byte for byte", Criterion9},
  };

  bool all_pass = true;
  int ran = 0;
  for (const Entry &e : entries) {
    if (only > 0 && e.num != only) continue;
    ran++;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception &ex) {
      out.pass = false;
      out.detail = std::string("exception: ") + ex.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] criterion %d: %s (%.1f s)%s%s\n",
                out.pass ? "PASS" : "FAIL", e.num, e.title, secs,
                out.detail.empty() ? "" : " -- ", out.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  if (ran == 0) {
    std::fprintf(stderr, "no such criterion\n");
    return 2;
  }
  return all_pass ? 0 : 1;
}
