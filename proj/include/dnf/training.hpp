// dnf/training.hpp

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

#ifndef DNF_TRAINING_HPP_
#define DNF_TRAINING_HPP_

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dnf/adam.hpp"
#include "dnf/autodiff.hpp"
#include "dnf/data.hpp"
#include "dnf/errors.hpp"
#include "dnf/flow.hpp"
#include "dnf/objectives.hpp"
#include "dnf/rng.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

struct TrainConfig {
  long epochs = 50;
  // When positive this is the total step count and epochs is ignored.
  long max_steps = 0;
  long batch_size = 256;
  long samples_per_class = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  uint64_t seed = 0;
  double divergence_threshold = 1e6;
  long checkpoint_interval = 0;  // steps between checkpoint callbacks, 0 = off
  long log_interval = 100;       // steps between probe records
  long probe_size = 512;
};

// One probe record.  objective/prior/entropy/len/ang are the objective
// decomposition evaluated on the probe batch (they sum exactly); r_len and
// r_ang are the raw per-sample / per-pair Gaussianality metric means of the
// probe residuals, logged for metric curves independent of the criterion.
struct TrainRecord {
  long step = 0;
  double objective = 0.0;
  double prior_term = 0.0;
  double entropy_term = 0.0;
  double len_term = 0.0;
  double ang_term = 0.0;
  double probe_r_len = 0.0;
  double probe_r_ang = 0.0;
  double wall_seconds = 0.0;
  bool diverged = false;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  bool diverged = false;
  long final_step = 0;
  // Objective value at the divergence trip, if any.
  double divergence_value = 0.0;
};

// Wall-clock stays out of the CSV on purpose: logs from identically seeded
// runs must be byte-identical.
inline void WriteTrainLogCsv(const TrainLog &log, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write train log: " + path);
  out << "step,objective,prior_term,entropy_term,R_len,R_ang,diverged,"
         "probe_r_len,probe_r_ang\n";
  char buf[512];
  for (const TrainRecord &r : log.records) {
    std::snprintf(buf, sizeof(buf),
                  "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g\n", r.step,
                  r.objective, r.prior_term, r.entropy_term, r.len_term,
                  r.ang_term, r.diverged ? 1 : 0, r.probe_r_len, r.probe_r_ang);
    out << buf;
  }
}

// Minibatch source.  DNF mode draws a random subset of classes and a fixed
// number of samples from each (with replacement only when the class is
// smaller than requested), so every batch carries within-class pairs.  NF
// mode is a plain shuffled slice iterator.
class BatchSampler {
 public:
  BatchSampler(const VectorStore &data, const DnfModel &model,
               const TrainConfig &config, Rng *rng)
      : data_(data), rng_(rng) {
    if (data.Size() == 0) throw UsageError("training needs a nonempty dataset");
    per_class_mode_ = !model.nf_mode;
    if (per_class_mode_) {
      class_rows_.resize(model.ClassCount());
      for (long i = 0; i < data.Size(); i++) {
        class_rows_[model.ClassRow(data.labels[i])].push_back(i);
      }
      for (long k = 0; k < model.ClassCount(); k++) {
        if (class_rows_[k].empty())
          throw UsageError("class '" + model.classes[k] +
                           "' has zero samples in the training set");
      }
      samples_per_class_ = std::max<long>(1, config.samples_per_class);
      classes_per_batch_ = std::max<long>(
          1, config.batch_size / samples_per_class_);
      classes_per_batch_ = std::min(classes_per_batch_, model.ClassCount());
      class_order_.resize(model.ClassCount());
      for (long k = 0; k < model.ClassCount(); k++) class_order_[k] = k;
      class_cursor_ = class_order_.size();  // force an initial shuffle
    } else {
      batch_size_ = std::min<long>(std::max<long>(1, config.batch_size),
                                   data.Size());
      order_.resize(data.Size());
      for (long i = 0; i < data.Size(); i++) order_[i] = i;
      cursor_ = order_.size();  // force an initial shuffle
    }
    row_of_.resize(data.Size());
    for (long i = 0; i < data.Size(); i++)
      row_of_[i] = model.ClassRow(data.labels[i]);
  }

  long BatchSize() const {
    return per_class_mode_ ? classes_per_batch_ * samples_per_class_
                           : batch_size_;
  }

  long StepsPerEpoch() const {
    return std::max<long>(1, data_.Size() / BatchSize());
  }

  Batch Next() {
    std::vector<long> picks;
    if (per_class_mode_) {
      picks.reserve(classes_per_batch_ * samples_per_class_);
      for (long c = 0; c < classes_per_batch_; c++) {
        if (class_cursor_ >= class_order_.size()) {
          rng_->Shuffle(class_order_);
          class_cursor_ = 0;
        }
        const long k = class_order_[class_cursor_++];
        const std::vector<long> &rows = class_rows_[k];
        const long n = static_cast<long>(rows.size());
        if (n >= samples_per_class_) {
          // Partial Fisher-Yates: the first samples_per_class entries of a
          // fresh permutation, without shuffling the whole class.
          std::vector<long> idx(rows);
          for (long i = 0; i < samples_per_class_; i++) {
            long j = i + rng_->Index(n - i);
            std::swap(idx[i], idx[j]);
            picks.push_back(idx[i]);
          }
        } else {
          for (long i = 0; i < samples_per_class_; i++)
            picks.push_back(rows[rng_->Index(n)]);
        }
      }
    } else {
      picks.reserve(batch_size_);
      for (long i = 0; i < batch_size_; i++) {
        if (cursor_ >= order_.size()) {
          rng_->Shuffle(order_);
          cursor_ = 0;
        }
        picks.push_back(order_[cursor_++]);
      }
    }
    Batch b;
    b.x = data_.ToTensor(picks);
    b.records = picks;
    b.rows.resize(picks.size());
    for (size_t i = 0; i < picks.size(); i++) b.rows[i] = row_of_[picks[i]];
    return b;
  }

 private:
  const VectorStore &data_;
  Rng *rng_;
  bool per_class_mode_ = false;
  long samples_per_class_ = 0;
  long classes_per_batch_ = 0;
  long batch_size_ = 0;
  std::vector<std::vector<long>> class_rows_;
  std::vector<long> class_order_;
  size_t class_cursor_ = 0;
  std::vector<long> order_;
  size_t cursor_ = 0;
  std::vector<long> row_of_;
};

// Class means start at the per-class average of the latent codes under the
// freshly initialized (identity) flow, which keeps the first ML prior terms
// on the scale of the within-class scatter instead of the raw norms.
inline void InitializeMeans(DnfModel *model, const VectorStore &data) {
  if (!model->MeansTrainable() || model->means_initialized) return;
  FlowValues fv = NormalizeValues(model->flow, data.ToTensor());
  Tensor sums = Tensor::Zeros(model->ClassCount(), model->flow.dim);
  std::vector<long> counts(model->ClassCount(), 0);
  for (long i = 0; i < data.Size(); i++) {
    const long k = model->ClassRow(data.labels[i]);
    counts[k]++;
    for (long j = 0; j < model->flow.dim; j++)
      sums.at(k, j) += fv.out.at(i, j);
  }
  for (long k = 0; k < model->ClassCount(); k++) {
    if (counts[k] == 0)
      throw UsageError("class '" + model->classes[k] +
                       "' has zero samples in the training set");
    for (long j = 0; j < model->flow.dim; j++)
      model->means.at(k, j) = sums.at(k, j) / counts[k];
  }
  model->means_initialized = true;
}

// Raw probe Gaussianality: mean per-sample length metric and mean per-pair
// angle metric of the residuals z - mu_y.  Zero-norm residuals are skipped
// in the angle part the same way the diagnostics module skips them.
struct ProbeMetrics {
  double r_len = 0.0;
  double r_ang = 0.0;
};

inline ProbeMetrics ComputeProbeMetrics(const DnfModel &model,
                                        const Batch &probe, double eps,
                                        double xi) {
  FlowValues fv = NormalizeValues(model.flow, probe.x);
  const long n = probe.Size();
  const long d = model.flow.dim;
  const double target = std::sqrt(eps * static_cast<double>(d));

  std::vector<std::vector<double>> r(n, std::vector<double>(d, 0.0));
  std::vector<double> norms(n, 0.0);
  double len_sum = 0.0;
  for (long i = 0; i < n; i++) {
    double ss = 0.0;
    for (long j = 0; j < d; j++) {
      r[i][j] = fv.out.at(i, j) - model.means.at(probe.rows[i], j);
      ss += r[i][j] * r[i][j];
    }
    norms[i] = std::sqrt(ss);
    const double dev = norms[i] - target;
    len_sum += -(dev * dev);
  }

  double ang_sum = 0.0;
  long pairs = 0;
  for (long i = 0; i < n; i++) {
    if (norms[i] < 1e-12) continue;
    for (long j = i + 1; j < n; j++) {
      if (norms[j] < 1e-12) continue;
      double dot = 0.0;
      for (long c = 0; c < d; c++) dot += r[i][c] * r[j][c];
      const double cos = dot / (norms[i] * norms[j]);
      ang_sum += -(cos * cos) / (2.0 * xi);
      pairs++;
    }
  }

  ProbeMetrics out;
  out.r_len = len_sum / static_cast<double>(n);
  out.r_ang = pairs > 0 ? ang_sum / static_cast<double>(pairs) : 0.0;
  return out;
}

using CheckpointCallback = std::function<void(long, const DnfModel &)>;

// Adam ascent on the composed objective (implemented as descent on its
// negation).  Halts with the divergence flag when the batch objective
// magnitude crosses the threshold or any step produces non-finite values.
inline TrainLog Train(DnfModel *model, const VectorStore &data,
                      const ObjectiveSpec &spec, const TrainConfig &config,
                      const CheckpointCallback &on_checkpoint = {}) {
  if (data.Size() == 0) throw UsageError("training needs a nonempty dataset");
  if (data.dim != model->flow.dim)
    throw UsageError("training data dimension does not match the model");
  if (IncludesMg(spec.within)) {
    const bool pairs_possible =
        model->nf_mode ? config.batch_size >= 2 : config.samples_per_class >= 2;
    if (!pairs_possible)
      throw UsageError(
          "within-class MG needs batches that can contain same-class pairs");
  }

  InitializeMeans(model, data);

  Rng rng(config.seed);
  BatchSampler sampler(data, *model, config, &rng);

  // Fixed probe subset, drawn once from an independent stream so the batch
  // sequence does not depend on the probe size.
  Rng probe_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<long> all(data.Size());
  for (long i = 0; i < data.Size(); i++) all[i] = i;
  probe_rng.Shuffle(all);
  const long probe_n =
      std::min<long>(std::max<long>(2, config.probe_size), data.Size());
  std::vector<long> probe_idx(all.begin(), all.begin() + probe_n);
  Batch probe;
  probe.x = data.ToTensor(probe_idx);
  probe.records = probe_idx;
  probe.rows.resize(probe_idx.size());
  for (size_t i = 0; i < probe_idx.size(); i++)
    probe.rows[i] = model->ClassRow(data.labels[probe_idx[i]]);

  const double xi = spec.ResolvedXi(model->flow.dim);
  const auto t_start = std::chrono::steady_clock::now();
  const auto wall = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t_start)
        .count();
  };

  TrainLog log;
  const auto probe_record = [&](long step, bool diverged) {
    TrainRecord rec;
    rec.step = step;
    rec.diverged = diverged;
    rec.wall_seconds = wall();
    try {
      ObjectiveValues v = EvalObjective(spec, *model, probe);
      rec.objective = v.total;
      rec.prior_term = v.prior;
      rec.entropy_term = v.entropy;
      rec.len_term = v.len;
      rec.ang_term = v.ang;
      ProbeMetrics pm = ComputeProbeMetrics(*model, probe, spec.epsilon, xi);
      rec.probe_r_len = pm.r_len;
      rec.probe_r_ang = pm.r_ang;
    } catch (const FlowInstabilityError &) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rec.objective = rec.prior_term = rec.entropy_term = nan;
      rec.len_term = rec.ang_term = nan;
      rec.probe_r_len = rec.probe_r_ang = nan;
      rec.diverged = true;
    }
    log.records.push_back(rec);
  };

  const long total_steps =
      config.max_steps > 0 ? config.max_steps
                           : config.epochs * sampler.StepsPerEpoch();

  AdamState adam;
  adam.config.lr = config.learning_rate;
  adam.config.beta1 = config.beta1;
  adam.config.beta2 = config.beta2;

  probe_record(0, false);

  std::vector<Tensor *> params = model->Parameters();
  for (long step = 1; step <= total_steps; step++) {
    Batch batch = sampler.Next();
    double value = std::numeric_limits<double>::quiet_NaN();
    bool tripped = false;
    try {
      Tape tape;
      DnfBinding binding = BindDnf(&tape, *model);
      ObjectiveTerms terms = Compose(&tape, spec, *model, binding, batch);
      value = tape.Val(terms.total).scalar_value();
      if (!std::isfinite(value) ||
          std::fabs(value) > config.divergence_threshold) {
        tripped = true;
      } else {
        tape.Backward(tape.Scale(terms.total, -1.0));
        std::vector<Tensor> grad_store;
        grad_store.reserve(params.size());
        for (int leaf : binding.flow.leaves)
          grad_store.push_back(tape.Grad(leaf));
        if (model->MeansTrainable())
          grad_store.push_back(tape.Grad(binding.means));
        std::vector<const Tensor *> grads;
        grads.reserve(grad_store.size());
        for (const Tensor &g : grad_store) grads.push_back(&g);
        AdamStep(params, grads, &adam);
      }
    } catch (const FlowInstabilityError &) {
      tripped = true;
    } catch (const TrainingError &) {
      tripped = true;
    }

    if (tripped) {
      log.diverged = true;
      log.final_step = step;
      log.divergence_value = value;
      probe_record(step, true);
      return log;
    }
    if ((config.log_interval > 0 && step % config.log_interval == 0) ||
        step == total_steps) {
      probe_record(step, false);
    }
    if (on_checkpoint && config.checkpoint_interval > 0 &&
        step % config.checkpoint_interval == 0) {
      on_checkpoint(step, *model);
    }
  }
  log.final_step = total_steps;
  return log;
}

}  // namespace dnf

#endif  // DNF_TRAINING_HPP_
