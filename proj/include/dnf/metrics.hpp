// dnf/metrics.hpp

// Copyright 2026  dnfkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnf/data.hpp"
#include "dnf/errors.hpp"
#include "dnf/objectives.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Per-class Gaussianity of length and angle, residuals centered on the class
// sample mean.  Per-sample length value: -(||r|| - sqrt(eps*d))^2.  Per-pair
// angle value: -cos^2(r_i, r_j) / (2 xi).  Variances are population (1/N).
struct ClassGauss {
  std::string label;
  long count = 0;
  double length_mean = 0.0, length_var = 0.0;
  double angle_mean = 0.0, angle_var = 0.0;
  long angle_pairs = 0;
};

struct GaussReport {
  long dim = 0;
  double epsilon = 1.0;
  double xi = 0.0;
  std::vector<ClassGauss> classes;
  long skipped_classes = 0;    // fewer than 2 samples
  long degenerate_pairs = 0;   // zero-norm residual pairs excluded
  long total_samples = 0;
  long total_pairs = 0;
  double pooled_length_mean = 0.0, pooled_length_var = 0.0;
  double pooled_angle_mean = 0.0, pooled_angle_var = 0.0;
};

namespace detail {

struct MeanVar {
  double mean = 0.0, var = 0.0;
};

inline MeanVar PopulationMeanVar(const std::vector<double> &xs) {
  MeanVar mv;
  if (xs.empty()) return mv;
  for (double x : xs) mv.mean += x;
  mv.mean /= static_cast<double>(xs.size());
  for (double x : xs) mv.var += (x - mv.mean) * (x - mv.mean);
  mv.var /= static_cast<double>(xs.size());
  return mv;
}

}  // namespace detail

// Classes larger than this get a deterministic subsample of pairs for the
// angle statistics instead of the full O(n^2) enumeration.
constexpr long kGaussReportPairCap = 200000;

inline GaussReport ComputeGaussReport(const Tensor &x,
                                      const std::vector<std::string> &labels,
                                      double epsilon = 1.0, double xi = 0.0) {
  if (static_cast<long>(labels.size()) != x.rows)
    throw UsageError("gauss report: one label per row required");
  if (x.rows < 1) throw UsageError("gauss report: empty input");
  GaussReport rep;
  rep.dim = x.cols;
  rep.epsilon = epsilon;
  rep.xi = xi > 0.0 ? xi : 1.0 / static_cast<double>(x.cols);
  double target = std::sqrt(epsilon * static_cast<double>(x.cols));

  std::map<std::string, std::vector<long>> by_label;
  for (long i = 0; i < x.rows; i++) by_label[labels[i]].push_back(i);

  std::vector<double> all_len, all_ang;
  for (const auto &[label, idx] : by_label) {
    long n = static_cast<long>(idx.size());
    if (n < 2) {
      rep.skipped_classes++;
      continue;
    }
    // center on the class sample mean
    std::vector<double> mean(x.cols, 0.0);
    for (long i : idx)
      for (long j = 0; j < x.cols; j++) mean[j] += x.at(i, j);
    for (double &m : mean) m /= static_cast<double>(n);
    std::vector<std::vector<double>> r(n, std::vector<double>(x.cols));
    std::vector<double> norms(n);
    for (long a = 0; a < n; a++) {
      double ss = 0.0;
      for (long j = 0; j < x.cols; j++) {
        r[a][j] = x.at(idx[a], j) - mean[j];
        ss += r[a][j] * r[a][j];
      }
      norms[a] = std::sqrt(ss);
    }

    std::vector<double> len_vals(n);
    for (long a = 0; a < n; a++) {
      double dv = norms[a] - target;
      len_vals[a] = -dv * dv;
    }

    std::vector<double> ang_vals;
    long degenerate = 0;
    auto pair_value = [&](long a, long b, bool *ok) {
      if (norms[a] < 1e-10 || norms[b] < 1e-10) {
        *ok = false;
        return 0.0;
      }
      *ok = true;
      double dot = 0.0;
      for (long j = 0; j < x.cols; j++) dot += r[a][j] * r[b][j];
      double c = dot / (norms[a] * norms[b]);
      return -c * c / (2.0 * rep.xi);
    };
    long full_pairs = n * (n - 1) / 2;
    if (full_pairs <= kGaussReportPairCap) {
      ang_vals.reserve(full_pairs);
      for (long a = 0; a < n; a++)
        for (long b = a + 1; b < n; b++) {
          bool ok;
          double v = pair_value(a, b, &ok);
          if (ok)
            ang_vals.push_back(v);
          else
            degenerate++;
        }
    } else {
      // Deterministic LCG pair sample; a function of the inputs only.
      uint64_t state = 0x9e3779b97f4a7c15ull ^ (static_cast<uint64_t>(n) << 1);
      auto next = [&state]() {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        return state >> 16;
      };
      ang_vals.reserve(kGaussReportPairCap);
      while (static_cast<long>(ang_vals.size()) < kGaussReportPairCap) {
        long a = static_cast<long>(next() % static_cast<uint64_t>(n));
        long b = static_cast<long>(next() % static_cast<uint64_t>(n));
        if (a == b) continue;
        bool ok;
        double v = pair_value(a, b, &ok);
        if (ok)
          ang_vals.push_back(v);
        else
          degenerate++;
      }
    }

    ClassGauss cg;
    cg.label = label;
    cg.count = n;
    detail::MeanVar lm = detail::PopulationMeanVar(len_vals);
    cg.length_mean = lm.mean;
    cg.length_var = lm.var;
    detail::MeanVar am = detail::PopulationMeanVar(ang_vals);
    cg.angle_mean = am.mean;
    cg.angle_var = am.var;
    cg.angle_pairs = static_cast<long>(ang_vals.size());
    rep.classes.push_back(cg);
    rep.degenerate_pairs += degenerate;
    rep.total_samples += n;
    rep.total_pairs += cg.angle_pairs;
    all_len.insert(all_len.end(), len_vals.begin(), len_vals.end());
    all_ang.insert(all_ang.end(), ang_vals.begin(), ang_vals.end());
  }
  if (rep.classes.empty())
    throw UsageError("gauss report: no class has >= 2 samples");
  detail::MeanVar pl = detail::PopulationMeanVar(all_len);
  rep.pooled_length_mean = pl.mean;
  rep.pooled_length_var = pl.var;
  detail::MeanVar pa = detail::PopulationMeanVar(all_ang);
  rep.pooled_angle_mean = pa.mean;
  rep.pooled_angle_var = pa.var;
  return rep;
}

inline GaussReport ComputeGaussReport(const VectorStore &store,
                                      double epsilon = 1.0, double xi = 0.0) {
  return ComputeGaussReport(store.ToTensor(), store.labels, epsilon, xi);
}

// Between-class / within-class variation decomposition.
struct VariationReport {
  long dim = 0;
  // Population variance of the class means, per dimension, sorted descending.
  std::vector<double> between_sorted;
  double between_total = 0.0;
  // Per class: mean over dimensions of the per-dimension population variance.
  std::vector<std::pair<std::string, double>> within_per_class;
  double within_mean = 0.0;
};

inline VariationReport ComputeVariationReport(
    const Tensor &x, const std::vector<std::string> &labels) {
  if (static_cast<long>(labels.size()) != x.rows)
    throw UsageError("variation report: one label per row required");
  if (x.rows < 1) throw UsageError("variation report: empty input");
  VariationReport rep;
  rep.dim = x.cols;

  std::map<std::string, std::vector<long>> by_label;
  for (long i = 0; i < x.rows; i++) by_label[labels[i]].push_back(i);
  if (by_label.size() < 2)
    throw UsageError("variation report: needs at least two classes");

  long k = static_cast<long>(by_label.size());
  Tensor class_means(k, x.cols);
  long row = 0;
  for (const auto &[label, idx] : by_label) {
    std::vector<double> within(x.cols, 0.0);
    for (long j = 0; j < x.cols; j++) {
      double m = 0.0;
      for (long i : idx) m += x.at(i, j);
      m /= static_cast<double>(idx.size());
      class_means.at(row, j) = m;
      double var = 0.0;
      for (long i : idx) {
        double dv = x.at(i, j) - m;
        var += dv * dv;
      }
      within[j] = var / static_cast<double>(idx.size());
    }
    double mean_var = 0.0;
    for (double w : within) mean_var += w;
    mean_var /= static_cast<double>(x.cols);
    rep.within_per_class.emplace_back(label, mean_var);
    row++;
  }

  rep.between_sorted.resize(x.cols);
  for (long j = 0; j < x.cols; j++) {
    double m = 0.0;
    for (long c = 0; c < k; c++) m += class_means.at(c, j);
    m /= static_cast<double>(k);
    double var = 0.0;
    for (long c = 0; c < k; c++) {
      double dv = class_means.at(c, j) - m;
      var += dv * dv;
    }
    rep.between_sorted[j] = var / static_cast<double>(k);
  }
  std::sort(rep.between_sorted.begin(), rep.between_sorted.end(),
            std::greater<double>());
  for (double v : rep.between_sorted) rep.between_total += v;
  for (const auto &[label, w] : rep.within_per_class) rep.within_mean += w;
  rep.within_mean /= static_cast<double>(rep.within_per_class.size());
  return rep;
}

inline VariationReport ComputeVariationReport(const VectorStore &store) {
  return ComputeVariationReport(store.ToTensor(), store.labels);
}

// ---- exports ----

inline void WriteGaussCsv(const GaussReport &rep, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "label,count,length_mean,length_var,angle_mean,angle_var,angle_pairs\n";
  char buf[256];
  auto row = [&](const std::string &label, long count, double lm, double lv,
                 double am, double av, long pairs) {
    std::snprintf(buf, sizeof buf, "%s,%ld,%.17g,%.17g,%.17g,%.17g,%ld\n",
                  label.c_str(), count, lm, lv, am, av, pairs);
    out << buf;
  };
  for (const ClassGauss &c : rep.classes)
    row(c.label, c.count, c.length_mean, c.length_var, c.angle_mean,
        c.angle_var, c.angle_pairs);
  row("__pooled__", rep.total_samples, rep.pooled_length_mean,
      rep.pooled_length_var, rep.pooled_angle_mean, rep.pooled_angle_var,
      rep.total_pairs);
}

inline void WriteVariationCsv(const VariationReport &rep,
                              const std::string &between_path,
                              const std::string &within_path) {
  std::ofstream bt(between_path);
  if (!bt)
    throw DataError("cannot open '" + between_path + "' for writing");
  bt << "rank,variance\n";
  char buf[128];
  for (size_t i = 0; i < rep.between_sorted.size(); i++) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, rep.between_sorted[i]);
    bt << buf;
  }
  std::ofstream wt(within_path);
  if (!wt) throw DataError("cannot open '" + within_path + "' for writing");
  wt << "label,within_variation\n";
  for (const auto &[label, w] : rep.within_per_class) {
    std::snprintf(buf, sizeof buf, "%s,%.17g\n", label.c_str(), w);
    wt << buf;
  }
}

inline nlohmann::json GaussSummaryJson(const GaussReport &rep) {
  nlohmann::json j;
  j["dim"] = rep.dim;
  j["epsilon"] = rep.epsilon;
  j["xi"] = rep.xi;
  j["variance_convention"] = "population";
  j["classes"] = rep.classes.size();
  j["skipped_classes"] = rep.skipped_classes;
  j["degenerate_pairs"] = rep.degenerate_pairs;
  j["total_samples"] = rep.total_samples;
  j["total_pairs"] = rep.total_pairs;
  j["pooled_length_mean"] = rep.pooled_length_mean;
  j["pooled_length_var"] = rep.pooled_length_var;
  j["pooled_angle_mean"] = rep.pooled_angle_mean;
  j["pooled_angle_var"] = rep.pooled_angle_var;
  return j;
}

}  // namespace dnf
