// dnf/objectives.hpp

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

#include <cmath>
#include <string>
#include <vector>

#include "dnf/autodiff.hpp"
#include "dnf/errors.hpp"
#include "dnf/flow.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

enum class Criterion { kNone, kMl, kMg, kMlMg };

inline bool IncludesMl(Criterion c) {
  return c == Criterion::kMl || c == Criterion::kMlMg;
}
inline bool IncludesMg(Criterion c) {
  return c == Criterion::kMg || c == Criterion::kMlMg;
}

// Which criteria apply between classes and within classes, plus the shared
// hinge/weight constants.  xi <= 0 means "resolve to 1/d at bind time".
struct ObjectiveSpec {
  Criterion between = Criterion::kNone;
  Criterion within = Criterion::kMl;
  double alpha = 10.0;
  double beta_within = 10.0;
  double beta_between = 500.0;
  double delta = 0.03;
  double delta_prime = 0.002;
  double epsilon = 1.0;
  double xi = 0.0;
  bool include_entropy_with_mg = true;

  double ResolvedXi(long dim) const {
    return xi > 0.0 ? xi : 1.0 / static_cast<double>(dim);
  }
};

// Reference statistics of ||v|| and pairwise angles for v ~ N(0, eps*I_d).
struct ChiStats {
  // Exact chi mean, sqrt(2) Gamma((d+1)/2) / Gamma(d/2), unit scale.
  static double Mean(long d) {
    return std::sqrt(2.0) *
           std::exp(std::lgamma((d + 1) / 2.0) - std::lgamma(d / 2.0));
  }
  static double Var(long d) {
    double m = Mean(d);
    return static_cast<double>(d) - m * m;
  }
  // High-dimensional Gaussian approximation of the length distribution.
  static double ApproxMean(long d, double eps = 1.0) {
    return std::sqrt(eps * static_cast<double>(d));
  }
  static double ApproxVar(double eps = 1.0) { return 0.5 * eps; }
  // E[cos^2] of two independent standard Gaussian directions.
  static double MeanCos2(long d) { return 1.0 / static_cast<double>(d); }
};

// One training minibatch: data plus the class row and source record of each
// sample.  Record indices let the pair terms drop sample-with-itself pairs
// that appear when a small class is drawn with replacement.
struct Batch {
  Tensor x;
  std::vector<long> rows;
  std::vector<long> records;

  long Size() const { return x.rows; }
};

namespace detail {

// Row norms with a tiny floor inside the sqrt: a residual that is exactly
// zero (single-sample class right after mean init) would otherwise put an
// infinite sqrt-gradient on the tape.
inline int TapedRowNorms(Tape *t, int v) {
  return t->Sqrt(t->Shift(t->SumRows(t->Square(v)), 1e-12));
}

// Squared-cosine Gram matrix, (N, N).
inline int TapedCos2(Tape *t, int v) {
  int gram = t->MatMul(v, v, /*transpose_b=*/true);
  int norms = TapedRowNorms(t, v);
  int outer = t->MatMul(norms, norms, /*transpose_b=*/true);
  return t->Square(t->Mul(gram, t->Recip(outer)));
}

inline Tensor StrictUpperMask(long n) {
  Tensor m(n, n);
  for (long i = 0; i < n; i++)
    for (long j = i + 1; j < n; j++) m.at(i, j) = 1.0;
  return m;
}

}  // namespace detail

// R_len = -sum_i (||v_i|| - sqrt(eps*d))^2
inline int LengthMetric(Tape *t, int v, double eps) {
  const Tensor &val = t->Val(v);
  double target = ChiStats::ApproxMean(val.cols, eps);
  int norms = detail::TapedRowNorms(t, v);
  return t->Scale(t->Sum(t->Square(t->Shift(norms, -target))), -1.0);
}

inline double LengthMetricValue(const Tensor &v, double eps = 1.0) {
  Tape t;
  return t.Val(LengthMetric(&t, t.Constant(v), eps)).scalar_value();
}

// R_ang = -sum_{i<j} cos^2(v_i, v_j) / (2 xi)
inline int AngleMetric(Tape *t, int v, double xi) {
  const Tensor &val = t->Val(v);
  if (val.rows < 2)
    throw UsageError("angle metric needs at least two vectors");
  if (xi <= 0.0) throw UsageError("angle metric needs xi > 0");
  for (long i = 0; i < val.rows; i++) {
    double ss = 0.0;
    for (long j = 0; j < val.cols; j++) ss += val.at(i, j) * val.at(i, j);
    if (ss < 1e-24)
      throw DegenerateInputError("angle metric: zero-norm input vector");
  }
  int cos2 = detail::TapedCos2(t, v);
  int upper = t->Constant(detail::StrictUpperMask(val.rows));
  return t->Scale(t->Sum(t->Mul(cos2, upper)), -1.0 / (2.0 * xi));
}

inline double AngleMetricValue(const Tensor &v, double xi) {
  Tape t;
  return t.Val(AngleMetric(&t, t.Constant(v), xi)).scalar_value();
}

// Model tensors bound to a tape.  Means enter as a Leaf when trainable and
// as a Constant in NF mode.
struct DnfBinding {
  FlowBinding flow;
  int means;
};

inline DnfBinding BindDnf(Tape *t, const DnfModel &m) {
  DnfBinding b;
  b.flow = BindFlow(t, m.flow);
  b.means = m.MeansTrainable() ? t->Leaf(m.means) : t->Constant(m.means);
  return b;
}

// Scalar nodes of one criterion's contribution.  Unused parts are -1.
struct TermPair {
  int first = -1;
  int second = -1;
};

// R^ML_WC: sum_i [ ln N(z_i; mu_{y_i}, I) + logdet_i ].
// Returns {prior sum, entropy sum} given an existing normalize pass.
inline TermPair MlWithin(Tape *t, const DnfModel &model, const DnfBinding &b,
                         const NormalizeResult &nr,
                         const std::vector<long> &rows) {
  int prior = t->Sum(model.ClassLogPrior(t, nr.z, rows, b.means));
  int entropy = t->Sum(nr.logdet);
  return TermPair{prior, entropy};
}

// R^ML_BC: sum_y [ ln N(mu_y; 0, I) + ln |det d f(mu_y) / d mu_y|^{-1} ].
// The Jacobian term is the normalize-direction logdet at f(mu_y), which the
// taped generate pass yields directly; gradients reach both the flow weights
// and the means.
inline TermPair MlBetween(Tape *t, const DnfModel &model,
                          const DnfBinding &b) {
  GenerateResult gr = Generate(t, model.flow, b.flow, b.means);
  double c = -0.5 * model.flow.dim * std::log(2.0 * 3.14159265358979323846);
  int sq = t->Scale(t->SumRows(t->Square(b.means)), -0.5);
  int prior = t->Sum(t->Shift(sq, c));
  int entropy = t->Sum(gr.logdet);
  return TermPair{prior, entropy};
}

// R^MG_BC = -alpha * max(0, Lbar - delta) - beta_bc * max(0, Abar - delta')
// with Lbar the mean squared length deviation of the class means and Abar
// the mean squared cosine over unordered mean pairs.
inline TermPair MgBetween(Tape *t, const ObjectiveSpec &spec,
                          const DnfModel &model, const DnfBinding &b) {
  long k = model.ClassCount();
  long d = model.flow.dim;
  double target = ChiStats::ApproxMean(d, spec.epsilon);
  int norms = detail::TapedRowNorms(t, b.means);
  int lbar = t->Mean(t->Square(t->Shift(norms, -target)));
  int len_term = t->Scale(t->Relu(t->Shift(lbar, -spec.delta)), -spec.alpha);
  int ang_term;
  if (k >= 2) {
    int cos2 = detail::TapedCos2(t, b.means);
    int upper = t->Constant(detail::StrictUpperMask(k));
    double pairs = 0.5 * static_cast<double>(k) * static_cast<double>(k - 1);
    int abar = t->Scale(t->Sum(t->Mul(cos2, upper)), 1.0 / pairs);
    ang_term = t->Scale(t->Relu(t->Shift(abar, -spec.delta_prime)),
                        -spec.beta_between);
  } else {
    ang_term = t->Constant(Tensor::Scalar(0.0));
  }
  return TermPair{len_term, ang_term};
}

// R^MG_WC over residuals z_i - mu_{y_i}; angle pairs are same-class pairs of
// distinct records only.
inline TermPair MgWithin(Tape *t, const ObjectiveSpec &spec,
                         const DnfModel &model, const DnfBinding &b,
                         const NormalizeResult &nr, const Batch &batch) {
  long n = batch.Size();
  long d = model.flow.dim;
  Tensor select(n, model.ClassCount());
  for (long i = 0; i < n; i++) select.at(i, batch.rows[i]) = 1.0;
  int mu = t->MatMul(t->Constant(select), b.means);
  int r = t->Sub(nr.z, mu);

  double target = ChiStats::ApproxMean(d, spec.epsilon);
  int norms = detail::TapedRowNorms(t, r);
  int lbar = t->Mean(t->Square(t->Shift(norms, -target)));
  int len_term = t->Scale(t->Relu(t->Shift(lbar, -spec.delta)), -spec.alpha);

  Tensor mask(n, n);
  long pair_count = 0;
  for (long i = 0; i < n; i++)
    for (long j = i + 1; j < n; j++)
      if (batch.rows[i] == batch.rows[j] &&
          batch.records[i] != batch.records[j]) {
        mask.at(i, j) = 1.0;
        pair_count++;
      }
  int ang_term;
  if (pair_count > 0) {
    int cos2 = detail::TapedCos2(t, r);
    int abar = t->Scale(t->Sum(t->Mul(cos2, t->Constant(mask))),
                        1.0 / static_cast<double>(pair_count));
    ang_term = t->Scale(t->Relu(t->Shift(abar, -spec.delta_prime)),
                        -spec.beta_within);
  } else {
    ang_term = t->Constant(Tensor::Scalar(0.0));
  }
  return TermPair{len_term, ang_term};
}

// Scalar nodes of the composed objective; total is built as the exact sum of
// the four buckets.
struct ObjectiveTerms {
  int total;
  int prior;
  int entropy;
  int len;
  int ang;
  NormalizeResult norm;  // the shared normalize pass over the batch
};

// Assembles the configured criteria over one batch.  The entropy bucket is
// the ML logdet when an ML criterion is present; a pure-MG within-criterion
// adds it explicitly when include_entropy_with_mg is set (adding it again
// alongside ml_within would double-count the same term).
inline ObjectiveTerms Compose(Tape *t, const ObjectiveSpec &spec,
                              const DnfModel &model, const DnfBinding &b,
                              const Batch &batch) {
  if (spec.within == Criterion::kNone)
    throw UsageError("objective: a within-class criterion is required");
  if (spec.between == Criterion::kMlMg)
    throw UsageError("objective: between-class criterion is None, ML or MG");
  if (spec.epsilon <= 0.0)
    throw UsageError("objective: epsilon must be positive");
  if (spec.alpha < 0.0 || spec.beta_within < 0.0 || spec.beta_between < 0.0)
    throw UsageError("objective: hinge weights must be nonnegative");
  if (spec.delta < 0.0 || spec.delta_prime < 0.0)
    throw UsageError("objective: hinge tolerances must be nonnegative");
  if (batch.Size() < 1) throw UsageError("objective: empty batch");
  if (static_cast<long>(batch.rows.size()) != batch.Size() ||
      static_cast<long>(batch.records.size()) != batch.Size())
    throw UsageError("objective: batch rows/records sizes disagree");

  int x = t->Constant(batch.x);
  NormalizeResult nr = Normalize(t, model.flow, b.flow, x);

  int zero = t->Constant(Tensor::Scalar(0.0));
  int prior = zero, entropy = zero, len = zero, ang = zero;

  if (IncludesMl(spec.within)) {
    TermPair ml = MlWithin(t, model, b, nr, batch.rows);
    prior = t->Add(prior, ml.first);
    entropy = t->Add(entropy, ml.second);
  }
  if (IncludesMg(spec.within)) {
    TermPair mg = MgWithin(t, spec, model, b, nr, batch);
    len = t->Add(len, mg.first);
    ang = t->Add(ang, mg.second);
    // The hinge statistics above are batch means with O(1) weights, so the
    // companion entropy term is a per-sample mean as well; a batch sum would
    // outweigh the hinge gradients by the batch size and the optimizer would
    // maximize volume instead of closing the hinges.
    if (!IncludesMl(spec.within) && spec.include_entropy_with_mg)
      entropy = t->Add(entropy, t->Mean(nr.logdet));
  }
  if (spec.between == Criterion::kMl) {
    TermPair ml = MlBetween(t, model, b);
    prior = t->Add(prior, ml.first);
    entropy = t->Add(entropy, ml.second);
  } else if (spec.between == Criterion::kMg) {
    TermPair mg = MgBetween(t, spec, model, b);
    len = t->Add(len, mg.first);
    ang = t->Add(ang, mg.second);
  }

  ObjectiveTerms out;
  out.prior = prior;
  out.entropy = entropy;
  out.len = len;
  out.ang = ang;
  out.total = t->Add(t->Add(t->Add(prior, entropy), len), ang);
  out.norm = nr;
  return out;
}

// Value-only evaluation (probe records, divergence checks).
struct ObjectiveValues {
  double total, prior, entropy, len, ang;
};

inline ObjectiveValues EvalObjective(const ObjectiveSpec &spec,
                                     const DnfModel &model,
                                     const Batch &batch) {
  Tape t;
  DnfBinding b = BindDnf(&t, model);
  ObjectiveTerms terms = Compose(&t, spec, model, b, batch);
  return ObjectiveValues{t.Val(terms.total).scalar_value(),
                         t.Val(terms.prior).scalar_value(),
                         t.Val(terms.entropy).scalar_value(),
                         t.Val(terms.len).scalar_value(),
                         t.Val(terms.ang).scalar_value()};
}

}  // namespace dnf
