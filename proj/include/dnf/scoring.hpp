// dnf/scoring.hpp

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

#ifndef DNF_SCORING_HPP_
#define DNF_SCORING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <json.hpp>

#include "dnf/data.hpp"
#include "dnf/errors.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Scales every row to unit Euclidean norm.
inline Tensor LengthNorm(const Tensor& x) {
  Tensor out = x;
  for (long i = 0; i < x.rows; ++i) {
    double ss = 0.0;
    for (long j = 0; j < x.cols; ++j) ss += x.at(i, j) * x.at(i, j);
    if (ss < 1e-24) {
      throw DegenerateInputError("length_norm: zero vector at row " +
                                 std::to_string(i));
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (long j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) * inv;
  }
  return out;
}

inline double CosineScore(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw UsageError("cosine_score: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    dot += a[j] * b[j];
    na += a[j] * a[j];
    nb += b[j] * b[j];
  }
  if (na < 1e-24 || nb < 1e-24) {
    throw DegenerateInputError("cosine_score: zero vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Two-covariance PLDA: x = m + u + e with u ~ N(0, B) between classes and
// e ~ N(0, W) within a class.  The whitening transform T simultaneously
// diagonalizes both covariances, T W T^T = I and T B T^T = diag(psi), so
// scoring reduces to d independent one-dimensional problems.
struct PldaModel {
  long dim = 0;
  std::vector<double> mean;                    // m
  std::vector<std::vector<double>> between;    // B
  std::vector<std::vector<double>> within;     // W
  std::vector<std::vector<double>> transform;  // T, row-major
  std::vector<double> psi;                     // diag(T B T^T)

  std::vector<double> Project(const std::vector<double>& x) const {
    if ((long)x.size() != dim) {
      throw UsageError("plda: dimension mismatch");
    }
    std::vector<double> v(dim, 0.0);
    for (long i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (long j = 0; j < dim; ++j) acc += transform[i][j] * (x[j] - mean[j]);
      v[i] = acc;
    }
    return v;
  }
};

struct PldaTrainOptions {
  long max_iters = 20;
  double tol = 1e-6;  // stop when the log-likelihood gain drops below this
};

namespace detail {

inline std::vector<std::vector<double>> FromEigen(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> a(m.rows(),
                                     std::vector<double>(m.cols(), 0.0));
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) a[i][j] = m(i, j);
  return a;
}

// Computes T with T W T^T = I and T B T^T = diag(psi):
// W = L L^T, then eigendecompose L^{-1} B L^{-T} = Q diag(psi) Q^T,
// and T = Q^T L^{-1}.  Also returns ln|det T| for likelihood bookkeeping.
inline void SimultaneousDiag(const Eigen::MatrixXd& B, const Eigen::MatrixXd& W,
                             Eigen::MatrixXd* T, Eigen::VectorXd* psi,
                             double* logdet_t) {
  Eigen::LLT<Eigen::MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) {
    throw TrainingError("plda: within covariance not positive definite",
                        "cholesky");
  }
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::MatrixXd Linv =
      L.triangularView<Eigen::Lower>().solve(
          Eigen::MatrixXd::Identity(W.rows(), W.cols()));
  const Eigen::MatrixXd C = Linv * B * Linv.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (C + C.transpose()));
  if (es.info() != Eigen::Success) {
    throw TrainingError("plda: eigendecomposition failed", "eig");
  }
  *T = es.eigenvectors().transpose() * Linv;
  *psi = es.eigenvalues().cwiseMax(0.0);
  double ld = 0.0;
  for (long i = 0; i < L.rows(); ++i) ld -= std::log(L(i, i));
  *logdet_t = ld;
}

}  // namespace detail

// Marginal log-likelihood of the data under (m, B, W), summed over classes.
// In the diagonalized basis v = T(x - m) each dimension is independent:
// the class sum t_j = sum_i v_ij has variance n + n^2 psi_j around zero,
// and conditioning on it leaves unit-variance residuals.
inline double PldaLogLikelihood(
    const std::vector<std::vector<double>>& vectors,
    const std::vector<std::string>& labels, const Eigen::VectorXd& mean,
    const Eigen::MatrixXd& B, const Eigen::MatrixXd& W) {
  Eigen::MatrixXd T;
  Eigen::VectorXd psi;
  double logdet_t = 0.0;
  detail::SimultaneousDiag(B, W, &T, &psi, &logdet_t);

  const long d = mean.size();
  std::map<std::string, std::vector<long>> by_class;
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back((long)i);

  const double ln2pi = std::log(2.0 * M_PI);
  double ll = 0.0;
  for (const auto& [label, rows] : by_class) {
    const long n = (long)rows.size();
    Eigen::MatrixXd v(n, d);
    for (long r = 0; r < n; ++r) {
      Eigen::VectorXd x(d);
      for (long j = 0; j < d; ++j) x(j) = vectors[rows[r]][j] - mean(j);
      v.row(r) = (T * x).transpose();
    }
    for (long j = 0; j < d; ++j) {
      const double sum = v.col(j).sum();
      const double sq = v.col(j).squaredNorm();
      const double a = 1.0 + n * psi(j);
      // ln N-fold marginal: -(n/2) ln 2pi - (1/2) ln a
      //   - (1/2) [ sq - (psi_j / a) sum^2 ]
      ll += -0.5 * n * ln2pi - 0.5 * std::log(a) -
            0.5 * (sq - (psi(j) / a) * sum * sum);
    }
    ll += n * logdet_t;  // density change of variables back to x space
  }
  return ll;
}

// EM for the two-covariance model.  The per-class latent posterior is
// u_y | data ~ N(u_hat, S) with S = (B^{-1} + n W^{-1})^{-1} and
// u_hat = S n W^{-1} (xbar - m).
inline PldaModel PldaTrain(const std::vector<std::vector<double>>& vectors,
                           const std::vector<std::string>& labels,
                           const PldaTrainOptions& options = {},
                           std::vector<double>* ll_trace = nullptr,
                           std::vector<std::string>* warnings = nullptr) {
  if (vectors.empty() || vectors.size() != labels.size()) {
    throw UsageError("plda_train: empty data or label count mismatch");
  }
  const long d = (long)vectors[0].size();
  const long n_total = (long)vectors.size();

  std::map<std::string, std::vector<long>> by_class;
  for (size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back((long)i);
  if (by_class.size() < 2) {
    throw UsageError("plda_train: need at least 2 classes");
  }
  for (const auto& [label, rows] : by_class) {
    if (rows.size() < 2) {
      throw UsageError("plda_train: class '" + label +
                       "' has fewer than 2 samples");
    }
  }
  if (n_total <= d && warnings != nullptr) {
    warnings->push_back("plda_train: sample count " +
                        std::to_string(n_total) +
                        " does not exceed dimension " + std::to_string(d));
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& v : vectors)
    for (long j = 0; j < d; ++j) mean(j) += v[j];
  mean /= (double)n_total;

  // Per-class sufficient statistics in centered coordinates.
  struct Stat {
    long n;
    Eigen::VectorXd xbar;
  };
  std::vector<Stat> stats;
  Eigen::MatrixXd s_total = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [label, rows] : by_class) {
    Stat st;
    st.n = (long)rows.size();
    st.xbar = Eigen::VectorXd::Zero(d);
    for (long r : rows) {
      Eigen::VectorXd x(d);
      for (long j = 0; j < d; ++j) x(j) = vectors[r][j] - mean(j);
      st.xbar += x;
      s_total += x * x.transpose();
    }
    st.xbar /= (double)st.n;
    stats.push_back(std::move(st));
  }
  const long k = (long)stats.size();

  // Moment initialization: within scatter around class means, between
  // scatter of the class means themselves.
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d, d);
  for (const auto& st : stats) B += st.xbar * st.xbar.transpose();
  B /= (double)k;
  W = s_total;
  for (const auto& st : stats)
    W -= (double)st.n * st.xbar * st.xbar.transpose();
  W /= (double)n_total;

  const auto regularize = [&](Eigen::MatrixXd* M) {
    const double bump = 1e-6 * M->trace() / (double)d;
    for (long j = 0; j < d; ++j) (*M)(j, j) += bump;
  };
  regularize(&W);

  std::vector<std::vector<double>> vecs_cache = vectors;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (long iter = 0; iter < options.max_iters; ++iter) {
    const double ll = PldaLogLikelihood(vecs_cache, labels, mean, B, W);
    if (ll_trace != nullptr) ll_trace->push_back(ll);
    if (ll - prev_ll < options.tol && iter > 0) break;
    prev_ll = ll;

    Eigen::LLT<Eigen::MatrixXd> lltw(W);
    if (lltw.info() != Eigen::Success) {
      throw TrainingError("plda: W became singular during EM", "cholesky");
    }
    const Eigen::MatrixXd w_inv =
        lltw.solve(Eigen::MatrixXd::Identity(d, d));
    // B may legitimately approach zero, so invert through a guarded LDLT
    // rather than requiring strict positive definiteness.
    Eigen::MatrixXd b_guard = B;
    const double b_bump = std::max(1e-12, 1e-10 * b_guard.trace() / d);
    for (long j = 0; j < d; ++j) b_guard(j, j) += b_bump;
    const Eigen::MatrixXd b_inv =
        b_guard.ldlt().solve(Eigen::MatrixXd::Identity(d, d));

    Eigen::MatrixXd b_new = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd w_new = s_total;
    for (const auto& st : stats) {
      const double n = (double)st.n;
      const Eigen::MatrixXd prec = b_inv + n * w_inv;
      const Eigen::MatrixXd cov = prec.ldlt().solve(
          Eigen::MatrixXd::Identity(d, d));
      const Eigen::VectorXd u_hat = cov * (n * (w_inv * st.xbar));
      b_new += u_hat * u_hat.transpose() + cov;
      // sum_i (x_i - u)(x_i - u)^T contribution beyond s_total, using
      // sum_i x_i = n xbar within the class.
      w_new += n * (u_hat * u_hat.transpose() + cov) -
               n * (st.xbar * u_hat.transpose() +
                    u_hat * st.xbar.transpose());
    }
    B = 0.5 * (b_new + b_new.transpose()) / (double)k;
    W = 0.5 * (w_new + w_new.transpose()) / (double)n_total;
    regularize(&W);
  }

  PldaModel model;
  model.dim = d;
  model.mean.assign(mean.data(), mean.data() + d);
  model.between = detail::FromEigen(B);
  model.within = detail::FromEigen(W);
  Eigen::MatrixXd T;
  Eigen::VectorXd psi;
  double logdet_t = 0.0;
  detail::SimultaneousDiag(B, W, &T, &psi, &logdet_t);
  model.transform = detail::FromEigen(T);
  model.psi.assign(psi.data(), psi.data() + d);
  return model;
}

inline PldaModel PldaTrain(const VectorStore& store,
                           const PldaTrainOptions& options = {},
                           std::vector<double>* ll_trace = nullptr,
                           std::vector<std::string>* warnings = nullptr) {
  std::vector<std::vector<double>> vecs(store.Size());
  for (long i = 0; i < store.Size(); ++i) {
    vecs[i].assign(store.vectors[i].begin(), store.vectors[i].end());
  }
  return PldaTrain(vecs, store.labels, options, ll_trace, warnings);
}

// Log-likelihood ratio of same-class vs different-class for one trial.
// In the diagonalized basis the same-class hypothesis makes the test
// coordinate Gaussian around (psi/(psi+1)) e with variance 1 + psi/(psi+1);
// the different-class hypothesis keeps it centered with variance 1 + psi.
inline double PldaScore(const PldaModel& model, const std::vector<double>& enroll,
                        const std::vector<double>& test) {
  const std::vector<double> e = model.Project(enroll);
  const std::vector<double> t = model.Project(test);
  double llr = 0.0;
  for (long j = 0; j < model.dim; ++j) {
    const double psi = model.psi[j];
    const double shrink = psi / (psi + 1.0);
    const double mean_same = shrink * e[j];
    const double var_same = 1.0 + shrink;
    const double var_diff = 1.0 + psi;
    const double r_same = t[j] - mean_same;
    llr += -0.5 * std::log(var_same) - 0.5 * r_same * r_same / var_same;
    llr -= -0.5 * std::log(var_diff) - 0.5 * t[j] * t[j] / var_diff;
  }
  return llr;
}

inline void SavePldaModel(const PldaModel& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "dnf-plda";
  j["version"] = 1;
  j["dim"] = model.dim;
  j["mean"] = model.mean;
  j["between"] = model.between;
  j["within"] = model.within;
  j["transform"] = model.transform;
  j["psi"] = model.psi;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write plda model: " + path);
  out << j.dump(1) << '\n';
}

inline PldaModel LoadPldaModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open plda model: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("plda model " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "dnf-plda")
      throw DataError("plda model " + path + ": unrecognized format field");
    if (j.at("version").get<long>() != 1)
      throw DataError("plda model " + path + ": unsupported version");
    PldaModel m;
    m.dim = j.at("dim").get<long>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.between = j.at("between").get<std::vector<std::vector<double>>>();
    m.within = j.at("within").get<std::vector<std::vector<double>>>();
    m.transform = j.at("transform").get<std::vector<std::vector<double>>>();
    m.psi = j.at("psi").get<std::vector<double>>();
    if ((long)m.mean.size() != m.dim || (long)m.psi.size() != m.dim ||
        (long)m.transform.size() != m.dim) {
      throw DataError("plda model " + path + ": inconsistent dimensions");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("plda model " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trial lists, score files, EER.

struct Trial {
  std::string enroll;
  std::string test;
  bool target = false;
};

using TrialList = std::vector<Trial>;

inline TrialList LoadTrialList(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trial list: " + path);
  TrialList trials;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Trial t;
    std::string flag;
    if (!(ss >> t.enroll >> t.test >> flag)) {
      throw DataError("trial list " + path + " line " +
                      std::to_string(line_no) + ": expected 3 fields");
    }
    if (flag == "target") {
      t.target = true;
    } else if (flag == "nontarget") {
      t.target = false;
    } else {
      throw DataError("trial list " + path + " line " +
                      std::to_string(line_no) + ": bad flag '" + flag + "'");
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

inline void SaveTrialList(const TrialList& trials, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trial list: " + path);
  for (const auto& t : trials) {
    out << t.enroll << ' ' << t.test << ' '
        << (t.target ? "target" : "nontarget") << '\n';
  }
}

struct ScoreEntry {
  std::string enroll;
  std::string test;
  double score = 0.0;
};

inline std::vector<ScoreEntry> LoadScoreFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file: " + path);
  std::vector<ScoreEntry> entries;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ScoreEntry e;
    if (!(ss >> e.enroll >> e.test >> e.score)) {
      throw DataError("score file " + path + " line " +
                      std::to_string(line_no) + ": expected 3 fields");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void SaveScoreFile(const std::vector<ScoreEntry>& entries,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write score file: " + path);
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.score);
    out << e.enroll << ' ' << e.test << ' ' << buf << '\n';
  }
}

struct EerResult {
  double eer_percent = 0.0;
  double threshold = 0.0;
};

// Threshold sweep over the observed score order statistics.  With the
// accept rule score >= threshold, FAR falls and FRR rises as the threshold
// moves up; the crossing of the two staircase curves is linearly
// interpolated between the bracketing operating points.
inline EerResult ComputeEer(const std::vector<double>& target_scores,
                            const std::vector<double>& nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty()) {
    throw UsageError("eer: need at least one target and one nontarget score");
  }
  std::vector<double> tar = target_scores;
  std::vector<double> non = nontarget_scores;
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());

  std::vector<double> thresholds;
  thresholds.reserve(tar.size() + non.size() + 1);
  thresholds.insert(thresholds.end(), tar.begin(), tar.end());
  thresholds.insert(thresholds.end(), non.begin(), non.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  // Sentinel above every score: FAR 0, FRR 1.
  thresholds.push_back(thresholds.back() + 1.0);

  const auto frac_ge = [](const std::vector<double>& sorted, double th) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), th);
    return (double)(sorted.end() - it) / (double)sorted.size();
  };

  double prev_far = 1.0, prev_frr = 0.0, prev_th = thresholds.front();
  bool first = true;
  for (const double th : thresholds) {
    const double far = frac_ge(non, th);
    const double frr = 1.0 - frac_ge(tar, th);
    const double diff = far - frr;
    if (diff <= 0.0) {
      if (diff == 0.0 || first) {
        return {100.0 * 0.5 * (far + frr), th};
      }
      const double prev_diff = prev_far - prev_frr;
      const double lambda = prev_diff / (prev_diff - diff);
      const double eer =
          prev_far + lambda * (far - prev_far);
      const double eer_frr =
          prev_frr + lambda * (frr - prev_frr);
      return {100.0 * 0.5 * (eer + eer_frr),
              prev_th + lambda * (th - prev_th)};
    }
    prev_far = far;
    prev_frr = frr;
    prev_th = th;
    first = false;
  }
  // Unreachable: the sentinel threshold always yields diff = -1.
  throw UsageError("eer: threshold sweep found no crossing");
}

// Joins a score file against a trial list and computes the EER.  Every
// trial must be scored exactly once and no score may lack a trial.
inline EerResult EvalEer(const std::vector<ScoreEntry>& scores,
                         const TrialList& trials) {
  std::map<std::pair<std::string, std::string>, bool> truth;
  for (const auto& t : trials) {
    const auto key = std::make_pair(t.enroll, t.test);
    if (truth.count(key)) {
      throw DataError("eval: duplicate trial " + t.enroll + " " + t.test);
    }
    truth[key] = t.target;
  }
  if (scores.size() != trials.size()) {
    throw DataError("eval: score count " + std::to_string(scores.size()) +
                    " does not match trial count " +
                    std::to_string(trials.size()));
  }
  std::vector<double> tar, non;
  for (const auto& e : scores) {
    const auto it = truth.find(std::make_pair(e.enroll, e.test));
    if (it == truth.end()) {
      throw DataError("eval: score for unknown trial " + e.enroll + " " +
                      e.test);
    }
    (it->second ? tar : non).push_back(e.score);
  }
  if (tar.empty() || non.empty()) {
    throw UsageError("eval: need both target and nontarget trials");
  }
  return ComputeEer(tar, non);
}

}  // namespace dnf

#endif  // DNF_SCORING_HPP_
