// dnf/flow.hpp

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
#include <map>
#include <string>
#include <vector>

#include "dnf/autodiff.hpp"
#include "dnf/errors.hpp"
#include "dnf/rng.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Masked MLP conditioner (MADE).  Inputs carry degrees 1..D, hidden units
// degree 1 + (j mod max(1, D-1)), outputs are strict: coordinate i of the
// shift/log-scale heads connects to a hidden unit only if its degree is < i+1.
// That makes output coordinate i a function of input coordinates < i only,
// so the affine map below has a triangular Jacobian.
struct MadeConditioner {
  long dim = 0;
  long hidden = 0;
  Tensor w1, b1;      // (D, H), (1, H)
  Tensor w2, b2;      // (H, H), (1, H)
  Tensor wm, bm;      // (H, D), (1, D)  shift head
  Tensor ws, bs;      // (H, D), (1, D)  log-scale head
  Tensor mask1;       // (D, H)
  Tensor mask2;       // (H, H)
  Tensor mask_out;    // (H, D)

  MadeConditioner() = default;

  MadeConditioner(long dim_in, long hidden_in, Rng *rng)
      : dim(dim_in), hidden(hidden_in) {
    if (dim < 1 || hidden < 1)
      throw UsageError("conditioner needs dim >= 1 and hidden >= 1");
    std::vector<long> hdeg(hidden);
    long span = std::max<long>(1, dim - 1);
    for (long j = 0; j < hidden; j++) hdeg[j] = 1 + (j % span);

    mask1 = Tensor(dim, hidden);
    for (long i = 0; i < dim; i++)
      for (long j = 0; j < hidden; j++)
        mask1.at(i, j) = hdeg[j] >= i + 1 ? 1.0 : 0.0;
    mask2 = Tensor(hidden, hidden);
    for (long j = 0; j < hidden; j++)
      for (long k = 0; k < hidden; k++)
        mask2.at(j, k) = hdeg[k] >= hdeg[j] ? 1.0 : 0.0;
    mask_out = Tensor(hidden, dim);
    for (long j = 0; j < hidden; j++)
      for (long c = 0; c < dim; c++)
        mask_out.at(j, c) = c + 1 > hdeg[j] ? 1.0 : 0.0;

    // Hidden weights get a small random init; both heads start at zero so a
    // fresh block is the identity map.
    w1 = rng->Randn(dim, hidden, 1.0 / std::sqrt(static_cast<double>(dim)));
    b1 = Tensor(1, hidden);
    w2 = rng->Randn(hidden, hidden,
                    1.0 / std::sqrt(static_cast<double>(hidden)));
    b2 = Tensor(1, hidden);
    wm = Tensor(hidden, dim);
    bm = Tensor(1, dim);
    ws = Tensor(hidden, dim);
    bs = Tensor(1, dim);
  }

  std::vector<Tensor *> Parameters() {
    return {&w1, &b1, &w2, &b2, &wm, &bm, &ws, &bs};
  }
  std::vector<const Tensor *> Parameters() const {
    return {&w1, &b1, &w2, &b2, &wm, &bm, &ws, &bs};
  }
};

// Leaf ids of one conditioner's parameters on a tape, in Parameters() order.
struct MadeBinding {
  int w1, b1, w2, b2, wm, bm, ws, bs;
};

// One affine autoregressive block.  normalize (x -> z) needs a single
// conditioner pass:
//   y = permute(x)
//   z_i = (y_i - m_i(y_<i)) * exp(-s_i(y_<i))
// so d z / d y is triangular and ln|det| = -sum_i s_i.  The log-scale is
// squashed, s = clamp * tanh(raw / clamp), before exponentiation.
struct MaskedAffineBlock {
  MadeConditioner cond;
  std::vector<long> perm;  // y[j] = x[perm[j]]
  double scale_clamp = 5.0;

  MaskedAffineBlock() = default;
  MaskedAffineBlock(long dim, long hidden, std::vector<long> perm_in,
                    Rng *rng)
      : cond(dim, hidden, rng), perm(std::move(perm_in)) {
    if (static_cast<long>(perm.size()) != dim)
      throw UsageError("permutation length does not match dim");
  }

  Tensor PermMatrix() const {
    long d = cond.dim;
    Tensor p(d, d);
    for (long j = 0; j < d; j++) p.at(perm[j], j) = 1.0;
    return p;
  }
  Tensor PermInverseMatrix() const {
    long d = cond.dim;
    Tensor p(d, d);
    for (long j = 0; j < d; j++) p.at(j, perm[j]) = 1.0;
    return p;
  }
};

struct BlockBinding {
  MadeBinding made;
};

namespace detail {

inline MadeBinding BindMade(Tape *t, const MadeConditioner &c) {
  MadeBinding b;
  b.w1 = t->Leaf(c.w1);
  b.b1 = t->Leaf(c.b1);
  b.w2 = t->Leaf(c.w2);
  b.b2 = t->Leaf(c.b2);
  b.wm = t->Leaf(c.wm);
  b.bm = t->Leaf(c.bm);
  b.ws = t->Leaf(c.ws);
  b.bs = t->Leaf(c.bs);
  return b;
}

struct CondOut {
  int m;      // shift, (N, D)
  int s;      // squashed log-scale, (N, D)
};

// One conditioner pass on tape: y (N, D) -> m, s.
inline CondOut RunConditioner(Tape *t, const MadeConditioner &c,
                              const MadeBinding &b, int y,
                              double scale_clamp) {
  int m1 = t->Constant(c.mask1);
  int m2 = t->Constant(c.mask2);
  int mo = t->Constant(c.mask_out);
  int h1 = t->Tanh(t->Affine(y, t->Mul(b.w1, m1), b.b1));
  int h2 = t->Tanh(t->Affine(h1, t->Mul(b.w2, m2), b.b2));
  CondOut out;
  out.m = t->Affine(h2, t->Mul(b.wm, mo), b.bm);
  int raw = t->Affine(h2, t->Mul(b.ws, mo), b.bs);
  out.s = t->Scale(t->Tanh(t->Scale(raw, 1.0 / scale_clamp)), scale_clamp);
  return out;
}

}  // namespace detail

// Stack of masked affine blocks with a full coordinate reversal at each
// block's input.
struct FlowModel {
  long dim = 0;
  long hidden = 0;
  double scale_clamp = 5.0;
  std::vector<MaskedAffineBlock> blocks;

  FlowModel() = default;

  // block_count blocks of width max(64, 2*dim) unless hidden_in is given.
  FlowModel(long dim_in, long block_count, uint64_t seed,
            long hidden_in = 0) {
    if (dim_in < 1 || block_count < 1)
      throw UsageError("flow needs dim >= 1 and block_count >= 1");
    dim = dim_in;
    hidden = hidden_in > 0 ? hidden_in : std::max<long>(64, 2 * dim_in);
    Rng rng(seed);
    std::vector<long> reversal(dim);
    for (long j = 0; j < dim; j++) reversal[j] = dim - 1 - j;
    for (long k = 0; k < block_count; k++) {
      blocks.emplace_back(dim, hidden, reversal, &rng);
      blocks.back().scale_clamp = scale_clamp;
    }
  }

  std::vector<Tensor *> Parameters() {
    std::vector<Tensor *> ps;
    for (auto &b : blocks)
      for (Tensor *p : b.cond.Parameters()) ps.push_back(p);
    return ps;
  }
};

struct FlowBinding {
  std::vector<BlockBinding> blocks;
  // Leaf ids in the same order as FlowModel::Parameters().
  std::vector<int> leaves;
};

inline FlowBinding BindFlow(Tape *t, const FlowModel &f) {
  FlowBinding fb;
  for (const auto &blk : f.blocks) {
    BlockBinding bb;
    bb.made = detail::BindMade(t, blk.cond);
    fb.blocks.push_back(bb);
    const MadeBinding &m = bb.made;
    for (int id : {m.w1, m.b1, m.w2, m.b2, m.wm, m.bm, m.ws, m.bs})
      fb.leaves.push_back(id);
  }
  return fb;
}

struct NormalizeResult {
  int z;       // (N, D)
  int logdet;  // (N, 1), ln |det d f^-1 / d x| per sample
};

// Fast direction x -> z on tape.  Throws FlowInstabilityError naming the
// block whose output went non-finite.
inline NormalizeResult Normalize(Tape *t, const FlowModel &f,
                                 const FlowBinding &fb, int x) {
  if (t->Val(x).cols != f.dim)
    throw UsageError("normalize: input dim does not match flow");
  long n = t->Val(x).rows;
  int cur = x;
  int logdet = t->Constant(Tensor::Zeros(n, 1));
  for (size_t k = 0; k < f.blocks.size(); k++) {
    const MaskedAffineBlock &blk = f.blocks[k];
    try {
      int y = t->MatMul(cur, t->Constant(blk.PermMatrix()));
      detail::CondOut c = detail::RunConditioner(t, blk.cond, fb.blocks[k].made,
                                                 y, blk.scale_clamp);
      cur = t->Mul(t->Sub(y, c.m), t->Exp(t->Scale(c.s, -1.0)));
      logdet = t->Add(logdet, t->Scale(t->SumRows(c.s), -1.0));
    } catch (const TrainingError &) {
      throw FlowInstabilityError(static_cast<int>(k));
    }
  }
  return NormalizeResult{cur, logdet};
}

struct GenerateResult {
  int x;       // (N, D)
  int logdet;  // (N, 1), normalize-direction logdet at the generated x
};

// Slow direction z -> x.  Each block is inverted coordinate by coordinate:
// pass i fixes y_i = v_i * exp(s_i(y_<i)) + m_i(y_<i)); the conditioner's
// masks make earlier coordinates final when pass i reads them.  Fully taped,
// so ln N / logdet terms built on top of it differentiate w.r.t. the inputs.
inline GenerateResult Generate(Tape *t, const FlowModel &f,
                               const FlowBinding &fb, int z) {
  if (t->Val(z).cols != f.dim)
    throw UsageError("generate: input dim does not match flow");
  long n = t->Val(z).rows;
  long d = f.dim;
  int cur = z;
  int logdet = t->Constant(Tensor::Zeros(n, 1));
  for (long k = static_cast<long>(f.blocks.size()) - 1; k >= 0; k--) {
    const MaskedAffineBlock &blk = f.blocks[k];
    try {
      int y = cur;
      int s_final = -1;
      for (long i = 0; i < d; i++) {
        detail::CondOut c = detail::RunConditioner(
            t, blk.cond, fb.blocks[k].made, y, blk.scale_clamp);
        int cand = t->Add(t->Mul(cur, t->Exp(c.s)), c.m);
        Tensor keep = Tensor::Full(n, d, 1.0);
        Tensor pick(n, d);
        for (long r = 0; r < n; r++) {
          keep.at(r, i) = 0.0;
          pick.at(r, i) = 1.0;
        }
        int si = t->Mul(c.s, t->Constant(pick));
        s_final = s_final < 0 ? si : t->Add(s_final, si);
        y = t->Add(t->Mul(y, t->Constant(keep)), t->Mul(cand, t->Constant(pick)));
      }
      logdet = t->Add(logdet, t->Scale(t->SumRows(s_final), -1.0));
      cur = t->MatMul(y, t->Constant(blk.PermInverseMatrix()));
    } catch (const TrainingError &) {
      throw FlowInstabilityError(static_cast<int>(k));
    }
  }
  return GenerateResult{cur, logdet};
}

// Value-only wrappers for callers that do not need gradients.
struct FlowValues {
  Tensor out;
  Tensor logdet;
};

inline FlowValues NormalizeValues(const FlowModel &f, const Tensor &x) {
  Tape t;
  FlowBinding fb = BindFlow(&t, f);
  NormalizeResult r = Normalize(&t, f, fb, t.Constant(x));
  return FlowValues{t.Val(r.z), t.Val(r.logdet)};
}

inline FlowValues GenerateValues(const FlowModel &f, const Tensor &z) {
  Tape t;
  FlowBinding fb = BindFlow(&t, f);
  GenerateResult r = Generate(&t, f, fb, t.Constant(z));
  return FlowValues{t.Val(r.x), t.Val(r.logdet)};
}

// Flow plus a table of per-class latent means.  NF mode keeps a single
// pseudo-class with its mean frozen at zero (plain unlabeled flow training).
struct DnfModel {
  FlowModel flow;
  std::vector<std::string> classes;  // sorted labels, row i of means
  Tensor means;                      // (K, D)
  bool nf_mode = false;
  bool means_initialized = false;

  DnfModel() = default;

  static DnfModel Dnf(FlowModel flow_in, std::vector<std::string> labels) {
    DnfModel m;
    m.flow = std::move(flow_in);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.empty()) throw UsageError("DNF model needs class labels");
    m.classes = std::move(labels);
    m.means = Tensor::Zeros(static_cast<long>(m.classes.size()), m.flow.dim);
    return m;
  }

  static DnfModel Nf(FlowModel flow_in) {
    DnfModel m;
    m.flow = std::move(flow_in);
    m.nf_mode = true;
    m.classes = {"*"};
    m.means = Tensor::Zeros(1, m.flow.dim);
    m.means_initialized = true;
    return m;
  }

  long ClassCount() const { return static_cast<long>(classes.size()); }

  long ClassRow(const std::string &label) const {
    if (nf_mode) return 0;
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) throw MissingClassError(label);
    return static_cast<long>(it - classes.begin());
  }

  bool MeansTrainable() const { return !nf_mode; }

  std::vector<Tensor *> Parameters() {
    std::vector<Tensor *> ps = flow.Parameters();
    if (MeansTrainable()) ps.push_back(&means);
    return ps;
  }

  // ln N(z_i; mu_{y_i}, I) per sample, (N, 1).
  // rows[i] is the class row of sample i; mean_leaf is the means table on
  // the tape (Leaf when training the means, Constant otherwise).
  int ClassLogPrior(Tape *t, int z, const std::vector<long> &rows,
                    int mean_leaf) const {
    const Tensor &vz = t->Val(z);
    long n = vz.rows;
    if (static_cast<long>(rows.size()) != n)
      throw UsageError("class_log_prior: one class row per sample required");
    Tensor select(n, ClassCount());
    for (long i = 0; i < n; i++) {
      if (rows[i] < 0 || rows[i] >= ClassCount())
        throw UsageError("class_log_prior: class row out of range");
      select.at(i, rows[i]) = 1.0;
    }
    int mu = t->MatMul(t->Constant(select), mean_leaf);
    int sq = t->Scale(t->SumRows(t->Square(t->Sub(z, mu))), -0.5);
    double c = -0.5 * flow.dim * std::log(2.0 * 3.14159265358979323846);
    return t->Shift(sq, c);
  }
};

}  // namespace dnf
