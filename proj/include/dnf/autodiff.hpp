// dnf/autodiff.hpp

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

#include "dnf/errors.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Reverse-mode tape over a small fixed primitive set.  Graphs are built
// eagerly (values are computed as ops are recorded) and backward() walks the
// record in reverse.  All reductions run in a fixed sequential order, so two
// forwards over identical inputs are bit-identical.
//
// Primitives: add, mul (elementwise; masking is mul by a constant), matmul
// (optionally with the second operand transposed), tanh, exp, log, square,
// sqrt, relu, reciprocal, sum (all / per row), mean, concat (rows), affine
// (x*W + b).  scale/shift are constant-folded mul/add conveniences.
class Tape {
 public:
  enum class Op : uint8_t {
    kLeaf,
    kConst,
    kAdd,
    kMul,
    kScale,
    kShift,
    kMatMul,
    kMatMulBt,  // A * B^T
    kTanh,
    kExp,
    kLog,
    kSquare,
    kSqrt,
    kRelu,
    kRecip,
    kSumAll,
    kSumRows,
    kMean,
    kConcatRows,
    kAffine,
  };

  // Differentiable input.  Leaves must be finite.
  int Leaf(const Tensor &t) { return Push(Op::kLeaf, t, -1, -1, -1); }
  // Non-differentiable input (data, masks, selection matrices).
  int Constant(const Tensor &t) { return Push(Op::kConst, t, -1, -1, -1); }

  int Add(int a, int b) {
    CheckSameShape(a, b, "add");
    Tensor out = nodes_[a].val;
    const Tensor &vb = nodes_[b].val;
    for (size_t i = 0; i < out.v.size(); i++) out.v[i] += vb.v[i];
    return Push(Op::kAdd, std::move(out), a, b, -1);
  }

  int Mul(int a, int b) {
    CheckSameShape(a, b, "mul");
    Tensor out = nodes_[a].val;
    const Tensor &vb = nodes_[b].val;
    for (size_t i = 0; i < out.v.size(); i++) out.v[i] *= vb.v[i];
    return Push(Op::kMul, std::move(out), a, b, -1);
  }

  int Scale(int a, double k) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x *= k;
    int id = Push(Op::kScale, std::move(out), a, -1, -1);
    nodes_[id].aux = k;
    return id;
  }

  int Shift(int a, double k) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x += k;
    int id = Push(Op::kShift, std::move(out), a, -1, -1);
    nodes_[id].aux = k;
    return id;
  }

  int Sub(int a, int b) { return Add(a, Scale(b, -1.0)); }

  // C = A * B, or A * B^T when transpose_b is set.
  int MatMul(int a, int b, bool transpose_b = false) {
    const Tensor &va = nodes_[a].val;
    const Tensor &vb = nodes_[b].val;
    if (!transpose_b) {
      if (va.cols != vb.rows) throw UsageError("matmul: inner dims disagree");
      Tensor out(va.rows, vb.cols);
      MatMulAccum(va, vb, &out);
      return Push(Op::kMatMul, std::move(out), a, b, -1);
    }
    if (va.cols != vb.cols) throw UsageError("matmul: inner dims disagree");
    Tensor out(va.rows, vb.rows);
    for (long i = 0; i < va.rows; i++)
      for (long j = 0; j < vb.rows; j++) {
        double acc = 0.0;
        for (long l = 0; l < va.cols; l++)
          acc += va.at(i, l) * vb.at(j, l);
        out.at(i, j) = acc;
      }
    return Push(Op::kMatMulBt, std::move(out), a, b, -1);
  }

  int Tanh(int a) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x = std::tanh(x);
    return Push(Op::kTanh, std::move(out), a, -1, -1);
  }

  int Exp(int a) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x = std::exp(x);
    return Push(Op::kExp, std::move(out), a, -1, -1);
  }

  int Log(int a) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x = std::log(x);
    return Push(Op::kLog, std::move(out), a, -1, -1);
  }

  int Square(int a) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x = x * x;
    return Push(Op::kSquare, std::move(out), a, -1, -1);
  }

  int Sqrt(int a) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x = std::sqrt(x);
    return Push(Op::kSqrt, std::move(out), a, -1, -1);
  }

  int Relu(int a) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x = x > 0.0 ? x : 0.0;
    return Push(Op::kRelu, std::move(out), a, -1, -1);
  }

  int Recip(int a) {
    Tensor out = nodes_[a].val;
    for (double &x : out.v) x = 1.0 / x;
    return Push(Op::kRecip, std::move(out), a, -1, -1);
  }

  int Sum(int a) {
    double acc = 0.0;
    for (double x : nodes_[a].val.v) acc += x;
    return Push(Op::kSumAll, Tensor::Scalar(acc), a, -1, -1);
  }

  // (N, D) -> (N, 1)
  int SumRows(int a) {
    const Tensor &va = nodes_[a].val;
    Tensor out(va.rows, 1);
    for (long i = 0; i < va.rows; i++) {
      double acc = 0.0;
      for (long j = 0; j < va.cols; j++) acc += va.at(i, j);
      out.v[i] = acc;
    }
    return Push(Op::kSumRows, std::move(out), a, -1, -1);
  }

  int Mean(int a) {
    const Tensor &va = nodes_[a].val;
    double acc = 0.0;
    for (double x : va.v) acc += x;
    return Push(Op::kMean, Tensor::Scalar(acc / va.numel()), a, -1, -1);
  }

  int ConcatRows(int a, int b) {
    const Tensor &va = nodes_[a].val;
    const Tensor &vb = nodes_[b].val;
    if (va.cols != vb.cols)
      throw UsageError("concat: column counts disagree");
    Tensor out(va.rows + vb.rows, va.cols);
    std::copy(va.v.begin(), va.v.end(), out.v.begin());
    std::copy(vb.v.begin(), vb.v.end(), out.v.begin() + va.v.size());
    return Push(Op::kConcatRows, std::move(out), a, b, -1);
  }

  // y = x * W + 1 b   with x (N, I), W (I, O), b (1, O).
  int Affine(int x, int w, int b) {
    const Tensor &vx = nodes_[x].val;
    const Tensor &vw = nodes_[w].val;
    const Tensor &vb = nodes_[b].val;
    if (vx.cols != vw.rows) throw UsageError("affine: inner dims disagree");
    if (vb.rows != 1 || vb.cols != vw.cols)
      throw UsageError("affine: bias must be (1, output_dim)");
    Tensor out(vx.rows, vw.cols);
    for (long i = 0; i < out.rows; i++)
      for (long j = 0; j < out.cols; j++) out.at(i, j) = vb.v[j];
    MatMulAccum(vx, vw, &out);
    return Push(Op::kAffine, std::move(out), x, w, b);
  }

  const Tensor &Val(int id) const { return nodes_[id].val; }

  // Gradient of the last backward()'s output w.r.t. node id; zeros if the
  // node was not reached.
  Tensor Grad(int id) const {
    if (grads_[id].numel() == 0)
      return Tensor::Zeros(nodes_[id].val.rows, nodes_[id].val.cols);
    return grads_[id];
  }

  size_t NodeCount() const { return nodes_.size(); }

  void Backward(int out) {
    if (!nodes_[out].val.is_scalar())
      throw UsageError("backward requires a scalar output node");
    grads_.assign(nodes_.size(), Tensor());
    grads_[out] = Tensor::Scalar(1.0);
    for (int id = out; id >= 0; id--) {
      if (grads_[id].numel() == 0) continue;
      const Node &n = nodes_[id];
      const Tensor &g = grads_[id];
      switch (n.op) {
        case Op::kLeaf:
        case Op::kConst:
          break;
        case Op::kAdd:
          AccumInto(n.a, g);
          AccumInto(n.b, g);
          break;
        case Op::kMul: {
          Tensor ga = g, gb = g;
          const Tensor &va = nodes_[n.a].val;
          const Tensor &vb = nodes_[n.b].val;
          for (size_t i = 0; i < g.v.size(); i++) {
            ga.v[i] *= vb.v[i];
            gb.v[i] *= va.v[i];
          }
          AccumInto(n.a, ga);
          AccumInto(n.b, gb);
          break;
        }
        case Op::kScale: {
          Tensor ga = g;
          for (double &x : ga.v) x *= n.aux;
          AccumInto(n.a, ga);
          break;
        }
        case Op::kShift:
          AccumInto(n.a, g);
          break;
        case Op::kMatMul: {
          // C = A B:  dA = g B^T, dB = A^T g
          const Tensor &va = nodes_[n.a].val;
          const Tensor &vb = nodes_[n.b].val;
          if (WantsGrad(n.a)) {
            Tensor ga(va.rows, va.cols);
            for (long i = 0; i < ga.rows; i++)
              for (long l = 0; l < ga.cols; l++) {
                double acc = 0.0;
                for (long j = 0; j < g.cols; j++)
                  acc += g.at(i, j) * vb.at(l, j);
                ga.at(i, l) = acc;
              }
            AccumInto(n.a, ga);
          }
          if (WantsGrad(n.b)) {
            Tensor gb(vb.rows, vb.cols);
            for (long l = 0; l < vb.rows; l++)
              for (long i = 0; i < va.rows; i++) {
                double a_il = va.at(i, l);
                for (long j = 0; j < g.cols; j++)
                  gb.at(l, j) += a_il * g.at(i, j);
              }
            AccumInto(n.b, gb);
          }
          break;
        }
        case Op::kMatMulBt: {
          // C = A B^T:  dA = g B, dB = g^T A
          const Tensor &va = nodes_[n.a].val;
          const Tensor &vb = nodes_[n.b].val;
          if (WantsGrad(n.a)) {
            Tensor ga(va.rows, va.cols);
            for (long i = 0; i < ga.rows; i++)
              for (long j = 0; j < g.cols; j++) {
                double g_ij = g.at(i, j);
                for (long l = 0; l < ga.cols; l++)
                  ga.at(i, l) += g_ij * vb.at(j, l);
              }
            AccumInto(n.a, ga);
          }
          if (WantsGrad(n.b)) {
            Tensor gb(vb.rows, vb.cols);
            for (long j = 0; j < gb.rows; j++)
              for (long i = 0; i < va.rows; i++) {
                double g_ij = g.at(i, j);
                for (long l = 0; l < gb.cols; l++)
                  gb.at(j, l) += g_ij * va.at(i, l);
              }
            AccumInto(n.b, gb);
          }
          break;
        }
        case Op::kTanh: {
          Tensor ga = g;
          for (size_t i = 0; i < ga.v.size(); i++)
            ga.v[i] *= 1.0 - n.val.v[i] * n.val.v[i];
          AccumInto(n.a, ga);
          break;
        }
        case Op::kExp: {
          Tensor ga = g;
          for (size_t i = 0; i < ga.v.size(); i++) ga.v[i] *= n.val.v[i];
          AccumInto(n.a, ga);
          break;
        }
        case Op::kLog: {
          Tensor ga = g;
          const Tensor &va = nodes_[n.a].val;
          for (size_t i = 0; i < ga.v.size(); i++) ga.v[i] /= va.v[i];
          AccumInto(n.a, ga);
          break;
        }
        case Op::kSquare: {
          Tensor ga = g;
          const Tensor &va = nodes_[n.a].val;
          for (size_t i = 0; i < ga.v.size(); i++)
            ga.v[i] *= 2.0 * va.v[i];
          AccumInto(n.a, ga);
          break;
        }
        case Op::kSqrt: {
          Tensor ga = g;
          for (size_t i = 0; i < ga.v.size(); i++)
            ga.v[i] *= 0.5 / n.val.v[i];
          AccumInto(n.a, ga);
          break;
        }
        case Op::kRelu: {
          Tensor ga = g;
          const Tensor &va = nodes_[n.a].val;
          for (size_t i = 0; i < ga.v.size(); i++)
            if (va.v[i] <= 0.0) ga.v[i] = 0.0;
          AccumInto(n.a, ga);
          break;
        }
        case Op::kRecip: {
          Tensor ga = g;
          for (size_t i = 0; i < ga.v.size(); i++)
            ga.v[i] *= -n.val.v[i] * n.val.v[i];
          AccumInto(n.a, ga);
          break;
        }
        case Op::kSumAll: {
          const Tensor &va = nodes_[n.a].val;
          AccumInto(n.a, Tensor::Full(va.rows, va.cols, g.v[0]));
          break;
        }
        case Op::kSumRows: {
          const Tensor &va = nodes_[n.a].val;
          Tensor ga(va.rows, va.cols);
          for (long i = 0; i < va.rows; i++)
            for (long j = 0; j < va.cols; j++) ga.at(i, j) = g.v[i];
          AccumInto(n.a, ga);
          break;
        }
        case Op::kMean: {
          const Tensor &va = nodes_[n.a].val;
          AccumInto(n.a,
                    Tensor::Full(va.rows, va.cols, g.v[0] / va.numel()));
          break;
        }
        case Op::kConcatRows: {
          const Tensor &va = nodes_[n.a].val;
          const Tensor &vb = nodes_[n.b].val;
          Tensor ga(va.rows, va.cols), gb(vb.rows, vb.cols);
          std::copy(g.v.begin(), g.v.begin() + va.v.size(), ga.v.begin());
          std::copy(g.v.begin() + va.v.size(), g.v.end(), gb.v.begin());
          AccumInto(n.a, ga);
          AccumInto(n.b, gb);
          break;
        }
        case Op::kAffine: {
          const Tensor &vx = nodes_[n.a].val;
          const Tensor &vw = nodes_[n.b].val;
          if (WantsGrad(n.a)) {
            Tensor gx(vx.rows, vx.cols);
            for (long i = 0; i < gx.rows; i++)
              for (long j = 0; j < g.cols; j++) {
                double g_ij = g.at(i, j);
                for (long l = 0; l < gx.cols; l++)
                  gx.at(i, l) += g_ij * vw.at(l, j);
              }
            AccumInto(n.a, gx);
          }
          if (WantsGrad(n.b)) {
            Tensor gw(vw.rows, vw.cols);
            for (long l = 0; l < gw.rows; l++)
              for (long i = 0; i < vx.rows; i++) {
                double x_il = vx.at(i, l);
                for (long j = 0; j < g.cols; j++)
                  gw.at(l, j) += x_il * g.at(i, j);
              }
            AccumInto(n.b, gw);
          }
          if (WantsGrad(n.c)) {
            Tensor gb(1, g.cols);
            for (long i = 0; i < g.rows; i++)
              for (long j = 0; j < g.cols; j++) gb.v[j] += g.at(i, j);
            AccumInto(n.c, gb);
          }
          break;
        }
      }
    }
  }

  static const char *OpName(Op op) {
    switch (op) {
      case Op::kLeaf: return "leaf";
      case Op::kConst: return "const";
      case Op::kAdd: return "add";
      case Op::kMul: return "mul";
      case Op::kScale: return "scale";
      case Op::kShift: return "shift";
      case Op::kMatMul: return "matmul";
      case Op::kMatMulBt: return "matmul_bt";
      case Op::kTanh: return "tanh";
      case Op::kExp: return "exp";
      case Op::kLog: return "log";
      case Op::kSquare: return "square";
      case Op::kSqrt: return "sqrt";
      case Op::kRelu: return "relu";
      case Op::kRecip: return "reciprocal";
      case Op::kSumAll: return "sum";
      case Op::kSumRows: return "sum_rows";
      case Op::kMean: return "mean";
      case Op::kConcatRows: return "concat";
      case Op::kAffine: return "affine";
    }
    return "?";
  }

 private:
  struct Node {
    Op op;
    int a, b, c;
    double aux = 0.0;
    Tensor val;
  };

  int Push(Op op, Tensor val, int a, int b, int c) {
    if (!val.all_finite()) throw TrainingError(OpName(op));
    nodes_.push_back(Node{op, a, b, c, 0.0, std::move(val)});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Gradients are never propagated into constants; everything else
  // accumulates (a leaf may feed several ops).
  bool WantsGrad(int id) const { return nodes_[id].op != Op::kConst; }

  void AccumInto(int id, const Tensor &g) {
    if (!WantsGrad(id)) return;
    Tensor &dst = grads_[id];
    if (dst.numel() == 0) {
      dst = g;
      return;
    }
    for (size_t i = 0; i < dst.v.size(); i++) dst.v[i] += g.v[i];
  }

  void CheckSameShape(int a, int b, const char *what) const {
    if (!nodes_[a].val.same_shape(nodes_[b].val))
      throw UsageError(std::string(what) + ": shape mismatch");
  }

  // out += A * B, ikj order.
  static void MatMulAccum(const Tensor &a, const Tensor &b, Tensor *out) {
    for (long i = 0; i < a.rows; i++)
      for (long l = 0; l < a.cols; l++) {
        double a_il = a.at(i, l);
        if (a_il == 0.0) continue;
        const double *brow = &b.v[l * b.cols];
        double *orow = &out->v[i * out->cols];
        for (long j = 0; j < b.cols; j++) orow[j] += a_il * brow[j];
      }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace dnf
