// dnf/adam.hpp

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
#include <vector>

#include "dnf/errors.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;  // denominator floor
};

// First/second moment accumulators, one pair per parameter tensor.
struct AdamState {
  AdamConfig config;
  long step_count = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One bias-corrected Adam descent step:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// Training maximizes its objectives by descending on the negated value.
inline void AdamStep(const std::vector<Tensor *> &params,
                     const std::vector<const Tensor *> &grads,
                     AdamState *state) {
  if (params.size() != grads.size())
    throw UsageError("adam: parameter/gradient counts disagree");
  if (state->m.empty()) {
    for (const Tensor *p : params) {
      state->m.push_back(Tensor::Zeros(p->rows, p->cols));
      state->v.push_back(Tensor::Zeros(p->rows, p->cols));
    }
  }
  if (state->m.size() != params.size())
    throw UsageError("adam: state was initialized for a different model");
  state->step_count++;
  const AdamConfig &c = state->config;
  double bc1 = 1.0 - std::pow(c.beta1, state->step_count);
  double bc2 = 1.0 - std::pow(c.beta2, state->step_count);
  for (size_t k = 0; k < params.size(); k++) {
    Tensor &p = *params[k];
    const Tensor &g = *grads[k];
    if (!p.same_shape(g) || !p.same_shape(state->m[k]))
      throw UsageError("adam: shape mismatch");
    Tensor &m = state->m[k];
    Tensor &v = state->v[k];
    for (size_t i = 0; i < p.v.size(); i++) {
      m.v[i] = c.beta1 * m.v[i] + (1.0 - c.beta1) * g.v[i];
      v.v[i] = c.beta2 * v.v[i] + (1.0 - c.beta2) * g.v[i] * g.v[i];
      double m_hat = m.v[i] / bc1;
      double v_hat = v.v[i] / bc2;
      p.v[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace dnf
