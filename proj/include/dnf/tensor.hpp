// dnf/tensor.hpp

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
#include <cstddef>
#include <vector>

#include "dnf/errors.hpp"

namespace dnf {

// Dense row-major matrix of doubles.  Scalars are 1x1, row vectors 1xD,
// column vectors Nx1.  Everything in the tape works on these.
struct Tensor {
  long rows = 0;
  long cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(long r, long c) : rows(r), cols(c), v(CheckedSize(r, c), 0.0) {}
  Tensor(long r, long c, std::vector<double> data)
      : rows(r), cols(c), v(std::move(data)) {
    if (static_cast<size_t>(rows * cols) != v.size())
      throw UsageError("tensor shape does not match value count");
  }

  static size_t CheckedSize(long r, long c) {
    if (r < 0 || c < 0 || (r == 0) != (c == 0))
      throw UsageError("tensor dimensions must be positive");
    return static_cast<size_t>(r) * static_cast<size_t>(c);
  }

  static Tensor Zeros(long r, long c) { return Tensor(r, c); }
  static Tensor Full(long r, long c, double value) {
    Tensor t(r, c);
    for (double &x : t.v) x = value;
    return t;
  }
  static Tensor Scalar(double value) { return Full(1, 1, value); }
  static Tensor Identity(long n) {
    Tensor t(n, n);
    for (long i = 0; i < n; i++) t.v[i * n + i] = 1.0;
    return t;
  }

  long numel() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool same_shape(const Tensor &o) const {
    return rows == o.rows && cols == o.cols;
  }

  double &at(long i, long j) { return v[i * cols + j]; }
  double at(long i, long j) const { return v[i * cols + j]; }
  double scalar_value() const {
    if (!is_scalar()) throw UsageError("tensor is not a scalar");
    return v[0];
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace dnf
