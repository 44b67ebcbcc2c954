// dnf/errors.hpp

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

#include <stdexcept>
#include <string>

namespace dnf {

// Caller violated a documented precondition (bad shapes, wrong argument
// combinations, unknown config keys, ...).  Maps to CLI exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data: unparseable store lines, dimension
// mismatches, unknown ids in trial lists.  Maps to CLI exit code 4.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A non-finite value appeared while evaluating a training-step graph.
// Carries the name of the primitive that produced it.
struct TrainingError : std::runtime_error {
  std::string primitive;
  explicit TrainingError(const std::string &prim)
      : std::runtime_error("non-finite value produced by primitive '" + prim +
                           "'"),
        primitive(prim) {}
  TrainingError(const std::string &message, const std::string &prim)
      : std::runtime_error(message), primitive(prim) {}
};

// The flow produced non-finite output (scale explosion); carries the index of
// the offending block.
struct FlowInstabilityError : std::runtime_error {
  int block_index;
  explicit FlowInstabilityError(int block)
      : std::runtime_error("non-finite flow output in block " +
                           std::to_string(block)),
        block_index(block) {}
};

// A label was requested that the model's class table does not contain.
struct MissingClassError : std::runtime_error {
  explicit MissingClassError(const std::string &label)
      : std::runtime_error("unknown class label '" + label + "'") {}
};

// Geometrically degenerate input where the requested quantity is undefined,
// e.g. a zero-norm vector handed to the angle metric.
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training halted because the objective magnitude crossed the divergence
// threshold or became non-finite.  Maps to CLI exit code 3.
struct DivergenceError : std::runtime_error {
  long step;
  double objective;
  DivergenceError(long step_in, double objective_in)
      : std::runtime_error("training diverged at step " +
                           std::to_string(step_in)),
        step(step_in),
        objective(objective_in) {}
};

}  // namespace dnf
