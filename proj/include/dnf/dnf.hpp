// dnf/dnf.hpp

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

#ifndef DNF_DNF_HPP_
#define DNF_DNF_HPP_

#include "dnf/adam.hpp"
#include "dnf/autodiff.hpp"
#include "dnf/checkpoint.hpp"
#include "dnf/data.hpp"
#include "dnf/errors.hpp"
#include "dnf/experiment.hpp"
#include "dnf/flow.hpp"
#include "dnf/metrics.hpp"
#include "dnf/objectives.hpp"
#include "dnf/rng.hpp"
#include "dnf/scoring.hpp"
#include "dnf/tensor.hpp"
#include "dnf/training.hpp"

#endif  // DNF_DNF_HPP_
