/* Copyright 2026 The bnmt Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef BNMT_GRADCHECK_HPP_
#define BNMT_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace bnmt {

// Builds a value on the tape from the given input variables. Must be
// deterministic: every call sees the same rng seed. Non-scalar outputs are
// reduced to <R, f> with a fixed random R.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  // |analytic - numeric| / max(|analytic|, |numeric|, floor). Keeps
  // coordinates whose true gradient is ~0 from dividing rounding noise by 0.
  double floor = 1e-8;
  std::uint64_t projection_seed = 17;
};

struct GradCheckGroup {
  std::string name;
  std::vector<double> rel_error;  // per coordinate
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central finite differences against the tape gradient for every coordinate
// of every input. Throws kNumeric, naming the coordinate, on a non-finite
// value.
GradCheckReport grad_check(const TapeFunction& f,
                           std::span<const Tensor> points,
                           std::span<const std::string> names,
                           const GradCheckOptions& options = {});

// Single-input convenience form.
GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f,
                           const Tensor& point,
                           const GradCheckOptions& options = {});

// One primitive op in isolation: f applies only that op to leaf inputs.
struct OpCheck {
  OpKind op;
  TapeFunction f;
  std::vector<Tensor> points;
  std::vector<std::string> names;
};

// A check for every differentiable op kind, inputs drawn from seed.
std::vector<OpCheck> primitive_op_checks(std::uint64_t seed);

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0);

}  // namespace bnmt

#endif  // BNMT_GRADCHECK_HPP_
