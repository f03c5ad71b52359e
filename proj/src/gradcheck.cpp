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

#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace bnmt {

namespace {

double evaluate(const TapeFunction& f, std::span<const Tensor> points,
                const Tensor& projection) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(points.size());
  for (const Tensor& t : points) vars.push_back(tape.constant(t));
  const Tensor& out = f(tape, vars).value();
  if (out.shape != projection.shape) {
    fail(ErrorKind::kDimension, "grad_check: output shape changed to " +
                                    shape_string(out.shape));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += projection.data[i] * out.data[i];
  return s;
}

}  // namespace

GradCheckReport grad_check(const TapeFunction& f,
                           std::span<const Tensor> points,
                           std::span<const std::string> names,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) {
    fail(ErrorKind::kConfig, "grad_check: step must be positive");
  }
  std::vector<Tensor> analytic;
  Tensor projection;
  {
    Tape tape(true);
    std::vector<Var> vars;
    for (const Tensor& t : points) vars.push_back(tape.variable(t));
    Var out = f(tape, vars);
    if (!out.value().all_finite()) {
      fail(ErrorKind::kNumeric, "grad_check: non-finite function value");
    }
    if (out.value().size() == 1) {
      projection = Tensor(out.shape(), 1.0);
    } else {
      Rng rng(options.projection_seed);
      projection = random_tensor(out.shape(), rng);
    }
    tape.backward(out, projection);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe(points.begin(), points.end());
  for (std::size_t g = 0; g < points.size(); ++g) {
    GradCheckGroup group;
    group.name = g < names.size() ? names[g] : "input" + std::to_string(g);
    group.rel_error.resize(points[g].size());
    for (std::size_t i = 0; i < points[g].size(); ++i) {
      const double x0 = points[g].data[i];
      probe[g].data[i] = x0 + options.step;
      const double up = evaluate(f, probe, projection);
      probe[g].data[i] = x0 - options.step;
      const double down = evaluate(f, probe, projection);
      probe[g].data[i] = x0;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[g].data[i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        fail(ErrorKind::kNumeric, "grad_check: non-finite value at " +
                                      group.name + "[" + std::to_string(i) +
                                      "]");
      }
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      group.rel_error[i] = rel;
      if (rel > group.max_rel_error || i == 0) {
        group.max_rel_error = rel;
        group.worst_index = i;
        group.analytic_at_worst = a;
        group.numeric_at_worst = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f,
                           const Tensor& point,
                           const GradCheckOptions& options) {
  const std::string name = "x";
  return grad_check([&f](Tape& t, std::span<const Var> v) { return f(t, v[0]); },
                    std::span<const Tensor>(&point, 1),
                    std::span<const std::string>(&name, 1), options);
}

}  // namespace bnmt

namespace bnmt {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

std::vector<OpCheck> primitive_op_checks(std::uint64_t seed) {
  Rng rng(seed);
  auto rt = [&](Shape s) { return random_tensor(s, rng); };
  std::vector<OpCheck> c;
  using V = std::span<const Var>;

  c.push_back({OpKind::kMatMul, [](Tape&, V v) { return matmul(v[0], v[1]); },
               {rt({3, 4}), rt({4, 2})}, {"a", "b"}});
  c.push_back({OpKind::kAdd, [](Tape&, V v) { return add(v[0], v[1]); },
               {rt({2, 3}), rt({2, 3})}, {"a", "b"}});
  c.push_back({OpKind::kSub, [](Tape&, V v) { return sub(v[0], v[1]); },
               {rt({2, 3}), rt({1})}, {"a", "b"}});
  c.push_back({OpKind::kMul, [](Tape&, V v) { return mul(v[0], v[1]); },
               {rt({2, 3}), rt({2, 3})}, {"a", "b"}});
  c.push_back({OpKind::kTanh, [](Tape&, V v) { return tanh(v[0]); },
               {rt({2, 3})}, {"a"}});
  c.push_back({OpKind::kSigmoid, [](Tape&, V v) { return sigmoid(v[0]); },
               {rt({2, 3})}, {"a"}});
  c.push_back({OpKind::kAddRow, [](Tape&, V v) { return add_row(v[0], v[1]); },
               {rt({3, 4}), rt({4})}, {"a", "row"}});
  c.push_back({OpKind::kScale, [](Tape&, V v) { return scale(v[0], -1.7); },
               {rt({2, 3})}, {"a"}});
  {
    Tensor mask({2, 7}, 1.0);
    mask.at(1, 5) = mask.at(1, 6) = 0.0;
    c.push_back({OpKind::kMaskedSoftmax,
                 [mask](Tape&, V v) { return masked_softmax(v[0], mask); },
                 {rt({2, 7})}, {"logits"}});
  }
  c.push_back({OpKind::kConcat,
               [](Tape&, V v) {
                 const Var cols[2] = {v[0], v[1]};
                 return concat(cols, 1);
               },
               {rt({2, 3}), rt({2, 2})}, {"a", "b"}});
  c.push_back({OpKind::kSliceCols, [](Tape&, V v) { return slice_cols(v[0], 1, 3); },
               {rt({2, 4})}, {"a"}});
  c.push_back({OpKind::kGatherRows,
               [](Tape&, V v) {
                 const int ids[3] = {4, 0, 4};
                 return gather_rows(v[0], ids);
               },
               {rt({5, 2})}, {"table"}});
  c.push_back({OpKind::kSquaredL2, [](Tape&, V v) { return squared_l2(v[0]); },
               {rt({2, 3})}, {"a"}});
  c.push_back({OpKind::kRowSquaredL2, [](Tape&, V v) { return row_squared_l2(v[0]); },
               {rt({3, 2})}, {"a"}});
  c.push_back({OpKind::kSum, [](Tape&, V v) { return sum(v[0]); }, {rt({2, 3})}, {"a"}});
  c.push_back({OpKind::kDropout,
               [](Tape&, V v) {
                 Rng r(5);
                 return dropout(v[0], 0.5, r, true);
               },
               {rt({3, 4})}, {"a"}});
  c.push_back({OpKind::kMaskRows,
               [](Tape&, V v) {
                 const double m[3] = {1.0, 0.0, 1.0};
                 return mask_rows(v[0], m);
               },
               {rt({3, 2})}, {"a"}});
  c.push_back({OpKind::kBlendRows,
               [](Tape&, V v) {
                 const double keep[3] = {1.0, 0.0, 1.0};
                 return blend_rows(v[0], v[1], keep);
               },
               {rt({3, 2}), rt({3, 2})}, {"fresh", "old"}});
  c.push_back({OpKind::kWeightedSum,
               [](Tape&, V v) { return weighted_sum(v[0], v.subspan(1)); },
               {rt({2, 3}), rt({2, 4}), rt({2, 4}), rt({2, 4})},
               {"weights", "p0", "p1", "p2"}});
  c.push_back({OpKind::kPickRows,
               [](Tape&, V v) {
                 const int idx[2] = {2, 0};
                 return pick_rows(v, idx);
               },
               {rt({2, 3}), rt({2, 3}), rt({2, 3})}, {"p0", "p1", "p2"}});
  c.push_back({OpKind::kSoftmaxXent,
               [](Tape&, V v) {
                 const int y[3] = {1, 4, 0};
                 return softmax_xent(v[0], y);
               },
               {rt({3, 5})}, {"logits"}});
  return c;
}

}  // namespace bnmt
