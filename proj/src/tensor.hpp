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

// Dense float64 tensors and a reverse-mode tape.
//
// Values are row-major. Most of the model works on rank-2 tensors where
// rows index the minibatch; rank-1 tensors act as a single row wherever a
// matrix is expected by an elementwise op, but matmul wants rank 2.

#ifndef BNMT_TENSOR_HPP_
#define BNMT_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace bnmt {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // Rank-1 tensors are a single row.
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kTanh,
  kSigmoid,
  kAddRow,
  kScale,
  kMaskedSoftmax,
  kConcat,
  kSliceCols,
  kGatherRows,
  kSquaredL2,
  kRowSquaredL2,
  kSum,
  kDropout,
  kMaskRows,
  kBlendRows,
  kWeightedSum,
  kPickRows,
  kSoftmaxXent,
};

const char* op_name(OpKind kind);
std::optional<OpKind> op_from_name(const std::string& name);

// Test hook: when set, the adjoint of every node of this kind is applied with
// a flipped sign. Used to prove the gradient checker catches broken ops.
void set_adjoint_fault(std::optional<OpKind> kind);
std::optional<OpKind> adjoint_fault();

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const std::vector<double>&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Leaf that never receives a gradient.
  Var constant(Tensor t);
  // Leaf that accumulates a gradient during backward().
  Var variable(Tensor t);

  // Runs the recorded adjoints in strict reverse creation order, seeding
  // d(root) = 1. root must hold exactly one value.
  void backward(Var root);
  // Seeds the root's adjoint with `seed` (same shape as the root).
  void backward(Var root, const Tensor& seed);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  OpKind op(Var v) const { return nodes_[v.id].op; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }
  // Gradient shaped like the value; zeros if nothing reached this node.
  Tensor grad(Var v) const;

  // Accumulation target for adjoints. Allocates zeros on first use.
  std::vector<double>& grad_buffer(Var v);

  // Appends an op node. Inputs decide whether the node needs a gradient; the
  // adjoint is dropped when not recording.
  Var push(OpKind op, Tensor value, std::initializer_list<Var> inputs,
           Backward backward);
  Var push(OpKind op, Tensor value, std::span<const Var> inputs,
           Backward backward);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    OpKind op = OpKind::kLeaf;
    bool needs_grad = false;
  };

  bool recording_;
  std::deque<Node> nodes_;
};

// --- ops -------------------------------------------------------------------

enum class ElemOp { kTanh, kSigmoid, kAdd, kMul, kSub };

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
// Dispatches to the unary or binary op above.
Var elementwise(ElemOp op, std::span<const Var> inputs);

// a [n x m] + row [m], added to every row.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);

// Row-wise softmax restricted to positions where mask != 0. Masked entries
// come out exactly 0.
Var masked_softmax(Var logits, const Tensor& mask);

// axis 0 stacks rows, axis 1 joins columns. Parts must be rank 2 (rank 1 is
// accepted as one row).
Var concat(std::span<const Var> parts, int axis);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var table, std::span<const int> ids);

// Sum of squares, as a scalar.
Var squared_l2(Var a);
// Per-row sum of squares, [n x 1].
Var row_squared_l2(Var a);
Var sum(Var a);

// Inverted dropout; identity when !train or rate == 0.
Var dropout(Var a, double rate, Rng& rng, bool train);

// Multiplies row r by mask[r].
Var mask_rows(Var a, std::span<const double> mask);
// Row r is taken from fresh when keep[r] != 0, else from old.
Var blend_rows(Var fresh, Var old, std::span<const double> keep);
// weights [n x T]; parts: T tensors of [n x d]. Returns sum_j w[:,j] * parts[j].
Var weighted_sum(Var weights, std::span<const Var> parts);
// parts: T tensors of [n x d]. Row r of the result is row r of parts[index[r]].
Var pick_rows(std::span<const Var> parts, std::span<const int> index);
// Per-row -log softmax(logits)[target], [n x 1].
Var softmax_xent(Var logits, std::span<const int> targets);

}  // namespace bnmt

#endif  // BNMT_TENSOR_HPP_
