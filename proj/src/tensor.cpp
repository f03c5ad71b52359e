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

#include "tensor.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <sstream>
#include <utility>

namespace bnmt {

namespace {

std::atomic<int> g_adjoint_fault{-1};

constexpr std::array<const char*, 22> kOpNames = {
    "leaf",        "matmul",         "add",         "sub",
    "mul",         "tanh",           "sigmoid",     "add_row",
    "scale",       "masked_softmax", "concat",      "slice_cols",
    "gather_rows", "squared_l2",     "row_squared_l2", "sum",
    "dropout",     "mask_rows",      "blend_rows",  "weighted_sum",
    "pick_rows",   "softmax_xent",
};

[[noreturn]] void dimension_error(const char* op, const Shape& a,
                                  const Shape& b) {
  fail(ErrorKind::kDimension, std::string(op) + ": incompatible shapes " +
                                  shape_string(a) + " and " + shape_string(b));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 1 && t.rank() != 2) {
    fail(ErrorKind::kDimension,
         std::string(op) + ": expected a matrix, got " + shape_string(t.shape));
  }
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

// Shared body of add/sub/mul: equal shapes or one scalar side.
template <typename Fwd, typename DA, typename DB>
Var binary(OpKind kind, Var a, Var b, Fwd fwd, DA da, DB db) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const bool same = x.shape == y.shape;
  const bool xs = x.size() == 1;
  const bool ys = y.size() == 1;
  if (!same && !xs && !ys) dimension_error(op_name(kind), x.shape, y.shape);
  const Shape out_shape = (same || ys) ? x.shape : y.shape;
  Tensor out(out_shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = fwd(x.data[xs ? 0 : i], y.data[ys ? 0 : i]);
  }
  return a.tape->push(
      kind, std::move(out), {a, b},
      [a, b, xs, ys, n, da, db](Tape& tape, const std::vector<double>& g) {
        const Tensor& x = tape.value(a);
        const Tensor& y = tape.value(b);
        if (tape.needs_grad(a)) {
          auto& ga = tape.grad_buffer(a);
          for (std::size_t i = 0; i < n; ++i) {
            ga[xs ? 0 : i] +=
                g[i] * da(x.data[xs ? 0 : i], y.data[ys ? 0 : i]);
          }
        }
        if (tape.needs_grad(b)) {
          auto& gb = tape.grad_buffer(b);
          for (std::size_t i = 0; i < n; ++i) {
            gb[ys ? 0 : i] +=
                g[i] * db(x.data[xs ? 0 : i], y.data[ys ? 0 : i]);
          }
        }
      });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) {
    fail(ErrorKind::kDimension, "tensor of shape " + shape_string(shape) +
                                    " given " + std::to_string(data.size()) +
                                    " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(matrix_shape(rows, cols), std::move(values));
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

const char* op_name(OpKind kind) {
  return kOpNames[static_cast<std::size_t>(kind)];
}

std::optional<OpKind> op_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (name == kOpNames[i]) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

void set_adjoint_fault(std::optional<OpKind> kind) {
  g_adjoint_fault = kind ? static_cast<int>(*kind) : -1;
}

std::optional<OpKind> adjoint_fault() {
  const int v = g_adjoint_fault;
  if (v < 0) return std::nullopt;
  return static_cast<OpKind>(v);
}

const Tensor& Var::value() const { return tape->value(*this); }

// --- Tape ------------------------------------------------------------------

Var Tape::constant(Tensor t) {
  nodes_.push_back(Node{std::move(t), {}, {}, OpKind::kLeaf, false});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor t) {
  nodes_.push_back(Node{std::move(t), {}, {}, OpKind::kLeaf, recording_});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push(OpKind op, Tensor value, std::initializer_list<Var> inputs,
               Backward backward) {
  return push(op, std::move(value),
              std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Var Tape::push(OpKind op, Tensor value, std::span<const Var> inputs,
               Backward backward) {
  bool needs = false;
  if (recording_) {
    for (const Var& v : inputs) {
      if (v.tape != this) {
        fail(ErrorKind::kDimension, std::string(op_name(op)) +
                                        ": input recorded on another tape");
      }
      needs = needs || nodes_[v.id].needs_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {},
                        needs ? std::move(backward) : Backward{}, op, needs});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(n.value.shape);
  return Tensor(n.value.shape, n.grad);
}

void Tape::backward(Var root) {
  if (!recording_) {
    fail(ErrorKind::kConfig, "backward() on a tape that is not recording");
  }
  if (value(root).size() != 1) {
    fail(ErrorKind::kDimension, "backward() root must be a scalar, got " +
                                    shape_string(value(root).shape));
  }
  backward(root, Tensor::scalar(1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  if (!recording_) {
    fail(ErrorKind::kConfig, "backward() on a tape that is not recording");
  }
  if (seed.shape != value(root).shape) {
    fail(ErrorKind::kDimension, "backward() seed has shape " +
                                    shape_string(seed.shape) + ", root has " +
                                    shape_string(value(root).shape));
  }
  std::vector<double>& g = grad_buffer(root);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += seed.data[k];
  const auto fault = adjoint_fault();
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    if (fault && *fault == n.op) {
      std::vector<double> flipped(n.grad.size());
      for (std::size_t k = 0; k < flipped.size(); ++k) flipped[k] = -n.grad[k];
      n.backward(*this, flipped);
    } else {
      n.backward(*this, n.grad);
    }
  }
}

// --- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  return binary(
      OpKind::kAdd, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      OpKind::kSub, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      OpKind::kMul, a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var tanh(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::tanh(x.data[i]);
  return a.tape->push(OpKind::kTanh, std::move(out), {a},
                      [a, id = a.tape->size()](Tape& tape,
                                               const std::vector<double>& g) {
                        const Tensor& y =
                            tape.value(Var{&tape, static_cast<std::uint32_t>(id)});
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          ga[i] += g[i] * (1.0 - y.data[i] * y.data[i]);
                        }
                      });
}

Var sigmoid(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
  }
  return a.tape->push(OpKind::kSigmoid, std::move(out), {a},
                      [a, id = a.tape->size()](Tape& tape,
                                               const std::vector<double>& g) {
                        const Tensor& y =
                            tape.value(Var{&tape, static_cast<std::uint32_t>(id)});
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          ga[i] += g[i] * y.data[i] * (1.0 - y.data[i]);
                        }
                      });
}

Var elementwise(ElemOp op, std::span<const Var> inputs) {
  const bool unary = op == ElemOp::kTanh || op == ElemOp::kSigmoid;
  if (inputs.size() != (unary ? 1u : 2u)) {
    fail(ErrorKind::kDimension, "elementwise: wrong number of inputs (" +
                                    std::to_string(inputs.size()) + ")");
  }
  switch (op) {
    case ElemOp::kTanh: return tanh(inputs[0]);
    case ElemOp::kSigmoid: return sigmoid(inputs[0]);
    case ElemOp::kAdd: return add(inputs[0], inputs[1]);
    case ElemOp::kMul: return mul(inputs[0], inputs[1]);
    case ElemOp::kSub: return sub(inputs[0], inputs[1]);
  }
  return inputs[0];
}

Var add_row(Var a, Var row) {
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  require_matrix("add_row", x);
  if (r.size() != x.cols()) dimension_error("add_row", x.shape, r.shape);
  Tensor out = x;
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] += r.data[j];
  }
  return a.tape->push(
      OpKind::kAddRow, std::move(out), {a, row},
      [a, row, rows, cols](Tape& tape, const std::vector<double>& g) {
        if (tape.needs_grad(a)) {
          auto& ga = tape.grad_buffer(a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tape.needs_grad(row)) {
          auto& gr = tape.grad_buffer(row);
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) gr[j] += g[i * cols + j];
          }
        }
      });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data) v *= factor;
  return a.tape->push(OpKind::kScale, std::move(out), {a},
                      [a, factor](Tape& tape, const std::vector<double>& g) {
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          ga[i] += g[i] * factor;
                        }
                      });
}

// --- matmul ----------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.shape[1] != y.shape[0]) {
    dimension_error("matmul", x.shape, y.shape);
  }
  const std::size_t m = x.shape[0], k = x.shape[1], n = y.shape[1];
  Tensor out(matrix_shape(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    double* o = &out.data[i * n];
    const double* xr = &x.data[i * k];
    for (std::size_t p = 0; p < k; ++p) {
      const double s = xr[p];
      const double* yr = &y.data[p * n];
      for (std::size_t j = 0; j < n; ++j) o[j] += s * yr[j];
    }
  }
  return a.tape->push(
      OpKind::kMatMul, std::move(out), {a, b},
      [a, b, m, k, n](Tape& tape, const std::vector<double>& g) {
        const Tensor& x = tape.value(a);
        const Tensor& y = tape.value(b);
        if (tape.needs_grad(a)) {
          auto& ga = tape.grad_buffer(a);
          std::vector<double> yt(n * k);
          for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < n; ++j) yt[j * k + p] = y.data[p * n + j];
          }
          for (std::size_t i = 0; i < m; ++i) {
            const double* gr = &g[i * n];
            double* o = &ga[i * k];
            for (std::size_t j = 0; j < n; ++j) {
              const double s = gr[j];
              if (s == 0.0) continue;
              const double* yr = &yt[j * k];
              for (std::size_t p = 0; p < k; ++p) o[p] += s * yr[p];
            }
          }
        }
        if (tape.needs_grad(b)) {
          auto& gb = tape.grad_buffer(b);
          for (std::size_t i = 0; i < m; ++i) {
            const double* gr = &g[i * n];
            const double* xr = &x.data[i * k];
            for (std::size_t p = 0; p < k; ++p) {
              const double s = xr[p];
              double* o = &gb[p * n];
              for (std::size_t j = 0; j < n; ++j) o[j] += s * gr[j];
            }
          }
        }
      });
}

// --- softmax ----------------------------------------------------------------

Var masked_softmax(Var logits, const Tensor& mask) {
  const Tensor& x = logits.value();
  require_matrix("masked_softmax", x);
  if (mask.shape != x.shape) {
    dimension_error("masked_softmax", x.shape, mask.shape);
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x.data[r * cols];
    const double* mr = &mask.data[r * cols];
    double* o = &out.data[r * cols];
    double mx = -INFINITY;
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (mr[j] != 0.0) {
        mx = any ? std::max(mx, xr[j]) : xr[j];
        any = true;
      }
    }
    if (!any) {
      fail(ErrorKind::kDegenerateMask,
           "masked_softmax: row " + std::to_string(r) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (mr[j] != 0.0) {
        o[j] = std::exp(xr[j] - mx);
        z += o[j];
      }
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (mr[j] != 0.0) o[j] /= z;
    }
  }
  return logits.tape->push(
      OpKind::kMaskedSoftmax, std::move(out), {logits},
      [logits, rows, cols, id = logits.tape->size()](
          Tape& tape, const std::vector<double>& g) {
        const Tensor& y = tape.value(Var{&tape, static_cast<std::uint32_t>(id)});
        auto& gx = tape.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* yr = &y.data[r * cols];
          const double* gr = &g[r * cols];
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
          // Masked outputs are exactly 0, so their adjoint vanishes.
          for (std::size_t j = 0; j < cols; ++j) {
            gx[r * cols + j] += yr[j] * (gr[j] - dot);
          }
        }
      });
}

Var softmax_xent(Var logits, std::span<const int> targets) {
  const Tensor& x = logits.value();
  require_matrix("softmax_xent", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (targets.size() != rows) {
    dimension_error("softmax_xent", x.shape, Shape{targets.size()});
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  for (int t : tgt) {
    if (t < 0 || static_cast<std::size_t>(t) >= cols) {
      fail(ErrorKind::kLookup, "softmax_xent: target id " + std::to_string(t) +
                                   " outside [0, " + std::to_string(cols) + ")");
    }
  }
  Tensor out(matrix_shape(rows, 1));
  std::vector<double> lse(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x.data[r * cols];
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(xr[j] - mx);
    lse[r] = mx + std::log(z);
    out.data[r] = lse[r] - xr[tgt[r]];
  }
  return logits.tape->push(
      OpKind::kSoftmaxXent, std::move(out), {logits},
      [logits, rows, cols, tgt = std::move(tgt), lse = std::move(lse)](
          Tape& tape, const std::vector<double>& g) {
        const Tensor& x = tape.value(logits);
        auto& gx = tape.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) {
            gx[r * cols + j] += g[r] * std::exp(x.data[r * cols + j] - lse[r]);
          }
          gx[r * cols + tgt[r]] -= g[r];
        }
      });
}

// --- structural -------------------------------------------------------------

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) fail(ErrorKind::kDimension, "concat: no inputs");
  if (axis != 0 && axis != 1) {
    fail(ErrorKind::kDimension, "concat: axis must be 0 or 1");
  }
  Tape* tape = parts[0].tape;
  const Tensor& first = parts[0].value();
  require_matrix("concat", first);
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    require_matrix("concat", t);
    if (axis == 1) {
      if (t.rows() != first.rows()) dimension_error("concat", first.shape, t.shape);
      cols += t.cols();
      rows = t.rows();
    } else {
      if (t.cols() != first.cols()) dimension_error("concat", first.shape, t.shape);
      rows += t.rows();
      cols = t.cols();
    }
  }
  Tensor out(matrix_shape(rows, cols));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    offsets.push_back(off);
    if (axis == 1) {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(&t.data[r * t.cols()], t.cols(), &out.data[r * cols + off]);
      }
      off += t.cols();
    } else {
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + off * cols);
      off += t.rows();
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape->push(
      OpKind::kConcat, std::move(out), parts,
      [inputs, offsets, axis, rows, cols](Tape& tape,
                                          const std::vector<double>& g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const Var& p = inputs[k];
          if (!tape.needs_grad(p)) continue;
          const Tensor& t = tape.value(p);
          auto& gp = tape.grad_buffer(p);
          if (axis == 1) {
            const std::size_t pc = t.cols();
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < pc; ++j) {
                gp[r * pc + j] += g[r * cols + offsets[k] + j];
              }
            }
          } else {
            const std::size_t base = offsets[k] * cols;
            for (std::size_t i = 0; i < t.size(); ++i) gp[i] += g[base + i];
          }
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix("slice_cols", x);
  if (begin >= end || end > x.cols()) {
    fail(ErrorKind::kDimension, "slice_cols: range [" + std::to_string(begin) +
                                    ", " + std::to_string(end) + ") outside " +
                                    shape_string(x.shape));
  }
  const std::size_t rows = x.rows(), cols = x.cols(), w = end - begin;
  Tensor out(matrix_shape(rows, w));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(&x.data[r * cols + begin], w, &out.data[r * w]);
  }
  return a.tape->push(OpKind::kSliceCols, std::move(out), {a},
                      [a, rows, cols, begin, w](Tape& tape,
                                                const std::vector<double>& g) {
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t j = 0; j < w; ++j) {
                            ga[r * cols + begin + j] += g[r * w + j];
                          }
                        }
                      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& t = table.value();
  if (t.rank() != 2) {
    fail(ErrorKind::kDimension,
         "gather_rows: table must be rank 2, got " + shape_string(t.shape));
  }
  const std::size_t n_rows = t.shape[0], cols = t.shape[1];
  std::vector<int> idx(ids.begin(), ids.end());
  Tensor out(matrix_shape(idx.size(), cols));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n_rows) {
      fail(ErrorKind::kLookup, "gather_rows: id " + std::to_string(idx[i]) +
                                   " outside table of " +
                                   std::to_string(n_rows) + " rows");
    }
    std::copy_n(&t.data[idx[i] * cols], cols, &out.data[i * cols]);
  }
  return table.tape->push(
      OpKind::kGatherRows, std::move(out), {table},
      [table, cols, idx = std::move(idx)](Tape& tape,
                                          const std::vector<double>& g) {
        auto& gt = tape.grad_buffer(table);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double* dst = &gt[idx[i] * cols];
          for (std::size_t j = 0; j < cols; ++j) dst[j] += g[i * cols + j];
        }
      });
}

// --- reductions -------------------------------------------------------------

Var squared_l2(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data) s += v * v;
  return a.tape->push(OpKind::kSquaredL2, Tensor::scalar(s), {a},
                      [a](Tape& tape, const std::vector<double>& g) {
                        const Tensor& x = tape.value(a);
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t i = 0; i < x.size(); ++i) {
                          ga[i] += 2.0 * x.data[i] * g[0];
                        }
                      });
}

Var row_squared_l2(Var a) {
  const Tensor& x = a.value();
  require_matrix("row_squared_l2", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(matrix_shape(rows, 1));
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = x.data[r * cols + j];
      s += v * v;
    }
    out.data[r] = s;
  }
  return a.tape->push(OpKind::kRowSquaredL2, std::move(out), {a},
                      [a, rows, cols](Tape& tape, const std::vector<double>& g) {
                        const Tensor& x = tape.value(a);
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t j = 0; j < cols; ++j) {
                            ga[r * cols + j] += 2.0 * x.data[r * cols + j] * g[r];
                          }
                        }
                      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.tape->push(OpKind::kSum, Tensor::scalar(s), {a},
                      [a](Tape& tape, const std::vector<double>& g) {
                        auto& ga = tape.grad_buffer(a);
                        for (double& v : ga) v += g[0];
                      });
}

// --- dropout and row routing -----------------------------------------------

Var dropout(Var a, double rate, Rng& rng, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    fail(ErrorKind::kConfig,
         "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return a;
  const Tensor& x = a.value();
  std::vector<double> keep(x.size());
  const double inv = 1.0 / (1.0 - rate);
  for (double& k : keep) k = rng.uniform() < rate ? 0.0 : inv;
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * keep[i];
  return a.tape->push(OpKind::kDropout, std::move(out), {a},
                      [a, keep = std::move(keep)](Tape& tape,
                                                  const std::vector<double>& g) {
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          ga[i] += g[i] * keep[i];
                        }
                      });
}

Var mask_rows(Var a, std::span<const double> mask) {
  const Tensor& x = a.value();
  require_matrix("mask_rows", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (mask.size() != rows) dimension_error("mask_rows", x.shape, Shape{mask.size()});
  std::vector<double> m(mask.begin(), mask.end());
  Tensor out(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      out.data[r * cols + j] = x.data[r * cols + j] * m[r];
    }
  }
  return a.tape->push(OpKind::kMaskRows, std::move(out), {a},
                      [a, cols, m = std::move(m)](Tape& tape,
                                                  const std::vector<double>& g) {
                        auto& ga = tape.grad_buffer(a);
                        for (std::size_t r = 0; r < m.size(); ++r) {
                          for (std::size_t j = 0; j < cols; ++j) {
                            ga[r * cols + j] += g[r * cols + j] * m[r];
                          }
                        }
                      });
}

Var blend_rows(Var fresh, Var old, std::span<const double> keep) {
  const Tensor& x = fresh.value();
  const Tensor& y = old.value();
  if (x.shape != y.shape) dimension_error("blend_rows", x.shape, y.shape);
  require_matrix("blend_rows", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (keep.size() != rows) dimension_error("blend_rows", x.shape, Shape{keep.size()});
  std::vector<char> take(rows);
  for (std::size_t r = 0; r < rows; ++r) take[r] = keep[r] != 0.0;
  Tensor out(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const Tensor& src = take[r] ? x : y;
    std::copy_n(&src.data[r * cols], cols, &out.data[r * cols]);
  }
  return fresh.tape->push(
      OpKind::kBlendRows, std::move(out), {fresh, old},
      [fresh, old, cols, take = std::move(take)](Tape& tape,
                                                 const std::vector<double>& g) {
        for (int side = 0; side < 2; ++side) {
          const Var& v = side == 0 ? fresh : old;
          if (!tape.needs_grad(v)) continue;
          auto& gv = tape.grad_buffer(v);
          for (std::size_t r = 0; r < take.size(); ++r) {
            if ((take[r] != 0) != (side == 0)) continue;
            for (std::size_t j = 0; j < cols; ++j) {
              gv[r * cols + j] += g[r * cols + j];
            }
          }
        }
      });
}

Var weighted_sum(Var weights, std::span<const Var> parts) {
  const Tensor& w = weights.value();
  require_matrix("weighted_sum", w);
  const std::size_t rows = w.rows(), steps = w.cols();
  if (parts.size() != steps) {
    dimension_error("weighted_sum", w.shape, Shape{parts.size()});
  }
  const std::size_t dim = parts[0].value().cols();
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    if (t.rows() != rows || t.cols() != dim) {
      dimension_error("weighted_sum", parts[0].value().shape, t.shape);
    }
  }
  Tensor out(matrix_shape(rows, dim));
  for (std::size_t j = 0; j < steps; ++j) {
    const Tensor& t = parts[j].value();
    for (std::size_t r = 0; r < rows; ++r) {
      const double a = w.data[r * steps + j];
      const double* src = &t.data[r * dim];
      double* o = &out.data[r * dim];
      for (std::size_t k = 0; k < dim; ++k) o[k] += a * src[k];
    }
  }
  std::vector<Var> inputs;
  inputs.reserve(parts.size() + 1);
  inputs.push_back(weights);
  inputs.insert(inputs.end(), parts.begin(), parts.end());
  return weights.tape->push(
      OpKind::kWeightedSum, std::move(out), inputs,
      [inputs, rows, steps, dim](Tape& tape, const std::vector<double>& g) {
        const Var weights = inputs[0];
        const Tensor& w = tape.value(weights);
        const bool gw_needed = tape.needs_grad(weights);
        for (std::size_t j = 0; j < steps; ++j) {
          const Var part = inputs[j + 1];
          const Tensor& t = tape.value(part);
          if (gw_needed) {
            auto& gw = tape.grad_buffer(weights);
            for (std::size_t r = 0; r < rows; ++r) {
              double acc = 0.0;
              for (std::size_t k = 0; k < dim; ++k) {
                acc += g[r * dim + k] * t.data[r * dim + k];
              }
              gw[r * steps + j] += acc;
            }
          }
          if (tape.needs_grad(part)) {
            auto& gp = tape.grad_buffer(part);
            for (std::size_t r = 0; r < rows; ++r) {
              const double a = w.data[r * steps + j];
              for (std::size_t k = 0; k < dim; ++k) {
                gp[r * dim + k] += a * g[r * dim + k];
              }
            }
          }
        }
      });
}

Var pick_rows(std::span<const Var> parts, std::span<const int> index) {
  if (parts.empty()) fail(ErrorKind::kDimension, "pick_rows: no inputs");
  const Tensor& first = parts[0].value();
  require_matrix("pick_rows", first);
  const std::size_t rows = first.rows(), cols = first.cols();
  if (index.size() != rows) {
    dimension_error("pick_rows", first.shape, Shape{index.size()});
  }
  for (const Var& p : parts) {
    if (p.value().shape != first.shape) {
      dimension_error("pick_rows", first.shape, p.value().shape);
    }
  }
  std::vector<int> idx(index.begin(), index.end());
  Tensor out(first.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= parts.size()) {
      fail(ErrorKind::kLookup, "pick_rows: index " + std::to_string(idx[r]) +
                                   " outside " + std::to_string(parts.size()) +
                                   " parts");
    }
    std::copy_n(&parts[idx[r]].value().data[r * cols], cols,
                &out.data[r * cols]);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->push(
      OpKind::kPickRows, std::move(out), parts,
      [inputs, cols, idx = std::move(idx)](Tape& tape,
                                           const std::vector<double>& g) {
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const Var& p = inputs[idx[r]];
          if (!tape.needs_grad(p)) continue;
          auto& gp = tape.grad_buffer(p);
          for (std::size_t j = 0; j < cols; ++j) {
            gp[r * cols + j] += g[r * cols + j];
          }
        }
      });
}

}  // namespace bnmt
