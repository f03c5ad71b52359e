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

// Attention encoder-decoder with the three embedding-bridging wirings.
//
// Row convention: activations are [batch x dim] and weights multiply on the
// right, so every weight matrix is stored as [in x out].
//
//   encoder   bidirectional GRU; annotation_j = [fwd_j; bwd_j] or, for the
//             source/direct bridge, [fwd_j; bwd_j; x_j]
//   decoder   conditional GRU: s~ = GRU1(s_prev, y_prev); attention on s~;
//             s = GRU2(s~, c) with [c; x_t*] as input for the target bridge
//   readout   r = tanh(s U + y_prev V + c C + b); logits = r W + b_out
//   bridge    direct bridge only: x W approximates the aligned target
//             embedding

#ifndef BNMT_MODEL_HPP_
#define BNMT_MODEL_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace bnmt {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kEos = 2;
inline constexpr int kBos = 3;
inline constexpr int kNumReserved = 4;

enum class Variant { kBaseline, kSourceBridge, kTargetBridge, kDirectBridge };

const char* variant_name(Variant v);  // "baseline", "source-bridge", ...
Variant parse_variant(const std::string& name);

struct ModelConfig {
  std::size_t embed_dim = 620;
  std::size_t hidden_dim = 1000;
  std::size_t attention_dim = 0;  // 0 means hidden_dim
  std::size_t readout_dim = 400;
  std::size_t src_vocab_size = 30000;
  std::size_t tgt_vocab_size = 30000;
  std::size_t max_len = 50;
  Variant variant = Variant::kBaseline;

  std::size_t attention_size() const {
    return attention_dim ? attention_dim : hidden_dim;
  }
  bool annotations_carry_embedding() const {
    return variant == Variant::kSourceBridge ||
           variant == Variant::kDirectBridge;
  }
  std::size_t annotation_dim() const {
    return 2 * hidden_dim + (annotations_carry_embedding() ? embed_dim : 0);
  }
  std::size_t gru2_input_dim() const {
    return annotation_dim() +
           (variant == Variant::kTargetBridge ? embed_dim : 0);
  }
  bool has_bridge_matrix() const { return variant == Variant::kDirectBridge; }

  // Throws kConfig on a zero dimension or a vocabulary that cannot hold the
  // reserved ids.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Named parameter tensors in a fixed canonical order.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(ModelConfig config) : config_(config) {}

  const ModelConfig& config() const { return config_; }

  void add(std::string name, Tensor t);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  using Entry = std::pair<std::string, Tensor>;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t total_size() const;

  bool operator==(const ModelParams& o) const {
    return config_ == o.config_ && entries_ == o.entries_;
  }

 private:
  ModelConfig config_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// (name, shape) of every parameter for this config, in canonical order.
std::vector<std::pair<std::string, Shape>> param_layout(
    const ModelConfig& config);

inline constexpr double kDefaultInitScale = 0.05;

// Weights ~ U(-scale, scale), biases 0, bridge W = I + U(-0.01, 0.01).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed,
                        double scale = kDefaultInitScale);

std::uint64_t count_params(const ModelConfig& config, Variant variant);

// Token ids laid out [rows x cols].
struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> data;

  IdMatrix() = default;
  IdMatrix(std::size_t r, std::size_t c, int fill = kPad)
      : rows(r), cols(c), data(r * c, fill) {}
  int& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  int at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::vector<int> column(std::size_t c) const;
};

// Parameters placed on a tape, either as gradient-receiving variables or as
// constants for inference.
class BoundParams {
 public:
  BoundParams(const ModelParams& params, Tape& tape, bool trainable);
  // Binds existing tape values, one per entry of params in layout order.
  BoundParams(const ModelParams& params, Tape& tape, std::span<const Var> vars);

  const ModelConfig& config() const { return *config_; }
  Tape& tape() const { return *tape_; }
  Var operator[](const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& vars() const { return vars_; }

 private:
  const ModelConfig* config_;
  Tape* tape_;
  std::vector<std::pair<std::string, Var>> vars_;
  std::map<std::string, Var> index_;
};

struct EncoderOutput {
  std::vector<Var> annotations;  // per position, [batch x annotation_dim]
  std::vector<Var> src_embeds;   // per position, [batch x embed_dim]
  std::vector<Var> keys;         // per position, annotation U_a + b_a
  Tensor mask;                   // [batch x length]

  std::size_t batch() const { return mask.rows(); }
  std::size_t length() const { return mask.cols(); }
  std::vector<double> mask_column(std::size_t j) const;
};

struct AttentionResult {
  Var alpha;    // [batch x length]
  Var context;  // [batch x annotation_dim]
};

struct DecoderStepOutput {
  Var state;        // s_t
  Var state_tilde;  // intermediate GRU1 state
  Var alpha;
  Var context;
  Var logits;
  Var prev_embed;   // target embedding of y_prev
  std::vector<int> t_star;
};

// src_mask marks real positions (including the terminating EOS) with 1 and
// trailing padding with 0.
EncoderOutput encode(const BoundParams& p, const IdMatrix& src_ids,
                     const Tensor& src_mask);

// Keeps only the listed batch rows (repeats allowed).
EncoderOutput select_rows(const EncoderOutput& enc, std::span<const int> rows);

AttentionResult attend(const BoundParams& p, Var s_tilde,
                       const EncoderOutput& enc);

Var decoder_init(const BoundParams& p, const EncoderOutput& enc);

DecoderStepOutput decoder_step(const BoundParams& p, Var s_prev,
                               std::span<const int> y_prev,
                               const EncoderOutput& enc, bool train,
                               double dropout_rate, Rng& rng);

// Lowest index among the maximal unmasked entries of each row.
std::vector<int> argmax_rows(const Tensor& alpha, const Tensor& mask);

// W x for a source word; kVariant error when the model has no W.
std::vector<double> bridge_transform(const ModelParams& params,
                                     int src_word_id);

}  // namespace bnmt

#endif  // BNMT_MODEL_HPP_
