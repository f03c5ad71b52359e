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

#ifndef BNMT_DECODE_HPP_
#define BNMT_DECODE_HPP_

#include <string>
#include <vector>

#include "data.hpp"
#include "json.hpp"
#include "model.hpp"

namespace bnmt {

struct Hypothesis {
  std::vector<int> tokens;  // after BOS; ends with EOS when finished
  double log_prob = 0.0;
  Tensor state;                                // final decoder state [1 x h]
  std::vector<std::vector<double>> attention;  // one row per token
  bool finished = false;

  // log_prob, or log_prob / token count when length_norm is set.
  double score(bool length_norm) const;
};

struct AttentionMatrix {
  Tensor weights;  // [Ty x Tx], real source positions only (EOS included)
  Sentence src_tokens;
  Sentence tgt_tokens;

  std::size_t rows() const { return weights.rows(); }
  std::size_t cols() const { return weights.cols(); }
  nlohmann::ordered_json json() const;
  std::string to_json() const { return json().dump(); }
  // Inverse of json(); kInput on missing fields or ragged rows.
  static AttentionMatrix from_json(const nlohmann::json& j);
};

// 2 x source length + 5; the source length excludes EOS.
std::size_t default_max_out_len(std::size_t src_len);

struct DecodeOptions {
  std::size_t beam_size = 10;
  std::size_t max_out_len = 0;  // 0 selects default_max_out_len
  bool length_norm = false;
};

// PAD and BOS are never generated.
bool generable(int token);

// Log-softmax of each row.
std::vector<std::vector<double>> log_softmax_rows(const Tensor& logits);

// src holds word ids without EOS. Returns the completed pool best first.
std::vector<Hypothesis> beam_search(const ModelParams& params,
                                    const std::vector<int>& src,
                                    const DecodeOptions& options);

Hypothesis greedy_decode(const ModelParams& params, const std::vector<int>& src,
                         std::size_t max_out_len = 0);

// Decodes several sentences in one padded batch; equals greedy_decode on
// each.
std::vector<Hypothesis> greedy_decode_batch(
    const ModelParams& params, const std::vector<std::vector<int>>& srcs,
    std::size_t max_out_len = 0);

struct ForcedResult {
  double nll = 0.0;
  Tensor attention;  // [Ty x Tx]
};

// reference must end with EOS.
ForcedResult force_decode(const ModelParams& params, const std::vector<int>& src,
                          const std::vector<int>& reference);

// One result per pair; targets get EOS appended as in training.
std::vector<ForcedResult> force_decode_batch(
    const ModelParams& params, const std::vector<EncodedPair>& pairs);

AttentionMatrix make_attention_matrix(const Tensor& weights,
                                      const Vocabulary& src_vocab,
                                      const Vocabulary& tgt_vocab,
                                      const std::vector<int>& src,
                                      const std::vector<int>& tgt);

AttentionMatrix hypothesis_attention(const Hypothesis& h,
                                     const Vocabulary& src_vocab,
                                     const Vocabulary& tgt_vocab,
                                     const std::vector<int>& src);

// Per target row, the argmax source column (lowest index on ties).
std::vector<int> hard_align(const Tensor& attention);

}  // namespace bnmt

#endif  // BNMT_DECODE_HPP_
