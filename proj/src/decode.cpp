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

#include "decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace bnmt {

namespace {

Batch source_batch(const std::vector<std::vector<int>>& srcs) {
  std::vector<EncodedPair> pairs;
  pairs.reserve(srcs.size());
  for (const auto& s : srcs) {
    if (s.empty()) fail(ErrorKind::kInput, "cannot decode an empty source sentence");
    pairs.push_back({s, {}});
  }
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(pairs, idx);
}

std::vector<double> row_prefix(const Tensor& m, std::size_t r, std::size_t n) {
  return std::vector<double>(m.data.begin() + r * m.cols(),
                             m.data.begin() + r * m.cols() + n);
}

Tensor row_of(const Tensor& m, std::size_t r) {
  Tensor t({1, m.cols()});
  std::copy_n(m.data.begin() + r * m.cols(), m.cols(), t.data.begin());
  return t;
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  Tensor t({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), t.data.begin() + i * cols);
  }
  return t;
}

}  // namespace

double Hypothesis::score(bool length_norm) const {
  if (!length_norm || tokens.empty()) return log_prob;
  return log_prob / static_cast<double>(tokens.size());
}

nlohmann::ordered_json AttentionMatrix::json() const {
  nlohmann::ordered_json j;
  j["src_tokens"] = src_tokens;
  j["tgt_tokens"] = tgt_tokens;
  auto rows_json = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rows(); ++i) {
    rows_json.push_back(row_prefix(weights, i, cols()));
  }
  j["matrix"] = std::move(rows_json);
  return j;
}

AttentionMatrix AttentionMatrix::from_json(const nlohmann::json& j) {
  AttentionMatrix m;
  try {
    m.src_tokens = j.at("src_tokens").get<Sentence>();
    m.tgt_tokens = j.at("tgt_tokens").get<Sentence>();
    const auto& rows_json = j.at("matrix");
    const std::size_t ty = rows_json.size();
    const std::size_t tx = m.src_tokens.size();
    if (ty != m.tgt_tokens.size()) {
      fail(ErrorKind::kInput, "attention has " + std::to_string(ty) +
                                  " rows for " + std::to_string(m.tgt_tokens.size()) +
                                  " target tokens");
    }
    m.weights = Tensor({ty, tx});
    for (std::size_t i = 0; i < ty; ++i) {
      const auto row = rows_json[i].get<std::vector<double>>();
      if (row.size() != tx) {
        fail(ErrorKind::kInput, "attention row " + std::to_string(i) + " has " +
                                    std::to_string(row.size()) + " entries, want " +
                                    std::to_string(tx));
      }
      std::copy(row.begin(), row.end(), m.weights.data.begin() + i * tx);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInput, std::string("attention record: ") + e.what());
  }
  return m;
}

std::size_t default_max_out_len(std::size_t src_len) { return 2 * src_len + 5; }

bool generable(int token) { return token != kPad && token != kBos; }

std::vector<std::vector<double>> log_softmax_rows(const Tensor& logits) {
  const std::size_t n = logits.rows(), v = logits.cols();
  std::vector<std::vector<double>> out(n, std::vector<double>(v));
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = logits.data.data() + r * v;
    const double m = *std::max_element(x, x + v);
    double s = 0.0;
    for (std::size_t k = 0; k < v; ++k) s += std::exp(x[k] - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < v; ++k) out[r][k] = x[k] - lse;
  }
  return out;
}

std::vector<Hypothesis> beam_search(const ModelParams& params,
                                    const std::vector<int>& src,
                                    const DecodeOptions& options) {
  if (options.beam_size == 0) fail(ErrorKind::kConfig, "beam_size must be at least 1");
  const std::size_t max_out = options.max_out_len ? options.max_out_len
                                                  : default_max_out_len(src.size());
  Tape tape(false);
  BoundParams p(params, tape, false);
  Rng rng(0);
  const Batch b = source_batch({src});
  const EncoderOutput enc1 = encode(p, b.src, b.src_mask);
  const std::size_t tx = enc1.length();

  struct Live {
    std::vector<int> tokens;
    double log_prob;
    std::vector<std::vector<double>> attention;
  };
  std::vector<Live> live{{{}, 0.0, {}}};
  Var states = decoder_init(p, enc1);
  std::vector<Hypothesis> completed;

  for (std::size_t step = 0; step < max_out && !live.empty(); ++step) {
    if (completed.size() >= options.beam_size) break;
    const std::size_t k = options.beam_size - completed.size();
    const std::vector<int> zeros(live.size(), 0);
    const EncoderOutput enc = select_rows(enc1, zeros);
    std::vector<int> y_prev(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      y_prev[i] = live[i].tokens.empty() ? kBos : live[i].tokens.back();
    }
    const DecoderStepOutput out = decoder_step(p, states, y_prev, enc, false, 0.0, rng);
    const auto lp = log_softmax_rows(out.logits.value());

    struct Cand {
      double score;
      std::size_t parent;
      int token;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (std::size_t w = 0; w < lp[i].size(); ++w) {
        if (!generable(static_cast<int>(w))) continue;
        cands.push_back({live[i].log_prob + lp[i][w], i, static_cast<int>(w)});
      }
    }
    const std::size_t keep = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [](const Cand& a, const Cand& c) {
                        if (a.score != c.score) return a.score > c.score;
                        if (a.parent != c.parent) return a.parent < c.parent;
                        return a.token < c.token;
                      });

    const Tensor& alpha = out.alpha.value();
    const Tensor& st = out.state.value();
    std::vector<Live> next;
    std::vector<int> parents;
    for (std::size_t c = 0; c < keep; ++c) {
      const Cand& cd = cands[c];
      Live h = live[cd.parent];
      h.tokens.push_back(cd.token);
      h.log_prob = cd.score;
      h.attention.push_back(row_prefix(alpha, cd.parent, tx));
      const bool eos = cd.token == kEos;
      if (eos || step + 1 == max_out) {
        completed.push_back({std::move(h.tokens), h.log_prob, row_of(st, cd.parent),
                             std::move(h.attention), eos});
      } else {
        next.push_back(std::move(h));
        parents.push_back(static_cast<int>(cd.parent));
      }
    }
    live = std::move(next);
    if (!live.empty()) states = gather_rows(out.state, parents);
  }

  std::stable_sort(completed.begin(), completed.end(),
                   [&](const Hypothesis& a, const Hypothesis& c) {
                     return a.score(options.length_norm) > c.score(options.length_norm);
                   });
  return completed;
}

std::vector<Hypothesis> greedy_decode_batch(
    const ModelParams& params, const std::vector<std::vector<int>>& srcs,
    std::size_t max_out_len) {
  if (srcs.empty()) return {};
  Tape tape(false);
  BoundParams p(params, tape, false);
  Rng rng(0);
  const Batch b = source_batch(srcs);
  const EncoderOutput enc = encode(p, b.src, b.src_mask);
  const std::size_t n = srcs.size(), tx = enc.length();

  std::vector<std::size_t> limit(n);
  std::size_t longest = 0;
  for (std::size_t r = 0; r < n; ++r) {
    limit[r] = max_out_len ? max_out_len : default_max_out_len(srcs[r].size());
    longest = std::max(longest, limit[r]);
  }
  std::vector<Hypothesis> hyps(n);
  std::vector<bool> done(n, false);
  std::vector<std::size_t> real_len(n);
  for (std::size_t r = 0; r < n; ++r) real_len[r] = srcs[r].size() + 1;
  std::vector<int> y_prev(n, kBos);
  Var state = decoder_init(p, enc);
  std::size_t remaining = n;
  for (std::size_t step = 0; step < longest && remaining > 0; ++step) {
    const DecoderStepOutput out = decoder_step(p, state, y_prev, enc, false, 0.0, rng);
    const auto lp = log_softmax_rows(out.logits.value());
    for (std::size_t r = 0; r < n; ++r) {
      if (done[r]) continue;
      int best = -1;
      for (std::size_t w = 0; w < lp[r].size(); ++w) {
        if (!generable(static_cast<int>(w))) continue;
        if (best < 0 || lp[r][w] > lp[r][best]) best = static_cast<int>(w);
      }
      Hypothesis& h = hyps[r];
      h.tokens.push_back(best);
      h.log_prob += lp[r][best];
      h.attention.push_back(row_prefix(out.alpha.value(), r, tx));
      h.attention.back().resize(real_len[r]);
      y_prev[r] = best;
      if (best == kEos || h.tokens.size() == limit[r]) {
        h.finished = best == kEos;
        h.state = row_of(out.state.value(), r);
        done[r] = true;
        --remaining;
      }
    }
    state = out.state;
  }
  return hyps;
}

Hypothesis greedy_decode(const ModelParams& params, const std::vector<int>& src,
                         std::size_t max_out_len) {
  return greedy_decode_batch(params, {src}, max_out_len).front();
}

std::vector<ForcedResult> force_decode_batch(
    const ModelParams& params, const std::vector<EncodedPair>& pairs) {
  if (pairs.empty()) return {};
  for (const auto& pr : pairs) {
    if (pr.src.empty()) fail(ErrorKind::kInput, "cannot decode an empty source sentence");
  }
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Batch b = make_batch(pairs, idx);
  Tape tape(false);
  BoundParams p(params, tape, false);
  Rng rng(0);
  const EncoderOutput enc = encode(p, b.src, b.src_mask);
  const std::size_t n = pairs.size();

  std::vector<ForcedResult> res(n);
  std::vector<std::vector<std::vector<double>>> rows(n);
  Var state = decoder_init(p, enc);
  std::vector<int> y_prev(n, kBos);
  for (std::size_t t = 0; t < b.tgt.cols; ++t) {
    const std::vector<int> y = b.tgt.column(t);
    const DecoderStepOutput out = decoder_step(p, state, y_prev, enc, false, 0.0, rng);
    const auto lp = log_softmax_rows(out.logits.value());
    for (std::size_t r = 0; r < n; ++r) {
      if (b.tgt_mask.at(r, t) == 0.0) continue;
      res[r].nll -= lp[r][y[r]];
      rows[r].push_back(row_prefix(out.alpha.value(), r, pairs[r].src.size() + 1));
    }
    state = out.state;
    y_prev = y;
  }
  for (std::size_t r = 0; r < n; ++r) {
    res[r].attention = stack_rows(rows[r], pairs[r].src.size() + 1);
  }
  return res;
}

ForcedResult force_decode(const ModelParams& params, const std::vector<int>& src,
                          const std::vector<int>& reference) {
  if (reference.empty()) fail(ErrorKind::kInput, "force_decode: empty reference");
  if (reference.back() != kEos) {
    fail(ErrorKind::kInput, "force_decode: reference must end with EOS");
  }
  EncodedPair pr{src, std::vector<int>(reference.begin(), reference.end() - 1)};
  return force_decode_batch(params, {pr}).front();
}

AttentionMatrix make_attention_matrix(const Tensor& weights,
                                      const Vocabulary& src_vocab,
                                      const Vocabulary& tgt_vocab,
                                      const std::vector<int>& src,
                                      const std::vector<int>& tgt) {
  AttentionMatrix m;
  m.weights = weights;
  std::vector<int> s = src;
  s.push_back(kEos);
  m.src_tokens = src_vocab.decode(s);
  std::vector<int> t = tgt;
  if (t.empty() || t.back() != kEos) t.push_back(kEos);
  if (t.size() != weights.rows()) t.resize(weights.rows(), kEos);
  m.tgt_tokens = tgt_vocab.decode(t);
  return m;
}

AttentionMatrix hypothesis_attention(const Hypothesis& h,
                                     const Vocabulary& src_vocab,
                                     const Vocabulary& tgt_vocab,
                                     const std::vector<int>& src) {
  AttentionMatrix m;
  m.weights = stack_rows(h.attention, src.size() + 1);
  std::vector<int> s = src;
  s.push_back(kEos);
  m.src_tokens = src_vocab.decode(s);
  m.tgt_tokens = tgt_vocab.decode(h.tokens);
  return m;
}

std::vector<int> hard_align(const Tensor& attention) {
  std::vector<int> out(attention.rows());
  for (std::size_t i = 0; i < attention.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < attention.cols(); ++j) {
      if (attention.at(i, j) > attention.at(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace bnmt
