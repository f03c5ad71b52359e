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

#include "model.hpp"

#include <algorithm>

namespace bnmt {

namespace {

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "b" || leaf == "bx";
}

void add_gru_layout(std::vector<std::pair<std::string, Shape>>& out,
                    const std::string& prefix, std::size_t in, std::size_t h) {
  out.emplace_back(prefix + ".W", Shape{in, 2 * h});
  out.emplace_back(prefix + ".U", Shape{h, 2 * h});
  out.emplace_back(prefix + ".b", Shape{2 * h});
  out.emplace_back(prefix + ".Wx", Shape{in, h});
  out.emplace_back(prefix + ".Ux", Shape{h, h});
  out.emplace_back(prefix + ".bx", Shape{h});
}

struct GruVars {
  Var W, U, b, Wx, Ux, bx;
};

GruVars gru_vars(const BoundParams& p, const std::string& prefix) {
  return {p[prefix + ".W"],  p[prefix + ".U"],  p[prefix + ".b"],
          p[prefix + ".Wx"], p[prefix + ".Ux"], p[prefix + ".bx"]};
}

// h' = z * h + (1 - z) * tanh(x Wx + bx + r * (h Ux)), with [r; z] gates.
Var gru(const GruVars& g, std::size_t hidden, Var x, Var h) {
  Var gates = sigmoid(add_row(add(matmul(x, g.W), matmul(h, g.U)), g.b));
  Var r = slice_cols(gates, 0, hidden);
  Var z = slice_cols(gates, hidden, 2 * hidden);
  Var cand = tanh(add(add_row(matmul(x, g.Wx), g.bx), mul(r, matmul(h, g.Ux))));
  return add(cand, mul(z, sub(h, cand)));
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kSourceBridge: return "source-bridge";
    case Variant::kTargetBridge: return "target-bridge";
    case Variant::kDirectBridge: return "direct-bridge";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kBaseline, Variant::kSourceBridge,
                    Variant::kTargetBridge, Variant::kDirectBridge}) {
    if (name == variant_name(v)) return v;
  }
  fail(ErrorKind::kConfig, "unknown variant '" + name +
                               "' (expected baseline, source-bridge, "
                               "target-bridge or direct-bridge)");
}

void ModelConfig::validate() const {
  if (embed_dim == 0 || hidden_dim == 0 || readout_dim == 0 || max_len == 0) {
    fail(ErrorKind::kConfig, "model dimensions must be at least 1");
  }
  if (src_vocab_size <= kNumReserved || tgt_vocab_size <= kNumReserved) {
    fail(ErrorKind::kConfig,
         "vocabulary sizes must exceed the 4 reserved tokens");
  }
}

void ModelParams::add(std::string name, Tensor t) {
  if (index_.count(name)) {
    fail(ErrorKind::kConfig, "duplicate parameter '" + name + "'");
  }
  index_[name] = entries_.size();
  entries_.emplace_back(std::move(name), std::move(t));
}

bool ModelParams::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    fail(ErrorKind::kVariant, "model has no parameter '" + name + "'");
  }
  return entries_[it->second].second;
}

Tensor& ModelParams::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<std::pair<std::string, Shape>> param_layout(
    const ModelConfig& c) {
  const std::size_t e = c.embed_dim, h = c.hidden_dim, a = c.attention_size();
  const std::size_t ann = c.annotation_dim(), r = c.readout_dim;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("src_embed", Shape{c.src_vocab_size, e});
  out.emplace_back("tgt_embed", Shape{c.tgt_vocab_size, e});
  add_gru_layout(out, "enc_fwd", e, h);
  add_gru_layout(out, "enc_bwd", e, h);
  out.emplace_back("init.W", Shape{ann, h});
  add_gru_layout(out, "dec1", e, h);
  out.emplace_back("att.W", Shape{h, a});
  out.emplace_back("att.U", Shape{ann, a});
  out.emplace_back("att.b", Shape{a});
  out.emplace_back("att.v", Shape{a, 1});
  add_gru_layout(out, "dec2", c.gru2_input_dim(), h);
  out.emplace_back("read.U", Shape{h, r});
  out.emplace_back("read.V", Shape{e, r});
  out.emplace_back("read.C", Shape{ann, r});
  out.emplace_back("read.b", Shape{r});
  out.emplace_back("out.W", Shape{r, c.tgt_vocab_size});
  out.emplace_back("out.b", Shape{c.tgt_vocab_size});
  if (c.has_bridge_matrix()) out.emplace_back("bridge.W", Shape{e, e});
  return out;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed,
                        double scale) {
  config.validate();
  if (!(scale > 0.0)) fail(ErrorKind::kConfig, "init scale must be positive");
  Rng rng(seed);
  ModelParams params(config);
  for (auto& [name, shape] : param_layout(config)) {
    Tensor t(shape);
    if (name == "bridge.W") {
      const std::size_t e = shape[0];
      for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < e; ++j) {
          t.data[i * e + j] = (i == j ? 1.0 : 0.0) + rng.uniform(-0.01, 0.01);
        }
      }
    } else if (!is_bias(name)) {
      for (double& v : t.data) v = rng.uniform(-scale, scale);
    }
    params.add(name, std::move(t));
  }
  return params;
}

std::uint64_t count_params(const ModelConfig& config, Variant variant) {
  ModelConfig c = config;
  c.variant = variant;
  std::uint64_t n = 0;
  for (const auto& [name, shape] : param_layout(c)) n += shape_size(shape);
  return n;
}

std::vector<int> IdMatrix::column(std::size_t c) const {
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

BoundParams::BoundParams(const ModelParams& params, Tape& tape, bool trainable)
    : config_(&params.config()), tape_(&tape) {
  for (const auto& [name, t] : params.entries()) {
    Var v = trainable ? tape.variable(t) : tape.constant(t);
    vars_.emplace_back(name, v);
    index_[name] = v;
  }
}

BoundParams::BoundParams(const ModelParams& params, Tape& tape,
                         std::span<const Var> vars)
    : config_(&params.config()), tape_(&tape) {
  const auto& entries = params.entries();
  if (vars.size() != entries.size()) {
    fail(ErrorKind::kDimension, "BoundParams: expected " +
                                    std::to_string(entries.size()) +
                                    " values, got " + std::to_string(vars.size()));
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (vars[k].shape() != entries[k].second.shape) {
      fail(ErrorKind::kDimension, "BoundParams: '" + entries[k].first +
                                      "' has shape " +
                                      shape_string(vars[k].shape()));
    }
    vars_.emplace_back(entries[k].first, vars[k]);
    index_[entries[k].first] = vars[k];
  }
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    fail(ErrorKind::kVariant, std::string("variant ") +
                                  variant_name(config_->variant) +
                                  " has no parameter '" + name + "'");
  }
  return it->second;
}

std::vector<double> EncoderOutput::mask_column(std::size_t j) const {
  std::vector<double> m(batch());
  for (std::size_t r = 0; r < m.size(); ++r) m[r] = mask.at(r, j);
  return m;
}

EncoderOutput encode(const BoundParams& p, const IdMatrix& src_ids,
                     const Tensor& src_mask) {
  const ModelConfig& c = p.config();
  const std::size_t batch = src_ids.rows, len = src_ids.cols;
  if (src_mask.rows() != batch || src_mask.cols() != len || len == 0) {
    fail(ErrorKind::kInput, "source ids " + shape_string({batch, len}) +
                                " and mask " + shape_string(src_mask.shape) +
                                " disagree");
  }
  for (std::size_t r = 0; r < batch; ++r) {
    if (src_mask.at(r, 0) == 0.0) {
      fail(ErrorKind::kInput,
           "empty source sentence in batch row " + std::to_string(r));
    }
    for (int id : std::span(&src_ids.data[r * len], len)) {
      if (id < 0 || static_cast<std::size_t>(id) >= c.src_vocab_size) {
        fail(ErrorKind::kLookup, "source id " + std::to_string(id) +
                                     " outside vocabulary of " +
                                     std::to_string(c.src_vocab_size));
      }
    }
  }
  Tape& tape = p.tape();
  EncoderOutput enc;
  enc.mask = src_mask;

  const Var embed = p["src_embed"];
  std::vector<Var> x(len);
  for (std::size_t j = 0; j < len; ++j) {
    x[j] = gather_rows(embed, src_ids.column(j));
  }
  const GruVars fwd = gru_vars(p, "enc_fwd");
  const GruVars bwd = gru_vars(p, "enc_bwd");
  const Var zero = tape.constant(Tensor({batch, c.hidden_dim}));
  std::vector<Var> fh(len), bh(len);
  Var h = zero;
  for (std::size_t j = 0; j < len; ++j) {
    h = blend_rows(gru(fwd, c.hidden_dim, x[j], h), h, enc.mask_column(j));
    fh[j] = h;
  }
  h = zero;
  for (std::size_t j = len; j-- > 0;) {
    h = blend_rows(gru(bwd, c.hidden_dim, x[j], h), h, enc.mask_column(j));
    bh[j] = h;
  }
  const Var att_u = p["att.U"];
  const Var att_b = p["att.b"];
  for (std::size_t j = 0; j < len; ++j) {
    const std::vector<double> m = enc.mask_column(j);
    Var xe = mask_rows(x[j], m);
    std::vector<Var> parts{fh[j], bh[j]};
    if (c.annotations_carry_embedding()) parts.push_back(xe);
    Var ann = mask_rows(concat(parts, 1), m);
    enc.annotations.push_back(ann);
    enc.src_embeds.push_back(xe);
    enc.keys.push_back(add_row(matmul(ann, att_u), att_b));
  }
  return enc;
}

EncoderOutput select_rows(const EncoderOutput& enc, std::span<const int> rows) {
  EncoderOutput out;
  const std::size_t len = enc.length();
  out.mask = Tensor({rows.size(), len});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < len; ++j) {
      out.mask.at(r, j) = enc.mask.at(rows[r], j);
    }
  }
  for (std::size_t j = 0; j < len; ++j) {
    out.annotations.push_back(gather_rows(enc.annotations[j], rows));
    out.src_embeds.push_back(gather_rows(enc.src_embeds[j], rows));
    out.keys.push_back(gather_rows(enc.keys[j], rows));
  }
  return out;
}

AttentionResult attend(const BoundParams& p, Var s_tilde,
                       const EncoderOutput& enc) {
  const Var query = matmul(s_tilde, p["att.W"]);
  const Var v = p["att.v"];
  std::vector<Var> energies;
  energies.reserve(enc.length());
  for (const Var& key : enc.keys) {
    energies.push_back(matmul(tanh(add(query, key)), v));
  }
  Var alpha = masked_softmax(concat(energies, 1), enc.mask);
  Var context = weighted_sum(alpha, enc.annotations);
  return {alpha, context};
}

Var decoder_init(const BoundParams& p, const EncoderOutput& enc) {
  // Masked mean as a weighted sum with weights mask / count.
  Tensor w = enc.mask;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double n = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) n += w.at(r, j);
    for (std::size_t j = 0; j < w.cols(); ++j) w.at(r, j) /= n;
  }
  Var mean = weighted_sum(p.tape().constant(std::move(w)), enc.annotations);
  return tanh(matmul(mean, p["init.W"]));
}

std::vector<int> argmax_rows(const Tensor& alpha, const Tensor& mask) {
  std::vector<int> out(alpha.rows(), 0);
  for (std::size_t r = 0; r < alpha.rows(); ++r) {
    int best = -1;
    for (std::size_t j = 0; j < alpha.cols(); ++j) {
      if (mask.at(r, j) == 0.0) continue;
      if (best < 0 || alpha.at(r, j) > alpha.at(r, best)) {
        best = static_cast<int>(j);
      }
    }
    out[r] = std::max(best, 0);
  }
  return out;
}

DecoderStepOutput decoder_step(const BoundParams& p, Var s_prev,
                               std::span<const int> y_prev,
                               const EncoderOutput& enc, bool train,
                               double dropout_rate, Rng& rng) {
  const ModelConfig& c = p.config();
  DecoderStepOutput out;
  out.prev_embed = gather_rows(p["tgt_embed"], y_prev);
  out.state_tilde =
      gru(gru_vars(p, "dec1"), c.hidden_dim, out.prev_embed, s_prev);
  AttentionResult att = attend(p, out.state_tilde, enc);
  out.alpha = att.alpha;
  out.context = att.context;
  out.t_star = argmax_rows(att.alpha.value(), enc.mask);

  Var gru2_in = att.context;
  if (c.variant == Variant::kTargetBridge) {
    std::vector<Var> parts{att.context, pick_rows(enc.src_embeds, out.t_star)};
    gru2_in = concat(parts, 1);
  }
  out.state = gru(gru_vars(p, "dec2"), c.hidden_dim, gru2_in, out.state_tilde);

  Var pre = add(add(matmul(out.state, p["read.U"]),
                    matmul(out.prev_embed, p["read.V"])),
                matmul(att.context, p["read.C"]));
  Var readout = dropout(tanh(add_row(pre, p["read.b"])), dropout_rate, rng, train);
  out.logits = add_row(matmul(readout, p["out.W"]), p["out.b"]);
  return out;
}

std::vector<double> bridge_transform(const ModelParams& params,
                                     int src_word_id) {
  const ModelConfig& c = params.config();
  if (!c.has_bridge_matrix()) {
    fail(ErrorKind::kVariant, std::string("bridge_transform needs a "
                                          "direct-bridge model, got ") +
                                  variant_name(c.variant));
  }
  if (src_word_id < 0 ||
      static_cast<std::size_t>(src_word_id) >= c.src_vocab_size) {
    fail(ErrorKind::kLookup,
         "source id " + std::to_string(src_word_id) + " outside vocabulary");
  }
  const Tensor& embed = params.get("src_embed");
  const Tensor& w = params.get("bridge.W");
  const std::size_t e = c.embed_dim;
  std::vector<double> out(e, 0.0);
  // Row convention: the stored matrix multiplies x on the right.
  for (std::size_t k = 0; k < e; ++k) {
    const double xk = embed.data[src_word_id * e + k];
    for (std::size_t j = 0; j < e; ++j) out[j] += xk * w.data[k * e + j];
  }
  return out;
}

}  // namespace bnmt
