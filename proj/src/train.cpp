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

#include "train.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace bnmt {

void TrainConfig::validate() const {
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch_size must be at least 1");
  if (!(adadelta_rho > 0.0 && adadelta_rho < 1.0)) {
    fail(ErrorKind::kConfig, "adadelta_rho must lie in (0, 1)");
  }
  if (!(adadelta_eps > 0.0)) fail(ErrorKind::kConfig, "adadelta_eps must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail(ErrorKind::kConfig, "dropout_rate must lie in [0, 1)");
  }
  if (!(grad_clip_norm > 0.0)) fail(ErrorKind::kConfig, "grad_clip_norm must be positive");
}

BatchLoss batch_loss(const BoundParams& p, const Batch& batch,
                     const LossOptions& options, Rng& rng) {
  const ModelConfig& c = p.config();
  const std::size_t rows = batch.size(), ty = batch.tgt.cols;
  const bool bridged = c.variant == Variant::kDirectBridge;
  Tape& tape = p.tape();

  EncoderOutput enc = encode(p, batch.src, batch.src_mask);
  Var state = decoder_init(p, enc);
  std::vector<int> y_prev(rows, kBos);

  BatchLoss out;
  LossStats& st = out.stats;
  st.sentence_nll.assign(rows, 0.0);
  st.sentence_penalty.assign(rows, 0.0);
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t t = 0; t < ty; ++t) {
    std::vector<double> mask(rows);
    for (std::size_t r = 0; r < rows; ++r) mask[r] = batch.tgt_mask.at(r, t);
    const std::vector<int> y = batch.tgt.column(t);

    DecoderStepOutput step = decoder_step(p, state, y_prev, enc, options.train,
                                          options.dropout_rate, rng);
    Var nll = softmax_xent(step.logits, y);
    Var term = nll;
    Var pen;
    if (bridged) {
      Var src = options.bridge_weighted
                    ? weighted_sum(step.alpha, enc.src_embeds)
                    : pick_rows(enc.src_embeds, step.t_star);
      Var diff = sub(matmul(src, p["bridge.W"]), gather_rows(p["tgt_embed"], y));
      pen = row_squared_l2(diff);
      term = add(nll, pen);
    }
    total = add(total, sum(mask_rows(term, mask)));

    for (std::size_t r = 0; r < rows; ++r) {
      if (mask[r] == 0.0) continue;
      const double n = nll.value().data[r];
      if (!std::isfinite(n)) {
        fail(ErrorKind::kNumeric, "non-finite loss at target step " +
                                      std::to_string(t) + " (row " +
                                      std::to_string(r) + ")");
      }
      st.sentence_nll[r] += n;
      if (bridged) st.sentence_penalty[r] += pen.value().data[r];
    }
    if (options.keep_alphas) st.alphas.push_back(step.alpha.value());
    state = step.state;
    y_prev = y;
  }
  out.loss = scale(total, 1.0 / static_cast<double>(rows));
  st.sentence_loss.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    st.sentence_loss[r] = st.sentence_nll[r] + st.sentence_penalty[r];
    st.nll += st.sentence_nll[r];
    st.penalty += st.sentence_penalty[r];
  }
  st.nll /= rows;
  st.penalty /= rows;
  st.loss = out.loss.value().data[0];
  return out;
}

LossStats sentence_loss(const ModelParams& params, const EncodedPair& pair,
                        const LossOptions& options, Rng& rng) {
  std::vector<EncodedPair> one{pair};
  const std::size_t idx = 0;
  Batch b = make_batch(one, std::span<const std::size_t>(&idx, 1));
  Tape tape(false);
  BoundParams p(params, tape, false);
  return batch_loss(p, b, options, rng).stats;
}

LossStats compute_gradients(const ModelParams& params, const Batch& batch,
                            const LossOptions& options, Rng& rng,
                            Gradients& grads) {
  Tape tape(true);
  BoundParams p(params, tape, true);
  BatchLoss bl = batch_loss(p, batch, options, rng);
  tape.backward(bl.loss);
  grads.clear();
  grads.reserve(p.vars().size());
  for (const auto& [name, v] : p.vars()) grads.push_back(tape.grad(v));
  return std::move(bl.stats);
}

double global_norm(const Gradients& grads) {
  double s = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data) s += v * v;
  }
  return std::sqrt(s);
}

double clip_gradients(Gradients& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (std::isfinite(max_norm) && norm > max_norm) {
    const double f = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data) v *= f;
    }
  }
  return norm;
}

OptimizerState OptimizerState::zeros_like(const ModelParams& params) {
  OptimizerState s;
  for (const auto& [name, t] : params.entries()) {
    s.mean_sq_grad.emplace_back(t.shape);
    s.mean_sq_update.emplace_back(t.shape);
  }
  return s;
}

void adadelta_step(ModelParams& params, const Gradients& grads,
                   OptimizerState& state, double rho, double eps) {
  auto& entries = params.entries();
  if (grads.size() != entries.size() ||
      state.mean_sq_grad.size() != entries.size()) {
    fail(ErrorKind::kDimension, "adadelta: gradient/state count mismatch");
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& x = entries[k].second;
    const Tensor& g = grads[k];
    Tensor& eg = state.mean_sq_grad[k];
    Tensor& edx = state.mean_sq_update[k];
    if (g.shape != x.shape) {
      fail(ErrorKind::kDimension, "adadelta: gradient for '" + entries[k].first +
                                      "' has shape " + shape_string(g.shape));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = g.data[i];
      eg.data[i] = rho * eg.data[i] + (1.0 - rho) * gi * gi;
      const double dx =
          -std::sqrt(edx.data[i] + eps) / std::sqrt(eg.data[i] + eps) * gi;
      edx.data[i] = rho * edx.data[i] + (1.0 - rho) * dx * dx;
      x.data[i] += dx;
      if (!std::isfinite(x.data[i])) {
        fail(ErrorKind::kNumeric, "adadelta: non-finite update in '" +
                                      entries[k].first + "'[" +
                                      std::to_string(i) + "]");
      }
    }
  }
}

std::string StepRecord::to_json(bool with_wall_time) const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss"] = loss;
  j["nll"] = nll;
  j["bridge_penalty"] = bridge_penalty;
  if (with_wall_time) j["wall_ms"] = wall_ms;
  return j.dump();
}

std::vector<StepRecord> train_loop(ModelParams& params, OptimizerState& opt,
                                   TrainState& state,
                                   const std::vector<EncodedPair>& corpus,
                                   const TrainConfig& config,
                                   const TrainCallbacks& callbacks,
                                   bool record_wall_time) {
  config.validate();
  if (corpus.empty()) fail(ErrorKind::kInput, "training corpus is empty");
  if (opt.empty()) opt = OptimizerState::zeros_like(params);
  const LossOptions loss_opts{true, config.dropout_rate, config.bridge_weighted,
                              false};
  std::vector<StepRecord> log;
  Gradients grads;
  while (state.epoch < config.max_epochs) {
    const std::size_t epoch = state.epoch + 1;
    const std::vector<Batch> batches = make_batches(
        corpus, config.batch_size, state.rng.next(), config.bucketing);
    for (const Batch& batch : batches) {
      const auto t0 = std::chrono::steady_clock::now();
      LossStats st = compute_gradients(params, batch, loss_opts, state.rng, grads);
      clip_gradients(grads, config.grad_clip_norm);
      adadelta_step(params, grads, opt, config.adadelta_rho,
                    config.adadelta_eps);
      ++state.step;
      StepRecord rec{epoch, state.step, st.loss, st.nll, st.penalty, 0.0};
      if (record_wall_time) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      }
      if (callbacks.on_step) callbacks.on_step(rec);
      log.push_back(rec);
    }
    state.epoch = epoch;
    if (callbacks.on_epoch && !callbacks.on_epoch(epoch, params)) break;
  }
  return log;
}

BridgeInit pretrain_then_bridge(const ModelParams& donor,
                                const ModelConfig& target, std::uint64_t seed,
                                double init_scale) {
  const ModelConfig& d = donor.config();
  std::vector<std::string> diffs;
  auto check = [&](const char* name, std::size_t a, std::size_t b) {
    if (a != b) {
      diffs.push_back(std::string(name) + " (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
    }
  };
  check("embed_dim", d.embed_dim, target.embed_dim);
  check("hidden_dim", d.hidden_dim, target.hidden_dim);
  check("attention_dim", d.attention_size(), target.attention_size());
  check("readout_dim", d.readout_dim, target.readout_dim);
  check("src_vocab_size", d.src_vocab_size, target.src_vocab_size);
  check("tgt_vocab_size", d.tgt_vocab_size, target.tgt_vocab_size);
  if (!diffs.empty()) {
    std::string msg = "checkpoint incompatible with target model:";
    for (const auto& s : diffs) msg += " " + s + ";";
    fail(ErrorKind::kIncompatible, msg);
  }
  BridgeInit out{init_params(target, seed, init_scale), {}, {}};
  for (auto& [name, t] : out.params.entries()) {
    if (donor.contains(name) && donor.get(name).shape == t.shape) {
      t = donor.get(name);
      out.copied.push_back(name);
    } else {
      out.fresh.push_back(name);
    }
  }
  return out;
}

}  // namespace bnmt
