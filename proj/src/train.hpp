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

#ifndef BNMT_TRAIN_HPP_
#define BNMT_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"

namespace bnmt {

struct TrainConfig {
  std::size_t batch_size = 80;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;
  double dropout_rate = 0.5;
  std::size_t max_epochs = 10;
  double grad_clip_norm = 1.0;  // infinity disables clipping
  std::uint64_t seed = 1;
  bool bucketing = true;
  // Direct bridge: penalise sum_j alpha_tj x_j instead of x_t*.
  bool bridge_weighted = false;

  void validate() const;
};

struct LossOptions {
  bool train = false;
  double dropout_rate = 0.0;
  bool bridge_weighted = false;
  bool keep_alphas = false;
};

struct LossStats {
  double loss = 0.0;     // mean over sentences of the summed per-step terms
  double nll = 0.0;      // mean over sentences
  double penalty = 0.0;  // mean over sentences; 0 unless direct bridge
  std::vector<double> sentence_loss;
  std::vector<double> sentence_nll;
  std::vector<double> sentence_penalty;
  std::vector<Tensor> alphas;  // per target step, [batch x Tx]
};

struct BatchLoss {
  Var loss;  // scalar on the tape
  LossStats stats;
};

// Teacher-forced loss: sum_t -log p(y_t) plus, for the direct bridge,
// sum_t ||x_t* W - y_t||^2, both over real target steps; averaged over the
// batch rows.
BatchLoss batch_loss(const BoundParams& p, const Batch& batch,
                     const LossOptions& options, Rng& rng);

// Single sentence through the same path.
LossStats sentence_loss(const ModelParams& params, const EncodedPair& pair,
                        const LossOptions& options, Rng& rng);

// Gradients aligned with params.entries().
using Gradients = std::vector<Tensor>;

LossStats compute_gradients(const ModelParams& params, const Batch& batch,
                            const LossOptions& options, Rng& rng,
                            Gradients& grads);

double global_norm(const Gradients& grads);
// Rescales to max_norm when the global norm exceeds it. Returns the norm
// before clipping.
double clip_gradients(Gradients& grads, double max_norm);

struct OptimizerState {
  std::vector<Tensor> mean_sq_grad;    // E[g^2]
  std::vector<Tensor> mean_sq_update;  // E[dx^2]

  static OptimizerState zeros_like(const ModelParams& params);
  bool empty() const { return mean_sq_grad.empty(); }
  bool operator==(const OptimizerState&) const = default;
};

void adadelta_step(ModelParams& params, const Gradients& grads,
                   OptimizerState& state, double rho, double eps);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double nll = 0.0;
  double bridge_penalty = 0.0;
  double wall_ms = 0.0;

  // wall_ms is left out unless asked for, so logs stay reproducible.
  std::string to_json(bool with_wall_time = false) const;
};

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed updates
  Rng rng{1};
};

struct TrainCallbacks {
  std::function<void(const StepRecord&)> on_step;
  // Called after each epoch; return false to stop.
  std::function<bool(std::size_t epoch, const ModelParams&)> on_epoch;
};

// Runs epochs until max_epochs (counting epochs already in state). Shuffles
// and dropout draw from state.rng, so a run is a pure function of the seed.
std::vector<StepRecord> train_loop(ModelParams& params, OptimizerState& opt,
                                   TrainState& state,
                                   const std::vector<EncodedPair>& corpus,
                                   const TrainConfig& config,
                                   const TrainCallbacks& callbacks = {},
                                   bool record_wall_time = false);

struct BridgeInit {
  ModelParams params;
  std::vector<std::string> copied;
  std::vector<std::string> fresh;
};

// Starts a model of config `target` from a trained donor: tensors whose name
// and shape match are copied verbatim, the rest are freshly initialised.
// Throws kIncompatible, listing the fields, when dimensions other than the
// variant differ.
BridgeInit pretrain_then_bridge(const ModelParams& donor,
                                const ModelConfig& target, std::uint64_t seed,
                                double init_scale = kDefaultInitScale);

}  // namespace bnmt

#endif  // BNMT_TRAIN_HPP_
