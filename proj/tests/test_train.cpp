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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "checkpoint.hpp"
#include "train.hpp"

namespace bnmt {
namespace {

ModelConfig tiny(Variant v) {
  ModelConfig c;
  c.embed_dim = 4;
  c.hidden_dim = 5;
  c.readout_dim = 3;
  c.src_vocab_size = 10;
  c.tgt_vocab_size = 9;
  c.variant = v;
  return c;
}

std::vector<EncodedPair> corpus() {
  std::vector<EncodedPair> pairs;
  for (int i = 0; i < 12; ++i) pairs.push_back({{4 + i % 6, 4 + (i + 1) % 6}, {4 + (i + 2) % 5}});
  return pairs;
}

TEST(Adadelta, MatchesHandComputedSteps) {
  ModelParams p;
  p.add("w", Tensor({1}, 1.0));
  OptimizerState s = OptimizerState::zeros_like(p);
  adadelta_step(p, {Tensor({1}, 1.0)}, s, 0.95, 1e-6);
  EXPECT_NEAR(p.get("w").data[0], 0.9955279087656892, 1e-15);
  adadelta_step(p, {Tensor({1}, -2.0)}, s, 0.95, 1e-6);
  EXPECT_NEAR(p.get("w").data[0], 1.001213221290106, 1e-15);
}

TEST(Adadelta, ZeroGradientOnlyDecaysAccumulators) {
  ModelParams p;
  p.add("w", Tensor({1}, 0.5));
  OptimizerState s = OptimizerState::zeros_like(p);
  s.mean_sq_grad[0].data[0] = 2.0;
  s.mean_sq_update[0].data[0] = 4.0;
  adadelta_step(p, {Tensor({1}, 0.0)}, s, 0.95, 1e-6);
  EXPECT_EQ(p.get("w").data[0], 0.5);
  EXPECT_DOUBLE_EQ(s.mean_sq_grad[0].data[0], 1.9);
  EXPECT_DOUBLE_EQ(s.mean_sq_update[0].data[0], 3.8);
}

TEST(Adadelta, ScalarQuadraticFollowsReferenceTrajectory) {
  // Independent scalar recursion for f(x) = (x - 3)^2 from x = 0.
  double x = 0.0, eg = 0.0, edx = 0.0;
  ModelParams p;
  p.add("x", Tensor({1}, 0.0));
  OptimizerState s = OptimizerState::zeros_like(p);
  std::size_t reached = 0;
  for (std::size_t k = 1; k <= 1000; ++k) {
    const double g = 2.0 * (x - 3.0);
    eg = 0.95 * eg + 0.05 * g * g;
    const double dx = -std::sqrt(edx + 1e-6) / std::sqrt(eg + 1e-6) * g;
    edx = 0.95 * edx + 0.05 * dx * dx;
    x += dx;
    adadelta_step(p, {Tensor({1}, 2.0 * (p.get("x").data[0] - 3.0))}, s, 0.95, 1e-6);
    ASSERT_NEAR(p.get("x").data[0], x, 1e-12) << k;
    if (!reached && std::abs(x - 3.0) < 0.1) reached = k;
  }
  EXPECT_GT(reached, 0u);
  EXPECT_LE(reached, 1000u);
}

TEST(Adadelta, RejectsMismatchedGradients) {
  ModelParams p;
  p.add("w", Tensor({2}, 1.0));
  OptimizerState s = OptimizerState::zeros_like(p);
  EXPECT_THROW(adadelta_step(p, {Tensor({3}, 1.0)}, s, 0.95, 1e-6), Error);
  EXPECT_THROW(adadelta_step(p, {}, s, 0.95, 1e-6), Error);
}

TEST(Clip, RescalesOnlyAboveThreshold) {
  Gradients g{Tensor({2}, std::vector<double>{3, 0}), Tensor({1}, std::vector<double>{4})};
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
  EXPECT_DOUBLE_EQ(clip_gradients(g, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(g[1].data[0], 4.0);
  EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), 5.0);
  EXPECT_NEAR(g[0].data[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1].data[0], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_gradients(g, std::numeric_limits<double>::infinity()), 1.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Loss, DirectBridgePenaltyOnlyForDirect) {
  const auto pairs = corpus();
  for (Variant v : {Variant::kBaseline, Variant::kSourceBridge, Variant::kTargetBridge,
                    Variant::kDirectBridge}) {
    Rng rng(1);
    const LossStats s = sentence_loss(init_params(tiny(v), 1), pairs[0], {}, rng);
    EXPECT_GT(s.nll, 0.0);
    if (v == Variant::kDirectBridge) {
      EXPECT_GT(s.penalty, 0.0);
      EXPECT_NEAR(s.loss, s.nll + s.penalty, 1e-12);
    } else {
      EXPECT_EQ(s.penalty, 0.0);
      EXPECT_EQ(s.loss, s.nll);
    }
  }
}

TEST(Loss, UniformOutputGivesLengthTimesLogV) {
  ModelParams p = init_params(tiny(Variant::kTargetBridge), 1);
  for (double& w : p.get("out.W").data) w = 0.0;
  const EncodedPair pair{{4, 5, 6}, {7, 8}};
  Rng rng(1);
  const LossStats s = sentence_loss(p, pair, {}, rng);
  EXPECT_NEAR(s.nll, 3.0 * std::log(9.0), 1e-12);  // two words plus EOS
}

TEST(Loss, BatchEqualsSumOfSentences) {
  const auto pairs = corpus();
  for (Variant v : {Variant::kBaseline, Variant::kDirectBridge}) {
    const ModelParams params = init_params(tiny(v), 3, 0.3);
    const std::vector<std::size_t> idx{0, 3, 7};
    const Batch batch = make_batch(pairs, idx, 2, 1);
    Tape t(false);
    BoundParams bp(params, t, false);
    Rng rng(1);
    const BatchLoss bl = batch_loss(bp, batch, {}, rng);
    double total = 0.0;
    for (std::size_t i : idx) total += sentence_loss(params, pairs[i], {}, rng).loss;
    EXPECT_NEAR(bl.stats.loss * 3.0, total, 1e-10);
  }
}

TEST(Batch, SizesFollowBatchSize) {
  std::vector<EncodedPair> five(5, EncodedPair{{4}, {5}});
  std::vector<std::size_t> sizes;
  for (const Batch& b : make_batches(five, 2, 1, false)) sizes.push_back(b.size());
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 1}));
}

TEST(TrainLoop, ReproducibleAndLossFalls) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 8;
  cfg.dropout_rate = 0.0;
  const auto run = [&] {
    ModelParams p = init_params(tiny(Variant::kDirectBridge), 2, 0.1);
    OptimizerState opt = OptimizerState::zeros_like(p);
    TrainState st;
    st.rng = Rng(cfg.seed);
    const auto log = train_loop(p, opt, st, corpus(), cfg);
    EXPECT_EQ(st.epoch, 8u);
    EXPECT_EQ(st.step, 24u);
    return std::make_pair(p, log);
  };
  const auto [pa, la] = run();
  const auto [pb, lb] = run();
  EXPECT_EQ(pa, pb);
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i].to_json(), lb[i].to_json());
  EXPECT_LT(la.back().loss, la.front().loss);
  EXPECT_EQ(la[0].to_json().find("wall_ms"), std::string::npos);
}

TEST(TrainLoop, EpochCallbackStops) {
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.max_epochs = 5;
  ModelParams p = init_params(tiny(Variant::kBaseline), 2);
  OptimizerState opt = OptimizerState::zeros_like(p);
  TrainState st;
  TrainCallbacks cb;
  cb.on_epoch = [](std::size_t epoch, const ModelParams&) { return epoch < 2; };
  train_loop(p, opt, st, corpus(), cfg, cb);
  EXPECT_EQ(st.epoch, 2u);
}

TEST(Bridge, PretrainCopiesSharedTensors) {
  const ModelParams donor = init_params(tiny(Variant::kSourceBridge), 4);
  const BridgeInit init = pretrain_then_bridge(donor, tiny(Variant::kDirectBridge), 9);
  EXPECT_EQ(init.fresh, (std::vector<std::string>{"bridge.W"}));
  EXPECT_EQ(init.copied.size(), donor.entries().size());
  for (const auto& [name, t] : donor.entries()) EXPECT_EQ(init.params.get(name), t) << name;

  // Baseline to source bridge: annotation-width tensors change shape.
  const BridgeInit b = pretrain_then_bridge(init_params(tiny(Variant::kBaseline), 4),
                                            tiny(Variant::kSourceBridge), 9);
  EXPECT_FALSE(b.fresh.empty());
  EXPECT_EQ(b.params.total_size(), count_params(tiny(Variant::kSourceBridge), Variant::kSourceBridge));
}

TEST(Bridge, PretrainRejectsDimensionChange) {
  ModelConfig other = tiny(Variant::kDirectBridge);
  other.hidden_dim = 6;
  try {
    pretrain_then_bridge(init_params(tiny(Variant::kSourceBridge), 1), other, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIncompatible);
    EXPECT_NE(std::string(e.what()).find("hidden_dim"), std::string::npos);
  }
}

Checkpoint sample() {
  Checkpoint c;
  c.params = init_params(tiny(Variant::kDirectBridge), 3);
  c.src_vocab = Vocabulary::from_tokens({"a", "b", "c", "d", "e", "f"});
  c.tgt_vocab = Vocabulary::from_tokens({"x", "y", "z", "w", "v"});
  c.optimizer = OptimizerState::zeros_like(c.params);
  c.optimizer.mean_sq_grad[0].data[0] = 0.25;
  c.train.epoch = 3;
  c.train.step = 17;
  c.train.rng = Rng(42);
  c.train.rng.uniform();
  return c;
}

TEST(Checkpoint, RoundTripBitExact) {
  const Checkpoint c = sample();
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_TRUE(back == c);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  Rng a = c.train.rng, b = back.train.rng;
  EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "bnmt_test_ckpt.bin";
  save_checkpoint(path.string(), sample());
  EXPECT_TRUE(load_checkpoint(path.string()) == sample());
  std::filesystem::remove(path);
  try {
    load_checkpoint(path.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

ErrorKind kind_of(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kUsage;
}

TEST(Checkpoint, CorruptionIsReported) {
  const std::string bytes = serialize_checkpoint(sample());
  EXPECT_EQ(kind_of(bytes.substr(0, bytes.size() - 9)), ErrorKind::kTruncated);
  EXPECT_EQ(kind_of(bytes.substr(0, 6)), ErrorKind::kTruncated);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of(bad), ErrorKind::kFormat);
  bad = bytes;
  bad[4] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_EQ(kind_of(bad), ErrorKind::kVersion);
  EXPECT_EQ(kind_of(bytes + "junk"), ErrorKind::kFormat);
}

}  // namespace
}  // namespace bnmt
