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

#include "experiment.hpp"

#include <algorithm>
#include <map>

#include "analysis.hpp"
#include "decode.hpp"

namespace bnmt {

ToyData prepare_toy(const ToySetup& setup) {
  ToyData d;
  d.corpus = gen_toy_corpus(setup.corpus);
  const std::size_t n = d.corpus.pairs.size();
  if (setup.dev_size == 0 || setup.dev_size >= n) {
    fail(ErrorKind::kConfig, "dev_size must be in (0, " + std::to_string(n) + ")");
  }
  const std::size_t n_train = n - setup.dev_size;
  std::vector<Sentence> src, tgt;
  for (std::size_t i = 0; i < n_train; ++i) {
    src.push_back(d.corpus.pairs[i].src);
    tgt.push_back(d.corpus.pairs[i].tgt);
  }
  const std::size_t cap = setup.corpus.vocab_size + kNumReserved;
  d.src_vocab = Vocabulary::build(src, cap);
  d.tgt_vocab = Vocabulary::build(tgt, cap);
  const auto all = encode_pairs(d.corpus.pairs, d.src_vocab, d.tgt_vocab);
  d.train.assign(all.begin(), all.begin() + n_train);
  d.dev.assign(all.begin() + n_train, all.end());
  d.dev_gold.assign(d.corpus.gold.begin() + n_train, d.corpus.gold.end());
  return d;
}

ModelConfig toy_model_config(const ToySetup& setup, const ToyData& data,
                             Variant variant) {
  ModelConfig c;
  c.embed_dim = setup.embed_dim;
  c.hidden_dim = setup.hidden_dim;
  c.readout_dim = setup.readout_dim;
  c.src_vocab_size = data.src_vocab.size();
  c.tgt_vocab_size = data.tgt_vocab.size();
  c.max_len = setup.corpus.max_len;
  c.variant = variant;
  return c;
}

double dev_bleu(const ModelParams& params, const ToyData& data) {
  std::vector<std::vector<int>> srcs;
  srcs.reserve(data.dev.size());
  for (const auto& p : data.dev) srcs.push_back(p.src);
  const auto hyps = greedy_decode_batch(params, srcs);
  std::vector<Sentence> h, r;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    std::vector<int> toks = hyps[i].tokens;
    if (!toks.empty() && toks.back() == kEos) toks.pop_back();
    h.push_back(data.tgt_vocab.decode(toks));
    r.push_back(data.tgt_vocab.decode(data.dev[i].tgt));
  }
  return corpus_bleu(h, r);
}

ToyRun train_toy(const ToySetup& setup, const ToyData& data, Variant variant,
                 std::uint64_t seed, const std::optional<ModelParams>& start) {
  const ModelConfig mc = toy_model_config(setup, data, variant);
  ModelParams params = start ? *start : init_params(mc, seed, setup.init_scale);
  if (!(params.config() == mc)) {
    fail(ErrorKind::kIncompatible, "starting point does not match the toy config");
  }
  TrainConfig tc;
  tc.batch_size = setup.batch_size;
  tc.dropout_rate = setup.dropout_rate;
  tc.max_epochs = setup.max_epochs;
  tc.seed = seed;
  OptimizerState opt;
  TrainState state;
  state.rng = Rng(seed);

  ToyRun run;
  run.best = params;
  double loss_sum = 0.0;
  std::size_t loss_n = 0;
  std::size_t streak = 0;
  TrainCallbacks cb;
  cb.on_step = [&](const StepRecord& r) {
    loss_sum += r.loss;
    ++loss_n;
  };
  cb.on_epoch = [&](std::size_t epoch, const ModelParams& p) {
    const double b = dev_bleu(p, data);
    run.dev_bleu.push_back(b);
    run.epoch_loss.push_back(loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
    loss_sum = 0.0;
    loss_n = 0;
    run.epochs = epoch;
    if (run.best_epoch == 0 || b > run.best_bleu) {
      run.best = p;
      run.best_bleu = b;
      run.best_epoch = epoch;
    }
    streak = b >= setup.stop_bleu ? streak + 1 : 0;
    return streak < setup.patience;
  };
  train_loop(params, opt, state, data.train, tc, cb);
  return run;
}

AlignmentReport dev_alignment(const ModelParams& params, const ToyData& data) {
  const auto forced = force_decode_batch(params, data.dev);
  std::vector<AttentionMatrix> dumps;
  AerCounts hard, soft;
  for (std::size_t i = 0; i < forced.size(); ++i) {
    const Tensor& att = forced[i].attention;
    dumps.push_back(make_attention_matrix(att, data.src_vocab, data.tgt_vocab,
                                          data.dev[i].src, data.dev[i].tgt));
    const AlignmentSet gold = make_alignment_set(data.dev_gold[i]);
    hard.add(aer_counts(attention_links(att), gold));
    soft.add(saer_counts(crop_eos(att), gold));
  }
  AlignmentReport r;
  r.eos_rate = eos_alignment_rate(dumps);
  r.aer = hard.value();
  r.saer = soft.value();
  return r;
}

double lexicon_hit_rate(const ModelParams& params, const ToyData& data,
                        std::size_t k) {
  std::map<int, std::size_t> freq;
  for (const auto& p : data.train) {
    for (int id : p.src) ++freq[id];
  }
  std::vector<std::pair<int, std::size_t>> order(freq.begin(), freq.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (order.size() > k) order.resize(k);
  if (order.empty()) return 0.0;
  std::vector<int> ids;
  for (const auto& [id, n] : order) ids.push_back(id);
  const auto nn = nearest_target_words(params, ids, 1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string want = data.corpus.lexicon_image(data.src_vocab.token(ids[i]));
    if (!nn[i].empty() && data.tgt_vocab.token(nn[i][0].id) == want) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ids.size());
}

}  // namespace bnmt
