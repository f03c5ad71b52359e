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

// Toy-task experiment driver shared by the acceptance suite and the CLI
// calibration runs: corpus split, training with dev-BLEU selection, and the
// alignment / embedding diagnostics on the held-out pairs.

#ifndef BNMT_EXPERIMENT_HPP_
#define BNMT_EXPERIMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"
#include "train.hpp"

namespace bnmt {

struct ToySetup {
  ToySpec corpus;
  std::size_t dev_size = 500;  // last pairs of the corpus are held out
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t readout_dim = 32;
  double init_scale = 0.2;
  std::size_t batch_size = 16;
  double dropout_rate = 0.0;
  std::size_t max_epochs = 30;
  // Stop once dev BLEU has reached this value on `patience` consecutive
  // epochs. A target above 1 disables early stopping.
  double stop_bleu = 0.99;
  std::size_t patience = 2;
};

struct ToyData {
  ToyCorpus corpus;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  std::vector<EncodedPair> train;
  std::vector<EncodedPair> dev;
  std::vector<GoldAlignment> dev_gold;
};

ToyData prepare_toy(const ToySetup& setup);

ModelConfig toy_model_config(const ToySetup& setup, const ToyData& data,
                             Variant variant);

struct ToyRun {
  ModelParams best;            // highest dev BLEU, earliest on ties
  double best_bleu = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs = 0;      // epochs actually run
  std::vector<double> dev_bleu;
  std::vector<double> epoch_loss;
};

// Greedy corpus BLEU of params on the dev split, EOS stripped.
double dev_bleu(const ModelParams& params, const ToyData& data);

// Trains from `start` (fresh init when empty) with the given seed.
ToyRun train_toy(const ToySetup& setup, const ToyData& data, Variant variant,
                 std::uint64_t seed,
                 const std::optional<ModelParams>& start = std::nullopt);

struct AlignmentReport {
  double eos_rate = 0.0;  // percent
  double aer = 0.0;
  double saer = 0.0;
};

// Forced decoding of the dev references against the generator gold links.
AlignmentReport dev_alignment(const ModelParams& params, const ToyData& data);

// Share of the k most frequent training source words whose nearest target
// word under W is their lexicon image.
double lexicon_hit_rate(const ModelParams& params, const ToyData& data,
                        std::size_t k = 10);

}  // namespace bnmt

#endif  // BNMT_EXPERIMENT_HPP_
