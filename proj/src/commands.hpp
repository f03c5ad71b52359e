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

// The work behind each CLI command, as plain functions over files. The C API
// and the command-line tool are thin layers over these.

#ifndef BNMT_COMMANDS_HPP_
#define BNMT_COMMANDS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "data.hpp"
#include "decode.hpp"
#include "run_config.hpp"
#include "tensor.hpp"

namespace bnmt {

// --- toygen -------------------------------------------------------------------

// Writes corpus.src, corpus.tgt, corpus.align and manifest.json into out_dir
// (created when missing).
void cmd_toygen(const ToySpec& spec, const std::string& out_dir);

// Regenerates the corpus described by a manifest file.
ToyCorpus toy_from_manifest(const std::string& manifest_path);

// --- train ----------------------------------------------------------------------

struct TrainOptions {
  RunConfig config;  // init_from names the starting checkpoint, if any
  std::string out_dir;
};

struct TrainSummary {
  std::size_t epochs = 0;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_bleu = 0.0;
  std::size_t train_pairs = 0;
  std::size_t dev_pairs = 0;
  std::vector<std::string> copied;  // pretrain_then_bridge bookkeeping
  std::vector<std::string> fresh;
};

// out_dir receives config.txt, train.jsonl, dev.jsonl, last.ckpt, best.ckpt
// and, with save_every, epoch-N.ckpt.
TrainSummary cmd_train(const TrainOptions& options);

// --- translate ------------------------------------------------------------------

struct TranslateOptions {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string attention_out;  // JSON lines; empty for none
  std::size_t beam_size = 10;
  std::size_t max_out_len = 0;
  bool length_norm = false;
  std::size_t threads = 1;
};

struct TranslateSummary {
  std::size_t lines = 0;
  std::size_t unk_tokens = 0;
};

TranslateSummary cmd_translate(const TranslateOptions& options);

// --- align ------------------------------------------------------------------------

struct AlignOptions {
  std::string checkpoint;
  std::string src;
  std::string ref;
  std::string output;        // JSON lines: attention record + nll + links
  std::string pharaoh_out;   // optional hard links, one line per pair
  std::size_t threads = 1;
};

std::size_t cmd_align(const AlignOptions& options);

// --- analyze ------------------------------------------------------------------------

struct AnalyzeOptions {
  std::string metric;
  std::string hyp;
  std::vector<std::string> refs;
  std::string src;             // length-bleu, nearest
  std::string attention;       // align / translate dump
  std::string alignment;       // predicted Pharaoh links instead of a dump
  std::string gold;            // Pharaoh, '-' sure and '?' possible
  std::string src_pos;
  std::string tgt_pos;
  std::string tag_merge;       // "V*=V,N*=N"; empty for the default
  std::vector<std::string> tags;  // rot filter on source tags
  std::string checkpoint;
  std::vector<std::string> words;  // nearest: source tokens
  std::size_t top_frequent = 10;   // nearest without words: most frequent in src
  std::size_t k = 5;
  std::vector<std::size_t> edges{10, 20, 30, 40, 50};
  bool smooth = false;
  bool case_sensitive = false;
  std::size_t display_top = 0;  // pos-confusion table: source tags per row (0: all)
};

inline const std::vector<std::string>& analyze_metrics() {
  static const std::vector<std::string> m{"bleu", "bleu1", "eos-rate", "aer", "saer",
                                          "rot", "pos-confusion", "length-bleu",
                                          "nearest"};
  return m;
}

MetricReport cmd_analyze(const AnalyzeOptions& options);

// Human-readable rendering of a report.
std::string report_table(const MetricReport& report, std::size_t display_top = 0);

std::vector<AttentionMatrix> read_attention_dump(const std::string& path);
std::vector<GoldAlignment> read_pharaoh_file(const std::string& path);

// --- gradcheck ------------------------------------------------------------------------

struct GradcheckSpec {
  std::size_t embed_dim = 8;
  std::size_t hidden_dim = 12;
  std::size_t vocab_size = 20;
  std::size_t length = 5;  // source and target positions, EOS included
  std::size_t batch = 2;
  double dropout_rate = 0.5;
  double step = 1e-4;
  double tolerance = 1e-4;
  double primitive_step = 1e-5;
  double primitive_tolerance = 1e-6;
  std::uint64_t seed = 7;
  bool primitives = true;
  std::vector<Variant> variants{Variant::kBaseline, Variant::kSourceBridge,
                                Variant::kTargetBridge, Variant::kDirectBridge};
  std::optional<OpKind> inject_fault;
};

struct GradcheckEntry {
  std::string suite;  // "op" or a variant name
  std::string name;   // op or parameter group
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradcheckSummary {
  std::vector<GradcheckEntry> entries;
  bool passed = false;

  std::vector<std::string> failing() const;
  std::string to_json() const;
};

GradcheckSummary cmd_gradcheck(const GradcheckSpec& spec);

}  // namespace bnmt

#endif  // BNMT_COMMANDS_HPP_
