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

#ifndef BNMT_DATA_HPP_
#define BNMT_DATA_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "model.hpp"

namespace bnmt {

using Sentence = std::vector<std::string>;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kEosToken = "</s>";
inline constexpr const char* kBosToken = "<s>";

Sentence split_tokens(const std::string& line);
std::string join_tokens(const Sentence& tokens);

class Vocabulary {
 public:
  // Only the four reserved tokens.
  Vocabulary();

  // Most frequent (cap - 4) tokens, ties broken lexicographically.
  static Vocabulary build(const std::vector<Sentence>& corpus, std::size_t cap);
  // Tokens in id order after the reserved ones.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const Sentence& s) const;
  // Stops at nothing; reserved ids render as their marker strings.
  Sentence decode(std::span<const int> ids) const;
  // Content tokens (ids >= 4) in id order.
  std::vector<std::string> content_tokens() const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void append(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Fraction of running tokens covered by the vocabulary.
double coverage(const Vocabulary& vocab, const std::vector<Sentence>& corpus);

struct SentencePair {
  Sentence src;
  Sentence tgt;
  bool operator==(const SentencePair&) const = default;
};

struct LoadReport {
  std::vector<SentencePair> pairs;
  std::size_t dropped_long = 0;
  std::size_t dropped_empty = 0;
};

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// Drops pairs whose either side is empty or longer than max_len tokens.
LoadReport load_parallel(const std::string& src_path,
                         const std::string& tgt_path, std::size_t max_len);
LoadReport filter_pairs(const std::vector<std::string>& src_lines,
                        const std::vector<std::string>& tgt_lines,
                        std::size_t max_len);

struct EncodedPair {
  std::vector<int> src;  // no EOS
  std::vector<int> tgt;
  bool operator==(const EncodedPair&) const = default;
};

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs,
                                      const Vocabulary& src_vocab,
                                      const Vocabulary& tgt_vocab);

struct Batch {
  IdMatrix src;    // [B x Tx], EOS appended, PAD fill
  IdMatrix tgt;    // [B x Ty], EOS appended, PAD fill
  Tensor src_mask;
  Tensor tgt_mask;
  std::vector<std::size_t> indices;  // positions of the rows in the input

  std::size_t size() const { return src.rows; }
};

// Lays out the pairs in order; extra_src_pad/extra_tgt_pad add trailing
// all-PAD columns.
Batch make_batch(const std::vector<EncodedPair>& pairs,
                 std::span<const std::size_t> indices,
                 std::size_t extra_src_pad = 0, std::size_t extra_tgt_pad = 0);

// Seeded shuffle, optional length bucketing (sort by source length, slice,
// shuffle the slices).
std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs,
                                std::size_t batch_size, std::uint64_t seed,
                                bool bucketing);

// Rows back to pairs (strips EOS and PAD).
std::vector<EncodedPair> unbatch(const Batch& batch);

// Share of PAD cells across the source and target matrices.
double padding_fraction(const std::vector<Batch>& batches);

// --- toy corpus ------------------------------------------------------------

// kLexical: a pair is swapped when its first source word belongs to a fixed
// trigger class holding round(swap_prob * vocab_size) word types, so the
// reordering is a function of the source. kRandom: every pair is swapped by
// an independent coin flip, which no model can predict.
enum class SwapMode { kLexical, kRandom };

const char* swap_mode_name(SwapMode mode);
SwapMode parse_swap_mode(const std::string& name);

struct ToySpec {
  std::size_t vocab_size = 50;
  std::size_t n_pairs = 5000;
  std::size_t min_len = 3;
  std::size_t max_len = 12;
  double swap_prob = 0.2;
  std::uint64_t seed = 1;
  SwapMode swap_mode = SwapMode::kLexical;
};

// (source position, target position), 0-indexed.
using Link = std::pair<int, int>;

struct GoldAlignment {
  std::vector<Link> sure;
  std::vector<Link> possible;  // excludes the sure links
};

struct ToyCorpus {
  ToySpec spec;
  std::vector<SentencePair> pairs;
  std::vector<GoldAlignment> gold;
  // lexicon[i] = target index for source word i.
  std::vector<int> lexicon;
  // trigger[i]: source word i starts a swapped pair (lexical mode).
  std::vector<bool> trigger;

  std::string source_word(int i) const { return "s" + std::to_string(i); }
  std::string target_word(int i) const { return "t" + std::to_string(i); }
  std::string lexicon_image(const std::string& src_token) const;
};

// Source words are uniform over vocab_size types, lengths uniform in
// [min_len, max_len]; the target is the lexicon image with adjacent pairs
// swapped left to right (swaps never overlap).
ToyCorpus gen_toy_corpus(const ToySpec& spec);

std::string toy_manifest_json(const ToySpec& spec);
ToySpec parse_toy_manifest(const std::string& json);

// Pharaoh: "i-j" sure, "i?j" possible.
std::string format_pharaoh(const GoldAlignment& a);
GoldAlignment parse_pharaoh(const std::string& line);

}  // namespace bnmt

#endif  // BNMT_DATA_HPP_
