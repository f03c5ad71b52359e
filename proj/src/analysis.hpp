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

#ifndef BNMT_ANALYSIS_HPP_
#define BNMT_ANALYSIS_HPP_

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "decode.hpp"
#include "json.hpp"
#include "model.hpp"

namespace bnmt {

// --- BLEU ------------------------------------------------------------------

struct BleuOptions {
  int max_n = 4;
  bool case_insensitive = true;
  bool smooth = false;  // add-one on orders >= 2
};

struct BleuStats {
  std::vector<double> matches;  // clipped, per order
  std::vector<double> totals;   // hypothesis n-grams, per order
  double hyp_len = 0.0;
  double ref_len = 0.0;  // closest reference length, ties to the shorter

  double score(const BleuOptions& options) const;
  double brevity_penalty() const;
};

BleuStats bleu_stats(const std::vector<Sentence>& hyps,
                     const std::vector<std::vector<Sentence>>& refs,
                     const BleuOptions& options = {});

double corpus_bleu(const std::vector<Sentence>& hyps,
                   const std::vector<std::vector<Sentence>>& refs,
                   const BleuOptions& options = {});
// Single-reference convenience.
double corpus_bleu(const std::vector<Sentence>& hyps,
                   const std::vector<Sentence>& refs,
                   const BleuOptions& options = {});

double one_gram_bleu(const std::vector<Sentence>& hyps,
                     const std::vector<std::vector<Sentence>>& refs,
                     bool case_insensitive = true);

struct BucketScore {
  std::string label;  // "1-10", ..., ">50"
  double bleu = 0.0;
  std::size_t count = 0;
};

// Buckets by source length; empty buckets are left out.
std::vector<BucketScore> length_bucket_bleu(
    const std::vector<Sentence>& hyps,
    const std::vector<std::vector<Sentence>>& refs,
    const std::vector<std::size_t>& src_lengths,
    const std::vector<std::size_t>& edges = {10, 20, 30, 40, 50},
    const BleuOptions& options = {});

// --- alignment ---------------------------------------------------------------

struct AlignmentSet {
  std::set<Link> sure;
  std::set<Link> possible;  // contains sure
};

AlignmentSet make_alignment_set(const GoldAlignment& gold);

// Hard links (src, tgt) from an attention matrix whose last row is the
// target EOS and last column the source EOS. The EOS row is skipped and rows
// peaking on the source EOS are left unaligned.
std::vector<Link> attention_links(const Tensor& attention);

struct AerCounts {
  double a_and_s = 0.0;
  double a_and_p = 0.0;
  double a = 0.0;
  double s = 0.0;

  void add(const AerCounts& o);
  double value() const;
};

AerCounts aer_counts(const std::vector<Link>& predicted, const AlignmentSet& gold);
double aer(const std::vector<Link>& predicted, const AlignmentSet& gold);

// soft is [Ty x Tx] over content positions only (EOS row and column
// removed); entry (i, j) weighs the link (src j, tgt i).
AerCounts saer_counts(const Tensor& soft, const AlignmentSet& gold);
double saer(const Tensor& soft, const AlignmentSet& gold);

// Drops the last row and column.
Tensor crop_eos(const Tensor& attention);

// --- attention statistics -----------------------------------------------------

// Percentage of matrices whose target EOS row peaks on the source EOS column.
// Throws kInput when a target sequence does not end with EOS.
double eos_alignment_rate(const std::vector<AttentionMatrix>& dumps);

struct RotStats {
  double over = 0.0;   // sum of t(w)
  double words = 0.0;  // filtered source word occurrences

  double percent() const;
};

// Over-translation ratio. For every source occurrence w passing the filter,
// t(w) = |e(w)| - |uniq(e(w))| where e(w) are the target tokens hard-aligned
// to it. src_tags is empty to consider all words.
RotStats rot(const std::vector<AttentionMatrix>& dumps,
             const std::vector<std::vector<std::string>>& src_tags = {},
             const std::set<std::string>& tag_filter = {});

// --- POS -----------------------------------------------------------------------

struct TaggedSentence {
  Sentence tokens;
  std::vector<std::string> tags;
};

// "surface_TAG" tokens; the tag follows the last underscore.
TaggedSentence parse_tagged_line(const std::string& line, std::size_t line_no);
std::vector<TaggedSentence> read_pos_file(const std::string& path);

// Ordered (pattern, tag) rules; a trailing '*' matches any suffix. The first
// match wins, unmatched tags pass through.
using TagMergeMap = std::vector<std::pair<std::string, std::string>>;
TagMergeMap default_tag_merge();
TagMergeMap parse_tag_merge(const std::string& spec);  // "V*=V,N*=N"
std::string merge_tag(const std::string& tag, const TagMergeMap& map);

struct PosConfusion {
  // target tag -> source tag -> count / percentage
  std::map<std::string, std::map<std::string, double>> counts;
  std::map<std::string, std::map<std::string, double>> percent;
};

// links[s] are (src, tgt) pairs for sentence s. Tag counts must agree with
// src_lengths / tgt_lengths.
PosConfusion pos_confusion(const std::vector<std::vector<Link>>& links,
                           const std::vector<TaggedSentence>& src_pos,
                           const std::vector<TaggedSentence>& tgt_pos,
                           const std::vector<std::size_t>& src_lengths,
                           const std::vector<std::size_t>& tgt_lengths,
                           const TagMergeMap& merge = default_tag_merge());

// --- embeddings ------------------------------------------------------------------

struct Neighbour {
  int id = 0;
  double distance = 0.0;
};

// Target words closest to W x for each source word, by Euclidean distance.
std::vector<std::vector<Neighbour>> nearest_target_words(
    const ModelParams& params, const std::vector<int>& src_word_ids,
    std::size_t k, bool include_reserved = false);

// --- reports -----------------------------------------------------------------------

struct MetricReport {
  std::string name;
  double value = 0.0;
  nlohmann::ordered_json breakdown = nlohmann::ordered_json::object();
  std::size_t n_sentences = 0;

  std::string to_json() const;
};

}  // namespace bnmt

#endif  // BNMT_ANALYSIS_HPP_
