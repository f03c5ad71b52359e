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

#include "analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace bnmt {

namespace {

Sentence normalise(const Sentence& s, bool lower) {
  if (!lower) return s;
  Sentence out = s;
  for (auto& tok : out) {
    for (char& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

std::map<std::vector<std::string>, int> ngram_counts(const Sentence& s, int n) {
  std::map<std::vector<std::string>, int> c;
  if (static_cast<int>(s.size()) < n) return c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++c[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  }
  return c;
}

}  // namespace

// --- BLEU ------------------------------------------------------------------

double BleuStats::brevity_penalty() const {
  if (hyp_len == 0.0) return 0.0;
  return std::exp(std::min(0.0, 1.0 - ref_len / hyp_len));
}

double BleuStats::score(const BleuOptions& options) const {
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < options.max_n; ++n) {
    double m = matches[n], t = totals[n];
    if (options.smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  return brevity_penalty() * std::exp(log_sum / options.max_n);
}

BleuStats bleu_stats(const std::vector<Sentence>& hyps,
                     const std::vector<std::vector<Sentence>>& refs,
                     const BleuOptions& options) {
  if (hyps.empty()) fail(ErrorKind::kInput, "BLEU over an empty corpus");
  if (hyps.size() != refs.size()) {
    fail(ErrorKind::kInput, "BLEU: " + std::to_string(hyps.size()) +
                                " hypotheses but " + std::to_string(refs.size()) +
                                " reference sets");
  }
  if (options.max_n < 1) fail(ErrorKind::kConfig, "BLEU: max_n must be at least 1");
  BleuStats st;
  st.matches.assign(options.max_n, 0.0);
  st.totals.assign(options.max_n, 0.0);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) {
      fail(ErrorKind::kInput, "BLEU: sentence " + std::to_string(i) + " has no reference");
    }
    const Sentence h = normalise(hyps[i], options.case_insensitive);
    std::vector<Sentence> rs;
    for (const auto& r : refs[i]) rs.push_back(normalise(r, options.case_insensitive));

    const double c = static_cast<double>(h.size());
    double best = static_cast<double>(rs[0].size());
    for (const auto& r : rs) {
      const double len = static_cast<double>(r.size());
      const double d = std::abs(len - c), bd = std::abs(best - c);
      if (d < bd || (d == bd && len < best)) best = len;
    }
    st.hyp_len += c;
    st.ref_len += best;

    for (int n = 1; n <= options.max_n; ++n) {
      const auto hc = ngram_counts(h, n);
      std::map<std::vector<std::string>, int> max_ref;
      for (const auto& r : rs) {
        for (const auto& [g, k] : ngram_counts(r, n)) {
          max_ref[g] = std::max(max_ref[g], k);
        }
      }
      for (const auto& [g, k] : hc) {
        st.totals[n - 1] += k;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) st.matches[n - 1] += std::min(k, it->second);
      }
    }
  }
  return st;
}

double corpus_bleu(const std::vector<Sentence>& hyps,
                   const std::vector<std::vector<Sentence>>& refs,
                   const BleuOptions& options) {
  return bleu_stats(hyps, refs, options).score(options);
}

double corpus_bleu(const std::vector<Sentence>& hyps,
                   const std::vector<Sentence>& refs,
                   const BleuOptions& options) {
  std::vector<std::vector<Sentence>> multi;
  multi.reserve(refs.size());
  for (const auto& r : refs) multi.push_back({r});
  return corpus_bleu(hyps, multi, options);
}

double one_gram_bleu(const std::vector<Sentence>& hyps,
                     const std::vector<std::vector<Sentence>>& refs,
                     bool case_insensitive) {
  BleuOptions o;
  o.max_n = 1;
  o.case_insensitive = case_insensitive;
  return corpus_bleu(hyps, refs, o);
}

std::vector<BucketScore> length_bucket_bleu(
    const std::vector<Sentence>& hyps,
    const std::vector<std::vector<Sentence>>& refs,
    const std::vector<std::size_t>& src_lengths,
    const std::vector<std::size_t>& edges, const BleuOptions& options) {
  if (hyps.size() != refs.size() || hyps.size() != src_lengths.size()) {
    fail(ErrorKind::kInput, "length buckets: hypothesis, reference and source counts differ");
  }
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    fail(ErrorKind::kConfig, "length buckets: edges must be strictly increasing");
  }
  const std::size_t nb = edges.size() + 1;
  std::vector<std::vector<Sentence>> bh(nb);
  std::vector<std::vector<std::vector<Sentence>>> br(nb);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const std::size_t b =
        std::lower_bound(edges.begin(), edges.end(), src_lengths[i]) - edges.begin();
    bh[b].push_back(hyps[i]);
    br[b].push_back(refs[i]);
  }
  std::vector<BucketScore> out;
  for (std::size_t b = 0; b < nb; ++b) {
    if (bh[b].empty()) continue;
    BucketScore s;
    const std::size_t lo = b == 0 ? 1 : edges[b - 1] + 1;
    s.label = b < edges.size() ? std::to_string(lo) + "-" + std::to_string(edges[b])
                               : ">" + std::to_string(edges.back());
    if (edges.empty()) s.label = "all";
    s.bleu = corpus_bleu(bh[b], br[b], options);
    s.count = bh[b].size();
    out.push_back(std::move(s));
  }
  return out;
}

// --- alignment ---------------------------------------------------------------

AlignmentSet make_alignment_set(const GoldAlignment& gold) {
  AlignmentSet a;
  a.sure.insert(gold.sure.begin(), gold.sure.end());
  a.possible = a.sure;
  a.possible.insert(gold.possible.begin(), gold.possible.end());
  return a;
}

std::vector<Link> attention_links(const Tensor& attention) {
  if (attention.rows() == 0 || attention.cols() == 0) return {};
  const std::vector<int> hard = hard_align(attention);
  const int src_eos = static_cast<int>(attention.cols()) - 1;
  std::vector<Link> links;
  for (std::size_t i = 0; i + 1 < hard.size(); ++i) {
    if (hard[i] != src_eos) links.emplace_back(hard[i], static_cast<int>(i));
  }
  return links;
}

void AerCounts::add(const AerCounts& o) {
  a_and_s += o.a_and_s;
  a_and_p += o.a_and_p;
  a += o.a;
  s += o.s;
}

double AerCounts::value() const {
  if (a + s == 0.0) fail(ErrorKind::kInput, "AER undefined: no predicted and no sure links");
  return 1.0 - (a_and_s + a_and_p) / (a + s);
}

AerCounts aer_counts(const std::vector<Link>& predicted, const AlignmentSet& gold) {
  const std::set<Link> a(predicted.begin(), predicted.end());
  AerCounts c;
  for (const Link& l : a) {
    c.a_and_s += gold.sure.count(l);
    c.a_and_p += gold.possible.count(l);
  }
  c.a = static_cast<double>(a.size());
  c.s = static_cast<double>(gold.sure.size());
  return c;
}

double aer(const std::vector<Link>& predicted, const AlignmentSet& gold) {
  return aer_counts(predicted, gold).value();
}

AerCounts saer_counts(const Tensor& soft, const AlignmentSet& gold) {
  const std::size_t ty = soft.rows(), tx = soft.cols();
  auto check = [&](const Link& l) {
    if (l.first < 0 || l.second < 0 || static_cast<std::size_t>(l.first) >= tx ||
        static_cast<std::size_t>(l.second) >= ty) {
      fail(ErrorKind::kInput, "SAER: gold link " + std::to_string(l.first) + "-" +
                                  std::to_string(l.second) + " outside the " +
                                  std::to_string(ty) + "x" + std::to_string(tx) +
                                  " matrix");
    }
  };
  AerCounts c;
  for (const Link& l : gold.sure) {
    check(l);
    c.a_and_s += soft.at(l.second, l.first);
  }
  for (const Link& l : gold.possible) {
    check(l);
    c.a_and_p += soft.at(l.second, l.first);
  }
  for (double v : soft.data) c.a += v;
  c.s = static_cast<double>(gold.sure.size());
  return c;
}

double saer(const Tensor& soft, const AlignmentSet& gold) {
  return saer_counts(soft, gold).value();
}

Tensor crop_eos(const Tensor& attention) {
  if (attention.rows() == 0 || attention.cols() == 0) return Tensor({0, 0});
  const std::size_t ty = attention.rows() - 1, tx = attention.cols() - 1;
  Tensor out({ty, tx});
  for (std::size_t i = 0; i < ty; ++i) {
    for (std::size_t j = 0; j < tx; ++j) out.at(i, j) = attention.at(i, j);
  }
  return out;
}

// --- attention statistics -----------------------------------------------------

double eos_alignment_rate(const std::vector<AttentionMatrix>& dumps) {
  if (dumps.empty()) fail(ErrorKind::kInput, "eos-rate over no sentences");
  std::size_t hits = 0;
  for (std::size_t s = 0; s < dumps.size(); ++s) {
    const AttentionMatrix& m = dumps[s];
    if (m.rows() == 0 || m.tgt_tokens.empty() || m.tgt_tokens.back() != kEosToken) {
      fail(ErrorKind::kInput, "sentence " + std::to_string(s) +
                                  ": target does not end with " + kEosToken);
    }
    if (m.src_tokens.empty() || m.src_tokens.back() != kEosToken) {
      fail(ErrorKind::kInput, "sentence " + std::to_string(s) +
                                  ": source does not end with " + kEosToken);
    }
    const std::vector<int> hard = hard_align(m.weights);
    if (hard.back() == static_cast<int>(m.cols()) - 1) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(dumps.size());
}

double RotStats::percent() const {
  return words == 0.0 ? 0.0 : 100.0 * over / words;
}

RotStats rot(const std::vector<AttentionMatrix>& dumps,
             const std::vector<std::vector<std::string>>& src_tags,
             const std::set<std::string>& tag_filter) {
  if (!src_tags.empty() && src_tags.size() != dumps.size()) {
    fail(ErrorKind::kInput, "ROT: " + std::to_string(src_tags.size()) +
                                " tagged sentences for " +
                                std::to_string(dumps.size()) + " dumps");
  }
  RotStats st;
  for (std::size_t s = 0; s < dumps.size(); ++s) {
    const AttentionMatrix& m = dumps[s];
    const std::size_t words = m.cols() > 0 ? m.cols() - 1 : 0;
    if (!src_tags.empty() && src_tags[s].size() != words) {
      fail(ErrorKind::kInput, "ROT: line " + std::to_string(s + 1) + " has " +
                                  std::to_string(src_tags[s].size()) +
                                  " tags for " + std::to_string(words) +
                                  " source words");
    }
    std::vector<std::vector<std::string>> aligned(words);
    for (const Link& l : attention_links(m.weights)) {
      aligned[l.first].push_back(m.tgt_tokens.at(l.second));
    }
    for (std::size_t j = 0; j < words; ++j) {
      if (!tag_filter.empty() && !src_tags.empty() &&
          !tag_filter.count(src_tags[s][j])) {
        continue;
      }
      const std::set<std::string> uniq(aligned[j].begin(), aligned[j].end());
      st.over += static_cast<double>(aligned[j].size() - uniq.size());
      st.words += 1.0;
    }
  }
  return st;
}

// --- POS -----------------------------------------------------------------------

TaggedSentence parse_tagged_line(const std::string& line, std::size_t line_no) {
  TaggedSentence ts;
  for (const std::string& tok : split_tokens(line)) {
    const auto us = tok.rfind('_');
    if (us == std::string::npos || us == 0 || us + 1 == tok.size()) {
      fail(ErrorKind::kInput, "POS line " + std::to_string(line_no) +
                                  ": token '" + tok + "' is not surface_TAG");
    }
    ts.tokens.push_back(tok.substr(0, us));
    ts.tags.push_back(tok.substr(us + 1));
  }
  return ts;
}

std::vector<TaggedSentence> read_pos_file(const std::string& path) {
  std::vector<TaggedSentence> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out.push_back(parse_tagged_line(lines[i], i + 1));
  }
  return out;
}

TagMergeMap default_tag_merge() { return {{"V*", "V"}, {"N*", "N"}}; }

TagMergeMap parse_tag_merge(const std::string& spec) {
  TagMergeMap map;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string item =
        spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
        fail(ErrorKind::kConfig, "tag merge rule '" + item + "' is not PATTERN=TAG");
      }
      map.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return map;
}

std::string merge_tag(const std::string& tag, const TagMergeMap& map) {
  for (const auto& [pattern, target] : map) {
    if (!pattern.empty() && pattern.back() == '*') {
      if (tag.compare(0, pattern.size() - 1, pattern, 0, pattern.size() - 1) == 0) {
        return target;
      }
    } else if (tag == pattern) {
      return target;
    }
  }
  return tag;
}

PosConfusion pos_confusion(const std::vector<std::vector<Link>>& links,
                           const std::vector<TaggedSentence>& src_pos,
                           const std::vector<TaggedSentence>& tgt_pos,
                           const std::vector<std::size_t>& src_lengths,
                           const std::vector<std::size_t>& tgt_lengths,
                           const TagMergeMap& merge) {
  const std::size_t n = links.size();
  if (src_pos.size() != n || tgt_pos.size() != n || src_lengths.size() != n ||
      tgt_lengths.size() != n) {
    fail(ErrorKind::kInput, "POS confusion: sentence counts differ");
  }
  PosConfusion pc;
  for (std::size_t s = 0; s < n; ++s) {
    if (src_pos[s].tags.size() != src_lengths[s]) {
      fail(ErrorKind::kInput, "source POS line " + std::to_string(s + 1) + " has " +
                                  std::to_string(src_pos[s].tags.size()) +
                                  " tokens, sentence has " +
                                  std::to_string(src_lengths[s]));
    }
    if (tgt_pos[s].tags.size() != tgt_lengths[s]) {
      fail(ErrorKind::kInput, "target POS line " + std::to_string(s + 1) + " has " +
                                  std::to_string(tgt_pos[s].tags.size()) +
                                  " tokens, sentence has " +
                                  std::to_string(tgt_lengths[s]));
    }
    for (const Link& l : links[s]) {
      if (static_cast<std::size_t>(l.first) >= src_lengths[s] ||
          static_cast<std::size_t>(l.second) >= tgt_lengths[s]) {
        fail(ErrorKind::kInput, "POS confusion: link out of range on line " +
                                    std::to_string(s + 1));
      }
      const std::string tt = merge_tag(tgt_pos[s].tags[l.second], merge);
      const std::string st = merge_tag(src_pos[s].tags[l.first], merge);
      pc.counts[tt][st] += 1.0;
    }
  }
  for (const auto& [tt, row] : pc.counts) {
    double total = 0.0;
    for (const auto& [st, c] : row) total += c;
    for (const auto& [st, c] : row) pc.percent[tt][st] = 100.0 * c / total;
  }
  return pc;
}

// --- embeddings ------------------------------------------------------------------

std::vector<std::vector<Neighbour>> nearest_target_words(
    const ModelParams& params, const std::vector<int>& src_word_ids,
    std::size_t k, bool include_reserved) {
  const Tensor& emb = params.get("tgt_embed");
  const std::size_t v = emb.rows(), e = emb.cols();
  std::vector<std::vector<Neighbour>> out;
  for (int id : src_word_ids) {
    const std::vector<double> wx = bridge_transform(params, id);
    std::vector<Neighbour> all;
    for (std::size_t r = include_reserved ? 0 : kNumReserved; r < v; ++r) {
      double d = 0.0;
      for (std::size_t c = 0; c < e; ++c) {
        const double diff = wx[c] - emb.at(r, c);
        d += diff * diff;
      }
      all.push_back({static_cast<int>(r), std::sqrt(d)});
    }
    std::stable_sort(all.begin(), all.end(), [](const Neighbour& a, const Neighbour& b) {
      return a.distance < b.distance;
    });
    all.resize(std::min(k, all.size()));
    out.push_back(std::move(all));
  }
  return out;
}

// --- reports -----------------------------------------------------------------------

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["value"] = value;
  j["breakdown"] = breakdown;
  j["n_sentences"] = n_sentences;
  return j.dump();
}

}  // namespace bnmt
