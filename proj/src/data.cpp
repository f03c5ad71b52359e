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

#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace bnmt {

Sentence split_tokens(const std::string& line) {
  Sentence out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const Sentence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// --- Vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (const char* t : {kPadToken, kUnkToken, kEosToken, kBosToken}) append(t);
}

void Vocabulary::append(const std::string& token) {
  if (ids_.count(token)) {
    fail(ErrorKind::kInput, "duplicate vocabulary token '" + token + "'");
  }
  ids_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus,
                             std::size_t cap) {
  if (cap < kNumReserved + 1) {
    fail(ErrorKind::kConfig, "vocabulary cap must be at least 5");
  }
  std::map<std::string, std::size_t> counts;
  std::size_t running = 0;
  for (const Sentence& s : corpus) {
    for (const std::string& t : s) {
      ++counts[t];
      ++running;
    }
  }
  if (running == 0) fail(ErrorKind::kInput, "cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  // counts is already in lexicographic order; a stable sort keeps it for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= cap) break;
    if (v.contains(tok)) continue;  // a literal "<unk>" in the data
    v.append(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) v.append(t);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    fail(ErrorKind::kLookup, "token id " + std::to_string(id) +
                                 " outside vocabulary of " +
                                 std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const Sentence& s) const {
  std::vector<int> out;
  out.reserve(s.size());
  for (const auto& t : s) out.push_back(id(t));
  return out;
}

Sentence Vocabulary::decode(std::span<const int> ids) const {
  Sentence out;
  for (int id : ids) out.push_back(token(id));
  return out;
}

std::vector<std::string> Vocabulary::content_tokens() const {
  return {tokens_.begin() + kNumReserved, tokens_.end()};
}

double coverage(const Vocabulary& vocab, const std::vector<Sentence>& corpus) {
  std::size_t total = 0, known = 0;
  for (const Sentence& s : corpus) {
    for (const auto& t : s) {
      ++total;
      if (vocab.contains(t)) ++known;
    }
  }
  return total ? static_cast<double>(known) / total : 0.0;
}

// --- files ----------------------------------------------------------------

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "' for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  for (const auto& l : lines) out << l << '\n';
  if (!out) fail(ErrorKind::kIo, "write to '" + path + "' failed");
}

LoadReport filter_pairs(const std::vector<std::string>& src_lines,
                        const std::vector<std::string>& tgt_lines,
                        std::size_t max_len) {
  if (src_lines.size() != tgt_lines.size()) {
    fail(ErrorKind::kAlignment,
         "parallel files differ in length: " + std::to_string(src_lines.size()) +
             " source lines vs " + std::to_string(tgt_lines.size()) +
             " target lines");
  }
  LoadReport report;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair p{split_tokens(src_lines[i]), split_tokens(tgt_lines[i])};
    if (p.src.empty() || p.tgt.empty()) {
      ++report.dropped_empty;
    } else if (p.src.size() > max_len || p.tgt.size() > max_len) {
      ++report.dropped_long;
    } else {
      report.pairs.push_back(std::move(p));
    }
  }
  return report;
}

LoadReport load_parallel(const std::string& src_path,
                         const std::string& tgt_path, std::size_t max_len) {
  return filter_pairs(read_lines(src_path), read_lines(tgt_path), max_len);
}

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs,
                                      const Vocabulary& src_vocab,
                                      const Vocabulary& tgt_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({src_vocab.encode(p.src), tgt_vocab.encode(p.tgt)});
  }
  return out;
}

// --- batching ---------------------------------------------------------------

Batch make_batch(const std::vector<EncodedPair>& pairs,
                 std::span<const std::size_t> indices,
                 std::size_t extra_src_pad, std::size_t extra_tgt_pad) {
  Batch b;
  b.indices.assign(indices.begin(), indices.end());
  std::size_t tx = 0, ty = 0;
  for (std::size_t i : indices) {
    tx = std::max(tx, pairs[i].src.size() + 1);
    ty = std::max(ty, pairs[i].tgt.size() + 1);
  }
  tx += extra_src_pad;
  ty += extra_tgt_pad;
  const std::size_t n = indices.size();
  b.src = IdMatrix(n, tx);
  b.tgt = IdMatrix(n, ty);
  b.src_mask = Tensor({n, tx});
  b.tgt_mask = Tensor({n, ty});
  for (std::size_t r = 0; r < n; ++r) {
    const EncodedPair& p = pairs[indices[r]];
    for (std::size_t j = 0; j < p.src.size(); ++j) b.src.at(r, j) = p.src[j];
    b.src.at(r, p.src.size()) = kEos;
    for (std::size_t j = 0; j <= p.src.size(); ++j) b.src_mask.at(r, j) = 1.0;
    for (std::size_t j = 0; j < p.tgt.size(); ++j) b.tgt.at(r, j) = p.tgt[j];
    b.tgt.at(r, p.tgt.size()) = kEos;
    for (std::size_t j = 0; j <= p.tgt.size(); ++j) b.tgt_mask.at(r, j) = 1.0;
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs,
                                std::size_t batch_size, std::uint64_t seed,
                                bool bucketing) {
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch_size must be at least 1");
  Rng rng(seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  if (bucketing) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return pairs[a].src.size() < pairs[b].src.size();
                     });
  }
  std::vector<std::vector<std::size_t>> slices;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    slices.emplace_back(order.begin() + i, order.begin() + end);
  }
  if (bucketing) rng.shuffle(slices);
  std::vector<Batch> out;
  out.reserve(slices.size());
  for (const auto& s : slices) out.push_back(make_batch(pairs, s));
  return out;
}

std::vector<EncodedPair> unbatch(const Batch& batch) {
  std::vector<EncodedPair> out(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (std::size_t j = 0; j < batch.src.cols; ++j) {
      const int id = batch.src.at(r, j);
      if (id == kEos || batch.src_mask.at(r, j) == 0.0) break;
      out[r].src.push_back(id);
    }
    for (std::size_t j = 0; j < batch.tgt.cols; ++j) {
      const int id = batch.tgt.at(r, j);
      if (id == kEos || batch.tgt_mask.at(r, j) == 0.0) break;
      out[r].tgt.push_back(id);
    }
  }
  return out;
}

double padding_fraction(const std::vector<Batch>& batches) {
  double cells = 0.0, pad = 0.0;
  for (const Batch& b : batches) {
    for (const Tensor* m : {&b.src_mask, &b.tgt_mask}) {
      for (double v : m->data) {
        cells += 1.0;
        if (v == 0.0) pad += 1.0;
      }
    }
  }
  return cells > 0.0 ? pad / cells : 0.0;
}

// --- toy corpus ---------------------------------------------------------------

std::string ToyCorpus::lexicon_image(const std::string& src_token) const {
  if (src_token.size() < 2 || src_token[0] != 's') return "";
  const int i = std::stoi(src_token.substr(1));
  if (i < 0 || static_cast<std::size_t>(i) >= lexicon.size()) return "";
  return target_word(lexicon[i]);
}

const char* swap_mode_name(SwapMode mode) {
  return mode == SwapMode::kLexical ? "lexical" : "random";
}

SwapMode parse_swap_mode(const std::string& name) {
  if (name == "lexical") return SwapMode::kLexical;
  if (name == "random") return SwapMode::kRandom;
  fail(ErrorKind::kConfig, "unknown swap mode '" + name + "' (lexical | random)");
}

ToyCorpus gen_toy_corpus(const ToySpec& spec) {
  if (spec.vocab_size < 10) fail(ErrorKind::kConfig, "toy vocab_size must be at least 10");
  if (spec.min_len < 1 || spec.min_len > spec.max_len) {
    fail(ErrorKind::kConfig, "toy lengths need 1 <= min_len <= max_len");
  }
  if (!(spec.swap_prob >= 0.0 && spec.swap_prob <= 1.0)) {
    fail(ErrorKind::kConfig, "toy swap_prob must lie in [0, 1]");
  }
  Rng rng(spec.seed);
  ToyCorpus corpus;
  corpus.spec = spec;
  corpus.lexicon.resize(spec.vocab_size);
  std::iota(corpus.lexicon.begin(), corpus.lexicon.end(), 0);
  rng.shuffle(corpus.lexicon);
  corpus.trigger.assign(spec.vocab_size, false);
  if (spec.swap_mode == SwapMode::kLexical) {
    std::vector<int> types(spec.vocab_size);
    std::iota(types.begin(), types.end(), 0);
    rng.shuffle(types);
    const auto n_trigger = static_cast<std::size_t>(
        std::llround(spec.swap_prob * static_cast<double>(spec.vocab_size)));
    for (std::size_t i = 0; i < n_trigger; ++i) corpus.trigger[types[i]] = true;
  }

  const std::size_t span = spec.max_len - spec.min_len + 1;
  for (std::size_t n = 0; n < spec.n_pairs; ++n) {
    const std::size_t len = spec.min_len + rng.below(span);
    std::vector<int> words(len);
    for (int& w : words) w = static_cast<int>(rng.below(spec.vocab_size));
    // order[j] = source position translated at target position j
    std::vector<int> order(len);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i + 1 < len;) {
      const bool swap = spec.swap_mode == SwapMode::kLexical
                            ? corpus.trigger[words[i]]
                            : rng.uniform() < spec.swap_prob;
      if (swap) {
        std::swap(order[i], order[i + 1]);
        i += 2;
      } else {
        i += 1;
      }
    }
    SentencePair pair;
    GoldAlignment gold;
    for (std::size_t i = 0; i < len; ++i) pair.src.push_back(corpus.source_word(words[i]));
    for (std::size_t j = 0; j < len; ++j) {
      pair.tgt.push_back(corpus.target_word(corpus.lexicon[words[order[j]]]));
      gold.sure.emplace_back(order[j], static_cast<int>(j));
    }
    std::sort(gold.sure.begin(), gold.sure.end());
    corpus.pairs.push_back(std::move(pair));
    corpus.gold.push_back(std::move(gold));
  }
  return corpus;
}

std::string toy_manifest_json(const ToySpec& spec) {
  nlohmann::ordered_json j;
  j["format"] = "bnmt-toy";
  j["version"] = 1;
  j["vocab_size"] = spec.vocab_size;
  j["n_pairs"] = spec.n_pairs;
  j["min_len"] = spec.min_len;
  j["max_len"] = spec.max_len;
  j["swap_prob"] = spec.swap_prob;
  j["seed"] = spec.seed;
  j["swap_mode"] = swap_mode_name(spec.swap_mode);
  return j.dump(2);
}

ToySpec parse_toy_manifest(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "bnmt-toy") {
      fail(ErrorKind::kFormat, "not a toy corpus manifest");
    }
    ToySpec s;
    s.vocab_size = j.at("vocab_size").get<std::size_t>();
    s.n_pairs = j.at("n_pairs").get<std::size_t>();
    s.min_len = j.at("min_len").get<std::size_t>();
    s.max_len = j.at("max_len").get<std::size_t>();
    s.swap_prob = j.at("swap_prob").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.swap_mode = parse_swap_mode(j.value("swap_mode", "lexical"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad toy manifest: ") + e.what());
  }
}

std::string format_pharaoh(const GoldAlignment& a) {
  std::vector<std::pair<Link, char>> all;
  for (const Link& l : a.sure) all.push_back({l, '-'});
  for (const Link& l : a.possible) all.push_back({l, '?'});
  std::sort(all.begin(), all.end());
  std::string out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(all[i].first.first) + all[i].second +
           std::to_string(all[i].first.second);
  }
  return out;
}

GoldAlignment parse_pharaoh(const std::string& line) {
  GoldAlignment a;
  for (const std::string& tok : split_tokens(line)) {
    const auto sep = tok.find_first_of("-?");
    if (sep == std::string::npos || sep == 0 || sep + 1 == tok.size()) {
      fail(ErrorKind::kInput, "bad alignment link '" + tok + "'");
    }
    try {
      std::size_t used_a = 0, used_b = 0;
      const std::string lhs = tok.substr(0, sep), rhs = tok.substr(sep + 1);
      const int i = std::stoi(lhs, &used_a);
      const int j = std::stoi(rhs, &used_b);
      if (used_a != lhs.size() || used_b != rhs.size() || i < 0 || j < 0) {
        throw std::invalid_argument(tok);
      }
      (tok[sep] == '-' ? a.sure : a.possible).emplace_back(i, j);
    } catch (const std::logic_error&) {
      fail(ErrorKind::kInput, "bad alignment link '" + tok + "'");
    }
  }
  return a;
}

}  // namespace bnmt
