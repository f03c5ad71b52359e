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

#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "checkpoint.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "train.hpp"

namespace bnmt {

namespace fs = std::filesystem;

namespace {

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    fail(ErrorKind::kIo, "cannot create directory " + dir);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path);
  return f;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Runs body(i) for i in [0, n) on up to `threads` workers. The first error
// (by index) is rethrown.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<int> strip_eos(std::vector<int> toks) {
  if (!toks.empty() && toks.back() == kEos) toks.pop_back();
  return toks;
}

std::string links_string(const std::vector<Link>& links) {
  std::string out;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(links[i].first) + "-" + std::to_string(links[i].second);
  }
  return out;
}

std::vector<Sentence> read_sentences(const std::string& path) {
  std::vector<Sentence> out;
  for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
  return out;
}

double greedy_bleu(const ModelParams& params, const Vocabulary& tgt_vocab,
                   const std::vector<EncodedPair>& dev) {
  constexpr std::size_t kChunk = 64;
  std::vector<Sentence> hyps, refs;
  for (std::size_t b = 0; b < dev.size(); b += kChunk) {
    std::vector<std::vector<int>> srcs;
    for (std::size_t i = b; i < std::min(dev.size(), b + kChunk); ++i) {
      srcs.push_back(dev[i].src);
    }
    for (const auto& h : greedy_decode_batch(params, srcs)) {
      hyps.push_back(tgt_vocab.decode(strip_eos(h.tokens)));
    }
  }
  for (const auto& p : dev) refs.push_back(tgt_vocab.decode(p.tgt));
  return corpus_bleu(hyps, refs);
}

}  // namespace

// --- toygen -------------------------------------------------------------------

void cmd_toygen(const ToySpec& spec, const std::string& out_dir) {
  const ToyCorpus corpus = gen_toy_corpus(spec);
  make_dir(out_dir);
  std::vector<std::string> src, tgt, align;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    src.push_back(join_tokens(corpus.pairs[i].src));
    tgt.push_back(join_tokens(corpus.pairs[i].tgt));
    align.push_back(format_pharaoh(corpus.gold[i]));
  }
  const fs::path dir(out_dir);
  write_lines((dir / "corpus.src").string(), src);
  write_lines((dir / "corpus.tgt").string(), tgt);
  write_lines((dir / "corpus.align").string(), align);
  open_out((dir / "manifest.json").string()) << toy_manifest_json(spec) << "\n";
}

ToyCorpus toy_from_manifest(const std::string& manifest_path) {
  return gen_toy_corpus(parse_toy_manifest(read_file(manifest_path)));
}

// --- train --------------------------------------------------------------------

TrainSummary cmd_train(const TrainOptions& options) {
  const RunConfig& cfg = options.config;
  ModelConfig mc = cfg.model_config();
  const TrainConfig tc = cfg.train_config();
  tc.validate();
  const double init_scale = cfg.real("init_scale");
  if (cfg.get("train_src").empty() || cfg.get("train_tgt").empty()) {
    fail(ErrorKind::kConfig, "train_src and train_tgt are required");
  }

  LoadReport train = load_parallel(cfg.get("train_src"), cfg.get("train_tgt"), mc.max_len);
  std::vector<SentencePair> dev_pairs;
  if (!cfg.get("dev_src").empty() || !cfg.get("dev_tgt").empty()) {
    dev_pairs = load_parallel(cfg.get("dev_src"), cfg.get("dev_tgt"), mc.max_len).pairs;
  } else if (const std::size_t n = cfg.count("dev_size"); n > 0) {
    if (n >= train.pairs.size()) {
      fail(ErrorKind::kConfig, "dev_size " + std::to_string(n) + " leaves no training pairs");
    }
    dev_pairs.assign(train.pairs.end() - static_cast<std::ptrdiff_t>(n), train.pairs.end());
    train.pairs.resize(train.pairs.size() - n);
  }
  if (train.pairs.empty()) fail(ErrorKind::kInput, "no training pairs after filtering");

  std::optional<Checkpoint> start;
  if (const std::string& from = cfg.get("init_from"); !from.empty()) {
    start = load_checkpoint(from);
  }
  Vocabulary src_vocab, tgt_vocab;
  if (start) {
    src_vocab = start->src_vocab;
    tgt_vocab = start->tgt_vocab;
  } else {
    std::vector<Sentence> s, t;
    for (const auto& p : train.pairs) {
      s.push_back(p.src);
      t.push_back(p.tgt);
    }
    src_vocab = Vocabulary::build(s, mc.src_vocab_size);
    tgt_vocab = Vocabulary::build(t, mc.tgt_vocab_size);
  }
  mc.src_vocab_size = src_vocab.size();
  mc.tgt_vocab_size = tgt_vocab.size();

  TrainSummary summary;
  ModelParams params;
  if (!start) {
    params = init_params(mc, tc.seed, init_scale);
  } else if (start->params.config().variant == mc.variant) {
    if (!(start->params.config() == mc)) {
      fail(ErrorKind::kIncompatible, "checkpoint " + cfg.get("init_from") +
                                         " does not match the configured model");
    }
    params = start->params;
  } else {
    BridgeInit init = pretrain_then_bridge(start->params, mc, tc.seed, init_scale);
    params = std::move(init.params);
    summary.copied = std::move(init.copied);
    summary.fresh = std::move(init.fresh);
  }

  const auto train_enc = encode_pairs(train.pairs, src_vocab, tgt_vocab);
  const auto dev_enc = encode_pairs(dev_pairs, src_vocab, tgt_vocab);
  summary.train_pairs = train_enc.size();
  summary.dev_pairs = dev_enc.size();

  make_dir(options.out_dir);
  const fs::path dir(options.out_dir);
  open_out((dir / "config.txt").string()) << cfg.to_text();
  std::ofstream train_log = open_out((dir / "train.jsonl").string());
  std::ofstream dev_log = open_out((dir / "dev.jsonl").string());

  OptimizerState opt;
  TrainState state;
  state.rng = Rng(tc.seed);
  const std::size_t save_every = cfg.count("save_every");
  bool have_best = false;

  TrainCallbacks cb;
  const bool timing = cfg.flag("log_timing");
  cb.on_step = [&](const StepRecord& r) { train_log << r.to_json(timing) << "\n"; };
  cb.on_epoch = [&](std::size_t epoch, const ModelParams& p) {
    train_log.flush();
    Checkpoint ck{p, src_vocab, tgt_vocab, opt, state};
    // Without a dev split the latest epoch counts as the best.
    const bool scored = !dev_enc.empty();
    const double bleu = scored ? greedy_bleu(p, tgt_vocab, dev_enc) : 0.0;
    const bool better = !have_best || (scored && bleu > summary.best_bleu) || !scored;
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["step"] = state.step;
    if (scored) j["dev_bleu"] = bleu;
    j["best"] = better;
    dev_log << j.dump() << "\n" << std::flush;
    if (better) {
      have_best = true;
      summary.best_bleu = bleu;
      summary.best_epoch = epoch;
      save_checkpoint((dir / "best.ckpt").string(), ck);
    }
    save_checkpoint((dir / "last.ckpt").string(), ck);
    if (save_every && epoch % save_every == 0) {
      save_checkpoint((dir / ("epoch-" + std::to_string(epoch) + ".ckpt")).string(), ck);
    }
    return true;
  };
  train_loop(params, opt, state, train_enc, tc, cb, timing);
  summary.epochs = state.epoch;
  summary.steps = state.step;
  return summary;
}

// --- translate ----------------------------------------------------------------

TranslateSummary cmd_translate(const TranslateOptions& options) {
  if (options.beam_size == 0) fail(ErrorKind::kUsage, "beam size must be positive");
  const Checkpoint ck = load_checkpoint(options.checkpoint);
  const auto lines = read_lines(options.input);
  TranslateSummary summary;
  summary.lines = lines.size();
  std::vector<std::vector<int>> srcs;
  for (const auto& line : lines) {
    const Sentence toks = split_tokens(line);
    std::vector<int> ids = ck.src_vocab.encode(toks);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == kUnk && toks[i] != ck.src_vocab.token(kUnk)) ++summary.unk_tokens;
    }
    srcs.push_back(std::move(ids));
  }
  DecodeOptions d;
  d.beam_size = options.beam_size;
  d.max_out_len = options.max_out_len;
  d.length_norm = options.length_norm;
  std::vector<std::string> out(lines.size()), dumps(lines.size());
  const bool dump = !options.attention_out.empty();
  parallel_for(lines.size(), options.threads, [&](std::size_t i) {
    const auto pool = beam_search(ck.params, srcs[i], d);
    const Hypothesis& best = pool.front();
    out[i] = join_tokens(ck.tgt_vocab.decode(strip_eos(best.tokens)));
    if (dump) {
      dumps[i] = hypothesis_attention(best, ck.src_vocab, ck.tgt_vocab, srcs[i]).to_json();
    }
  });
  write_lines(options.output, out);
  if (dump) write_lines(options.attention_out, dumps);
  return summary;
}

// --- align --------------------------------------------------------------------

std::size_t cmd_align(const AlignOptions& options) {
  const Checkpoint ck = load_checkpoint(options.checkpoint);
  const auto src = read_lines(options.src);
  const auto ref = read_lines(options.ref);
  if (src.size() != ref.size()) {
    fail(ErrorKind::kAlignment, options.src + " has " + std::to_string(src.size()) +
                                    " lines but " + options.ref + " has " +
                                    std::to_string(ref.size()));
  }
  std::vector<std::string> out(src.size()), links(src.size());
  parallel_for(src.size(), options.threads, [&](std::size_t i) {
    EncodedPair pr{ck.src_vocab.encode(split_tokens(src[i])),
                   ck.tgt_vocab.encode(split_tokens(ref[i]))};
    const ForcedResult r = force_decode_batch(ck.params, {pr}).front();
    const auto hard = attention_links(r.attention);
    links[i] = links_string(hard);
    nlohmann::ordered_json j =
        make_attention_matrix(r.attention, ck.src_vocab, ck.tgt_vocab, pr.src, pr.tgt).json();
    j["nll"] = r.nll;
    j["links"] = links[i];
    out[i] = j.dump();
  });
  write_lines(options.output, out);
  if (!options.pharaoh_out.empty()) write_lines(options.pharaoh_out, links);
  return src.size();
}

// --- analyze ------------------------------------------------------------------

std::vector<AttentionMatrix> read_attention_dump(const std::string& path) {
  std::vector<AttentionMatrix> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(AttentionMatrix::from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kInput, path + ":" + std::to_string(i + 1) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<GoldAlignment> read_pharaoh_file(const std::string& path) {
  std::vector<GoldAlignment> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(parse_pharaoh(lines[i]));
    } catch (const Error& e) {
      fail(e.kind(), path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

namespace {

void require(const std::string& value, const char* flag, const std::string& metric) {
  if (value.empty()) fail(ErrorKind::kUsage, metric + " needs " + flag);
}

void require_same(std::size_t a, std::size_t b, const std::string& what_a,
                  const std::string& what_b) {
  if (a != b) {
    fail(ErrorKind::kAlignment, what_a + " has " + std::to_string(a) + " lines but " +
                                    what_b + " has " + std::to_string(b));
  }
}

struct HypRefs {
  std::vector<Sentence> hyps;
  std::vector<std::vector<Sentence>> refs;
};

HypRefs load_hyp_refs(const AnalyzeOptions& o) {
  require(o.hyp, "--hyp", o.metric);
  if (o.refs.empty()) fail(ErrorKind::kUsage, o.metric + " needs --ref");
  HypRefs h;
  h.hyps = read_sentences(o.hyp);
  h.refs.resize(h.hyps.size());
  for (const auto& path : o.refs) {
    const auto r = read_sentences(path);
    require_same(r.size(), h.hyps.size(), path, o.hyp);
    for (std::size_t i = 0; i < r.size(); ++i) h.refs[i].push_back(r[i]);
  }
  return h;
}

// Predicted hard links per sentence, from a dump or a Pharaoh file.
std::vector<std::vector<Link>> load_predicted(const AnalyzeOptions& o) {
  std::vector<std::vector<Link>> out;
  if (!o.attention.empty()) {
    for (const auto& m : read_attention_dump(o.attention)) {
      out.push_back(attention_links(m.weights));
    }
  } else if (!o.alignment.empty()) {
    for (const auto& a : read_pharaoh_file(o.alignment)) {
      std::vector<Link> l = a.sure;
      l.insert(l.end(), a.possible.begin(), a.possible.end());
      out.push_back(std::move(l));
    }
  } else {
    fail(ErrorKind::kUsage, o.metric + " needs --attention or --alignment");
  }
  return out;
}

void put_counts(nlohmann::ordered_json& j, const AerCounts& c) {
  j["a_and_s"] = c.a_and_s;
  j["a_and_p"] = c.a_and_p;
  j["a"] = c.a;
  j["s"] = c.s;
}

MetricReport analyze_bleu(const AnalyzeOptions& o) {
  const HypRefs h = load_hyp_refs(o);
  MetricReport r;
  r.name = o.metric;
  r.n_sentences = h.hyps.size();
  BleuOptions b;
  b.case_insensitive = !o.case_sensitive;
  b.smooth = o.smooth;
  if (o.metric == "bleu1") b.max_n = 1;
  const BleuStats st = bleu_stats(h.hyps, h.refs, b);
  r.value = o.metric == "bleu1" ? one_gram_bleu(h.hyps, h.refs, b.case_insensitive)
                                : st.score(b);
  auto prec = nlohmann::ordered_json::array();
  for (std::size_t n = 0; n < st.matches.size(); ++n) {
    prec.push_back(st.totals[n] > 0 ? st.matches[n] / st.totals[n] : 0.0);
  }
  r.breakdown["precisions"] = prec;
  r.breakdown["brevity_penalty"] = st.brevity_penalty();
  r.breakdown["hyp_len"] = st.hyp_len;
  r.breakdown["ref_len"] = st.ref_len;
  return r;
}

MetricReport analyze_length_bleu(const AnalyzeOptions& o) {
  const HypRefs h = load_hyp_refs(o);
  require(o.src, "--src", o.metric);
  const auto src = read_sentences(o.src);
  require_same(src.size(), h.hyps.size(), o.src, o.hyp);
  std::vector<std::size_t> lens;
  for (const auto& s : src) lens.push_back(s.size());
  BleuOptions b;
  b.case_insensitive = !o.case_sensitive;
  b.smooth = o.smooth;
  MetricReport r;
  r.name = o.metric;
  r.n_sentences = h.hyps.size();
  r.value = bleu_stats(h.hyps, h.refs, b).score(b);
  for (const auto& bucket : length_bucket_bleu(h.hyps, h.refs, lens, o.edges, b)) {
    r.breakdown[bucket.label] = {{"bleu", bucket.bleu}, {"count", bucket.count}};
  }
  return r;
}

MetricReport analyze_eos_rate(const AnalyzeOptions& o) {
  require(o.attention, "--attention", o.metric);
  const auto dumps = read_attention_dump(o.attention);
  MetricReport r;
  r.name = o.metric;
  r.n_sentences = dumps.size();
  r.value = eos_alignment_rate(dumps);
  r.breakdown["aligned"] = static_cast<std::size_t>(
      std::llround(r.value * static_cast<double>(dumps.size()) / 100.0));
  return r;
}

MetricReport analyze_aer(const AnalyzeOptions& o) {
  require(o.gold, "--gold", o.metric);
  const auto gold = read_pharaoh_file(o.gold);
  MetricReport r;
  r.name = o.metric;
  AerCounts total;
  if (o.metric == "aer") {
    const auto pred = load_predicted(o);
    require_same(pred.size(), gold.size(), "prediction", o.gold);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      total.add(aer_counts(pred[i], make_alignment_set(gold[i])));
    }
    r.n_sentences = pred.size();
  } else {
    require(o.attention, "--attention", o.metric);
    const auto dumps = read_attention_dump(o.attention);
    require_same(dumps.size(), gold.size(), o.attention, o.gold);
    for (std::size_t i = 0; i < dumps.size(); ++i) {
      total.add(saer_counts(crop_eos(dumps[i].weights), make_alignment_set(gold[i])));
    }
    r.n_sentences = dumps.size();
  }
  r.value = total.value();
  put_counts(r.breakdown, total);
  return r;
}

std::vector<std::vector<std::string>> merged_tags(const std::vector<TaggedSentence>& pos,
                                                  const TagMergeMap& merge) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : pos) {
    std::vector<std::string> t;
    for (const auto& tag : s.tags) t.push_back(merge_tag(tag, merge));
    out.push_back(std::move(t));
  }
  return out;
}

MetricReport analyze_rot(const AnalyzeOptions& o) {
  require(o.attention, "--attention", o.metric);
  const auto dumps = read_attention_dump(o.attention);
  std::vector<std::vector<std::string>> tags;
  std::set<std::string> filter(o.tags.begin(), o.tags.end());
  if (!filter.empty()) require(o.src_pos, "--src-pos", o.metric + " with --tags");
  const TagMergeMap merge = o.tag_merge.empty() ? default_tag_merge() : parse_tag_merge(o.tag_merge);
  if (!o.src_pos.empty()) {
    const auto pos = read_pos_file(o.src_pos);
    require_same(pos.size(), dumps.size(), o.src_pos, o.attention);
    tags = merged_tags(pos, merge);
  }
  MetricReport r;
  r.name = o.metric;
  r.n_sentences = dumps.size();
  const RotStats st = rot(dumps, tags, filter);
  r.value = st.percent();
  r.breakdown["over"] = st.over;
  r.breakdown["words"] = st.words;
  if (!filter.empty()) r.breakdown["tags"] = o.tags;
  return r;
}

MetricReport analyze_pos_confusion(const AnalyzeOptions& o) {
  require(o.src_pos, "--src-pos", o.metric);
  require(o.tgt_pos, "--tgt-pos", o.metric);
  const auto links = load_predicted(o);
  const auto sp = read_pos_file(o.src_pos);
  const auto tp = read_pos_file(o.tgt_pos);
  require_same(sp.size(), links.size(), o.src_pos, "prediction");
  require_same(tp.size(), links.size(), o.tgt_pos, "prediction");
  std::vector<std::size_t> sl, tl;
  if (!o.attention.empty()) {
    for (const auto& m : read_attention_dump(o.attention)) {
      sl.push_back(m.cols() - 1);
      tl.push_back(m.rows() - 1);
    }
  } else {
    for (const auto& s : sp) sl.push_back(s.tags.size());
    for (const auto& t : tp) tl.push_back(t.tags.size());
  }
  const TagMergeMap merge = o.tag_merge.empty() ? default_tag_merge() : parse_tag_merge(o.tag_merge);
  const PosConfusion pc = pos_confusion(links, sp, tp, sl, tl, merge);
  MetricReport r;
  r.name = o.metric;
  r.n_sentences = links.size();
  double diag = 0.0, total = 0.0;
  for (const auto& [tt, row] : pc.counts) {
    for (const auto& [st, c] : row) {
      total += c;
      if (st == tt) diag += c;
    }
  }
  // Headline: share of aligned target words whose source tag matches.
  r.value = total > 0.0 ? 100.0 * diag / total : 0.0;
  for (const auto& [tt, row] : pc.percent) {
    nlohmann::ordered_json jr;
    std::vector<std::pair<std::string, double>> cells(row.begin(), row.end());
    std::stable_sort(cells.begin(), cells.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [st, pct] : cells) jr[st] = pct;
    r.breakdown[tt] = jr;
  }
  return r;
}

MetricReport analyze_nearest(const AnalyzeOptions& o) {
  require(o.checkpoint, "--checkpoint", o.metric);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  std::vector<std::string> words = o.words;
  if (words.empty()) {
    require(o.src, "--src or --words", o.metric);
    std::map<std::string, std::size_t> freq;
    for (const auto& s : read_sentences(o.src)) {
      for (const auto& w : s) {
        if (ck.src_vocab.contains(w) && ck.src_vocab.id(w) >= kNumReserved) ++freq[w];
      }
    }
    std::vector<std::pair<std::string, std::size_t>> order(freq.begin(), freq.end());
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < std::min(o.top_frequent, order.size()); ++i) {
      words.push_back(order[i].first);
    }
  }
  std::vector<int> ids;
  for (const auto& w : words) {
    if (!ck.src_vocab.contains(w)) fail(ErrorKind::kInput, "'" + w + "' is not in the source vocabulary");
    ids.push_back(ck.src_vocab.id(w));
  }
  const auto nn = nearest_target_words(ck.params, ids, o.k);
  MetricReport r;
  r.name = o.metric;
  r.n_sentences = 0;
  r.value = static_cast<double>(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (const auto& n : nn[i]) {
      row.push_back({{"token", ck.tgt_vocab.token(n.id)}, {"distance", n.distance}});
    }
    r.breakdown[words[i]] = row;
  }
  return r;
}

}  // namespace

MetricReport cmd_analyze(const AnalyzeOptions& o) {
  const std::string& m = o.metric;
  if (m == "bleu" || m == "bleu1") return analyze_bleu(o);
  if (m == "length-bleu") return analyze_length_bleu(o);
  if (m == "eos-rate") return analyze_eos_rate(o);
  if (m == "aer" || m == "saer") return analyze_aer(o);
  if (m == "rot") return analyze_rot(o);
  if (m == "pos-confusion") return analyze_pos_confusion(o);
  if (m == "nearest") return analyze_nearest(o);
  std::string known;
  for (const auto& k : analyze_metrics()) known += (known.empty() ? "" : ", ") + k;
  fail(ErrorKind::kUsage, "unknown metric '" + m + "' (one of " + known + ")");
}

std::string report_table(const MetricReport& r, std::size_t display_top) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << r.name << ": " << r.value;
  if (r.n_sentences) os << "  (" << r.n_sentences << " sentences)";
  os << "\n";
  if (r.name == "pos-confusion") {
    for (const auto& [tt, row] : r.breakdown.items()) {
      os << "  " << std::left << std::setw(8) << tt;
      std::size_t shown = 0;
      for (const auto& [st, pct] : row.items()) {
        if (display_top && shown++ >= display_top) break;
        os << "  " << st << " " << std::setprecision(2) << pct.get<double>() << "%";
      }
      os << std::setprecision(4) << "\n";
    }
  } else if (r.name == "nearest") {
    for (const auto& [w, row] : r.breakdown.items()) {
      os << "  " << std::left << std::setw(12) << w;
      for (const auto& n : row) {
        os << "  " << n["token"].get<std::string>() << " (" << n["distance"].get<double>() << ")";
      }
      os << "\n";
    }
  } else if (r.name == "length-bleu") {
    for (const auto& [label, b] : r.breakdown.items()) {
      os << "  " << std::left << std::setw(8) << label << b["bleu"].get<double>()
         << "  n=" << b["count"].get<std::size_t>() << "\n";
    }
  } else {
    for (const auto& [k, v] : r.breakdown.items()) os << "  " << k << ": " << v.dump() << "\n";
  }
  return os.str();
}

// --- gradcheck ----------------------------------------------------------------

std::vector<std::string> GradcheckSummary::failing() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.passed) out.push_back(e.suite + "/" + e.name);
  }
  return out;
}

std::string GradcheckSummary::to_json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    rows.push_back({{"suite", e.suite},
                    {"name", e.name},
                    {"max_rel_error", e.max_rel_error},
                    {"tolerance", e.tolerance},
                    {"passed", e.passed}});
  }
  j["entries"] = rows;
  return j.dump();
}

namespace {

struct FaultGuard {
  explicit FaultGuard(std::optional<OpKind> k) { set_adjoint_fault(k); }
  ~FaultGuard() { set_adjoint_fault(std::nullopt); }
};

}  // namespace

GradcheckSummary cmd_gradcheck(const GradcheckSpec& spec) {
  if (spec.length < 2) fail(ErrorKind::kConfig, "gradcheck length must be at least 2");
  if (spec.vocab_size <= kNumReserved) {
    fail(ErrorKind::kConfig, "gradcheck vocab must exceed the reserved ids");
  }
  const FaultGuard guard(spec.inject_fault);
  GradcheckSummary out;

  if (spec.primitives) {
    GradCheckOptions go;
    go.step = spec.primitive_step;
    go.tolerance = spec.primitive_tolerance;
    for (const OpCheck& c : primitive_op_checks(spec.seed)) {
      const GradCheckReport rep = grad_check(c.f, c.points, c.names, go);
      out.entries.push_back({"op", op_name(c.op), rep.max_rel_error, go.tolerance, rep.passed});
    }
  }

  // Fixed sentences of length-1 words plus EOS, ids drawn from the content range.
  Rng data_rng(spec.seed);
  std::vector<EncodedPair> pairs(spec.batch);
  const auto content = spec.vocab_size - kNumReserved;
  for (auto& p : pairs) {
    for (std::size_t t = 0; t + 1 < spec.length; ++t) {
      p.src.push_back(kNumReserved + static_cast<int>(data_rng.below(content)));
      p.tgt.push_back(kNumReserved + static_cast<int>(data_rng.below(content)));
    }
  }
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch batch = make_batch(pairs, idx);

  GradCheckOptions go;
  go.step = spec.step;
  go.tolerance = spec.tolerance;
  for (Variant v : spec.variants) {
    ModelConfig mc;
    mc.embed_dim = spec.embed_dim;
    mc.hidden_dim = spec.hidden_dim;
    mc.readout_dim = spec.embed_dim;
    mc.src_vocab_size = spec.vocab_size;
    mc.tgt_vocab_size = spec.vocab_size;
    mc.max_len = spec.length;
    mc.variant = v;
    ModelParams p = init_params(mc, spec.seed);
    // Spread the weights so attention is far from uniform and every path
    // carries a visible gradient.
    Rng noise(spec.seed + 1);
    for (auto& [name, t] : p.entries()) {
      for (double& x : t.data) x += noise.uniform(-0.5, 0.5);
    }
    std::vector<Tensor> points;
    std::vector<std::string> names;
    for (const auto& [name, t] : p.entries()) {
      points.push_back(t);
      names.push_back(name);
    }
    const LossOptions lo{spec.dropout_rate > 0.0, spec.dropout_rate, false, false};
    auto f = [&](Tape& tape, std::span<const Var> vars) {
      BoundParams bp(p, tape, vars);
      Rng rng(spec.seed + 2);  // same dropout mask on every evaluation
      return batch_loss(bp, batch, lo, rng).loss;
    };
    const GradCheckReport rep = grad_check(f, points, names, go);
    for (const auto& g : rep.groups) {
      out.entries.push_back({variant_name(v), g.name, g.max_rel_error, go.tolerance,
                             g.max_rel_error < go.tolerance});
    }
  }
  out.passed = std::all_of(out.entries.begin(), out.entries.end(),
                           [](const GradcheckEntry& e) { return e.passed; });
  return out;
}

}  // namespace bnmt
