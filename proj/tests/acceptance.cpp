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

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   bnmt_acceptance [--only 1,2,...] [--seeds N]
//
// Exit status is the number of failing criteria (0 when all pass).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "analysis.hpp"
#include "checkpoint.hpp"
#include "commands.hpp"
#include "decode.hpp"
#include "experiment.hpp"
#include "model.hpp"
#include "train.hpp"

namespace fs = std::filesystem;
using namespace bnmt;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 60.0;
constexpr double kCountBudgetSec = 1.0;
constexpr double kBeamScoreTol = 1e-9;
constexpr double kBeamBudgetSec = 10.0;
constexpr double kMetricTol = 1e-12;
constexpr double kMetricBudgetSec = 10.0;
constexpr double kToyBleu = 0.90;
constexpr std::size_t kToyMaxEpochs = 30;
constexpr double kToyBudgetSec = 15.0 * 60.0;
constexpr double kLexiconShare = 0.80;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("bnmt-acceptance-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

// --- 1 --------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  GradcheckSpec spec;  // e=8, h=12, V=20, T=5
  spec.primitives = false;
  spec.tolerance = kGradTol;
  const GradcheckSummary s = cmd_gradcheck(spec);
  const double sec = seconds_since(t0);
  std::map<std::string, double> worst;
  for (const auto& e : s.entries) worst[e.suite] = std::max(worst[e.suite], e.max_rel_error);
  std::string d;
  for (const auto& [v, w] : worst) d += v + " " + fmt("%.2e", w) + ", ";
  d += fmt("%.1f s", sec);
  return {s.passed && worst.size() == 4 && sec < kGradBudgetSec, d};
}

// --- 2 --------------------------------------------------------------------------

Outcome parameter_accounting() {
  const auto t0 = Clock::now();
  ModelConfig c;  // 620 / 1000 / 30k / 30k
  const double base = static_cast<double>(count_params(c, Variant::kBaseline));
  const double src = static_cast<double>(count_params(c, Variant::kSourceBridge));
  const double tgt = static_cast<double>(count_params(c, Variant::kTargetBridge));
  const double dir = static_cast<double>(count_params(c, Variant::kDirectBridge));
  const bool ok = dir - src == 384400.0 && std::abs((src - base) - 3.7e6) <= 0.2 * 3.7e6 &&
                  std::abs((tgt - base) - 1.8e6) <= 0.2 * 1.8e6 &&
                  std::abs(base - 74.8e6) <= 0.1 * 74.8e6;
  const double sec = seconds_since(t0);
  return {ok && sec < kCountBudgetSec,
          "baseline " + fmt("%.2fM", base / 1e6) + ", src-base " + fmt("%.3fM", (src - base) / 1e6) +
              ", tgt-base " + fmt("%.3fM", (tgt - base) / 1e6) + ", direct-src " + fmt("%.0f", dir - src)};
}

// --- 3 --------------------------------------------------------------------------

// Independent scorer: teacher-forces one token sequence step by step.
double sequence_log_prob(const ModelParams& params, const std::vector<int>& src,
                         const std::vector<int>& seq) {
  Tape tape(false);
  BoundParams p(params, tape, false);
  Rng rng(0);
  IdMatrix ids(1, src.size() + 1);
  Tensor mask({1, src.size() + 1}, 1.0);
  for (std::size_t j = 0; j < src.size(); ++j) ids.at(0, j) = src[j];
  ids.at(0, src.size()) = kEos;
  const EncoderOutput enc = encode(p, ids, mask);
  Var s = decoder_init(p, enc);
  int prev = kBos;
  double total = 0.0;
  for (int w : seq) {
    const std::vector<int> y{prev};
    const DecoderStepOutput out = decoder_step(p, s, y, enc, false, 0.0, rng);
    const Tensor& z = out.logits.value();
    double mx = -INFINITY;
    for (double v : z.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : z.data) sum += std::exp(v - mx);
    total += z.data[static_cast<std::size_t>(w)] - mx - std::log(sum);
    s = out.state;
    prev = w;
  }
  return total;
}

Outcome beam_optimality() {
  const auto t0 = Clock::now();
  constexpr std::size_t kMaxOut = 4;
  std::vector<int> alphabet;
  ModelConfig c;
  c.embed_dim = 6;
  c.hidden_dim = 8;
  c.readout_dim = 6;
  c.src_vocab_size = 10;
  c.tgt_vocab_size = 6;
  c.max_len = 8;
  for (int w = 0; w < static_cast<int>(c.tgt_vocab_size); ++w) {
    if (w != kPad && w != kBos) alphabet.push_back(w);
  }
  std::size_t agree = 0, trials = 0;
  double worst = 0.0;
  for (Variant v : {Variant::kBaseline, Variant::kSourceBridge, Variant::kTargetBridge,
                    Variant::kDirectBridge}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      c.variant = v;
      // Wide init so the distributions are far from uniform.
      const ModelParams params = init_params(c, seed, 1.0);
      Rng r(seed * 7);
      std::vector<int> src;
      for (std::size_t j = 0; j < 2 + seed; ++j) src.push_back(4 + static_cast<int>(r.below(6)));

      // Every complete sequence: EOS-terminated up to length kMaxOut, or
      // kMaxOut tokens without EOS.
      std::vector<int> best_seq;
      double best = -INFINITY;
      std::function<void(std::vector<int>&)> walk = [&](std::vector<int>& prefix) {
        for (int w : alphabet) {
          prefix.push_back(w);
          if (w == kEos || prefix.size() == kMaxOut) {
            const double lp = sequence_log_prob(params, src, prefix);
            if (lp > best) {
              best = lp;
              best_seq = prefix;
            }
          } else {
            walk(prefix);
          }
          prefix.pop_back();
        }
      };
      std::vector<int> prefix;
      walk(prefix);

      DecodeOptions d;
      d.beam_size = 1000;
      d.max_out_len = kMaxOut;
      const Hypothesis h = beam_search(params, src, d).front();
      ++trials;
      const double err = std::abs(h.log_prob - best);
      worst = std::max(worst, err);
      if (h.tokens == best_seq && err <= kBeamScoreTol) ++agree;
    }
  }
  const double sec = seconds_since(t0);
  return {agree == trials && sec < kBeamBudgetSec,
          std::to_string(agree) + "/" + std::to_string(trials) + " models, max |score diff| " +
              fmt("%.1e", worst) + ", " + fmt("%.1f s", sec)};
}

// --- 4 --------------------------------------------------------------------------
// Brute-force oracles, written against the metric definitions only.

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<Ngram, int> m;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++m[Ngram(s.begin() + i, s.begin() + i + n)];
  return m;
}

double oracle_bleu(const std::vector<Sentence>& hyps, const std::vector<std::vector<Sentence>>& refs,
                   std::size_t max_n) {
  double c = 0.0, r = 0.0;
  std::vector<double> match(max_n, 0.0), total(max_n, 0.0);
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    c += hyps[s].size();
    double best_len = 0.0, best_diff = INFINITY;
    for (const auto& ref : refs[s]) {
      const double diff = std::abs(double(ref.size()) - double(hyps[s].size()));
      if (diff < best_diff || (diff == best_diff && double(ref.size()) < best_len)) {
        best_diff = diff;
        best_len = ref.size();
      }
    }
    r += best_len;
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto h = ngram_counts(hyps[s], n);
      for (const auto& [g, cnt] : h) {
        int mx = 0;
        for (const auto& ref : refs[s]) {
          const auto rc = ngram_counts(ref, n);
          const auto it = rc.find(g);
          if (it != rc.end()) mx = std::max(mx, it->second);
        }
        match[n - 1] += std::min(cnt, mx);
        total[n - 1] += cnt;
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (match[n] == 0.0) return 0.0;
    log_sum += std::log(match[n] / total[n]);
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / double(max_n));
}

std::vector<std::pair<int, int>> oracle_links(const Tensor& att) {
  // Rows but the last (target EOS); a row whose argmax is the source EOS
  // column adds no link.
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i + 1 < att.rows(); ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < att.cols(); ++j) {
      if (att.at(i, j) > att.at(i, arg)) arg = j;
    }
    if (arg + 1 < att.cols()) out.emplace_back(int(arg), int(i));
  }
  return out;
}

Tensor random_attention(std::size_t ty, std::size_t tx, Rng& r, bool peaked) {
  Tensor t({ty, tx});
  for (std::size_t i = 0; i < ty; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < tx; ++j) {
      double v = r.uniform();
      if (peaked && r.below(3) == 0) v += 5.0;
      t.at(i, j) = v;
      sum += v;
    }
    for (std::size_t j = 0; j < tx; ++j) t.at(i, j) /= sum;
  }
  return t;
}

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  Rng r(2024);
  std::vector<std::string> fails;
  auto word = [&](std::size_t v) { return "w" + std::to_string(r.below(v)); };

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_sent = 1 + r.below(10);
    std::vector<Sentence> hyps;
    std::vector<std::vector<Sentence>> refs;
    for (std::size_t s = 0; s < n_sent; ++s) {
      Sentence ref;
      const std::size_t len = 3 + r.below(8);
      for (std::size_t i = 0; i < len; ++i) ref.push_back(word(6));
      Sentence hyp = ref;
      // Perturb: substitutions, a drop or an insertion.
      for (auto& w : hyp) {
        if (r.below(4) == 0) w = word(6);
      }
      if (r.below(3) == 0 && hyp.size() > 1) hyp.pop_back();
      if (r.below(3) == 0) hyp.push_back(word(6));
      std::vector<Sentence> rs{ref};
      if (r.below(2) == 0) {
        Sentence alt = ref;
        std::reverse(alt.begin(), alt.end());
        if (r.below(2)) alt.push_back(word(6));
        rs.push_back(alt);
      }
      hyps.push_back(hyp);
      refs.push_back(rs);
    }
    if (std::abs(corpus_bleu(hyps, refs) - oracle_bleu(hyps, refs, 4)) > kMetricTol) {
      fails.push_back("bleu");
    }
    if (std::abs(one_gram_bleu(hyps, refs) - oracle_bleu(hyps, refs, 1)) > kMetricTol) {
      fails.push_back("bleu1");
    }

    // Alignment fixtures over ≤10 sentences.
    std::vector<AttentionMatrix> dumps;
    std::vector<GoldAlignment> golds;
    std::vector<TaggedSentence> spos, tpos;
    std::size_t eos_hits = 0;
    double o_as = 0, o_ap = 0, o_a = 0, o_s = 0;
    double so_as = 0, so_ap = 0, so_a = 0, so_s = 0;
    double rot_over = 0, rot_words = 0;
    std::map<std::string, std::map<std::string, double>> conf;
    const std::vector<std::string> tagset{"NN", "NNS", "VB", "VBD", "JJ", "DT"};
    for (std::size_t s = 0; s < n_sent; ++s) {
      const std::size_t sx = 2 + r.below(6), sy = 2 + r.below(6);
      AttentionMatrix m;
      m.weights = random_attention(sy + 1, sx + 1, r, trial % 2 == 0);
      for (std::size_t j = 0; j < sx; ++j) m.src_tokens.push_back("s" + std::to_string(r.below(4)));
      m.src_tokens.push_back("</s>");
      for (std::size_t i = 0; i < sy; ++i) m.tgt_tokens.push_back("t" + std::to_string(r.below(3)));
      m.tgt_tokens.push_back("</s>");
      GoldAlignment g;
      std::set<std::pair<int, int>> seen;
      for (std::size_t i = 0; i < sy; ++i) {
        for (std::size_t j = 0; j < sx; ++j) {
          const auto u = r.below(6);
          if (u == 0) g.sure.emplace_back(int(j), int(i));
          else if (u == 1) g.possible.emplace_back(int(j), int(i));
        }
      }
      TaggedSentence st, tt;
      for (std::size_t j = 0; j < sx; ++j) st.tags.push_back(tagset[r.below(tagset.size())]);
      for (std::size_t i = 0; i < sy; ++i) tt.tags.push_back(tagset[r.below(tagset.size())]);
      st.tokens = Sentence(m.src_tokens.begin(), m.src_tokens.end() - 1);
      tt.tokens = Sentence(m.tgt_tokens.begin(), m.tgt_tokens.end() - 1);

      // eos-rate oracle
      std::size_t arg = 0;
      for (std::size_t j = 1; j <= sx; ++j) {
        if (m.weights.at(sy, j) > m.weights.at(sy, arg)) arg = j;
      }
      if (arg == sx) ++eos_hits;

      // AER oracle
      std::set<std::pair<int, int>> S(g.sure.begin(), g.sure.end()), P = S;
      P.insert(g.possible.begin(), g.possible.end());
      const auto A = oracle_links(m.weights);
      for (const auto& l : A) {
        o_as += S.count(l);
        o_ap += P.count(l);
      }
      o_a += A.size();
      o_s += S.size();

      // SAER oracle on the content block.
      for (std::size_t i = 0; i < sy; ++i) {
        for (std::size_t j = 0; j < sx; ++j) {
          const double w = m.weights.at(i, j);
          const std::pair<int, int> l{int(j), int(i)};
          so_as += w * double(S.count(l));
          so_ap += w * double(P.count(l));
          so_a += w;
        }
      }
      so_s += S.size();

      // ROT oracle: multiset of target tokens per source occurrence.
      std::map<int, std::vector<std::string>> e;
      for (const auto& [j, i] : A) e[j].push_back(m.tgt_tokens[std::size_t(i)]);
      for (std::size_t j = 0; j < sx; ++j) {
        const auto& v = e[int(j)];
        rot_over += double(v.size() - std::set<std::string>(v.begin(), v.end()).size());
        rot_words += 1.0;
      }

      // POS confusion oracle with the V*/N* merge.
      auto merge = [](const std::string& t) {
        if (!t.empty() && t[0] == 'V') return std::string("V");
        if (!t.empty() && t[0] == 'N') return std::string("N");
        return t;
      };
      for (const auto& [j, i] : A) {
        conf[merge(tt.tags[std::size_t(i)])][merge(st.tags[std::size_t(j)])] += 1.0;
      }

      dumps.push_back(m);
      golds.push_back(g);
      spos.push_back(st);
      tpos.push_back(tt);
    }

    if (eos_alignment_rate(dumps) != 100.0 * double(eos_hits) / double(n_sent)) {
      // Same expression on both sides, so equality is exact.
      fails.push_back("eos-rate");
    }
    AerCounts hard, soft;
    std::vector<std::vector<Link>> links;
    for (std::size_t s = 0; s < n_sent; ++s) {
      const auto set = make_alignment_set(golds[s]);
      links.push_back(attention_links(dumps[s].weights));
      hard.add(aer_counts(links.back(), set));
      soft.add(saer_counts(crop_eos(dumps[s].weights), set));
    }
    if (hard.a_and_s != o_as || hard.a_and_p != o_ap || hard.a != o_a || hard.s != o_s) {
      fails.push_back("aer counts");
    }
    if (o_a + o_s > 0 && std::abs(hard.value() - (1.0 - (o_as + o_ap) / (o_a + o_s))) > kMetricTol) {
      fails.push_back("aer");
    }
    if (std::abs(soft.value() - (1.0 - (so_as + so_ap) / (so_a + so_s))) > kMetricTol) {
      fails.push_back("saer");
    }
    const RotStats rs = rot(dumps);
    if (rs.over != rot_over || rs.words != rot_words ||
        std::abs(rs.percent() - 100.0 * rot_over / rot_words) > kMetricTol) {
      fails.push_back("rot");
    }
    std::vector<std::size_t> sl, tl;
    for (const auto& d : dumps) {
      sl.push_back(d.cols() - 1);
      tl.push_back(d.rows() - 1);
    }
    const PosConfusion pc = pos_confusion(links, spos, tpos, sl, tl);
    bool pos_ok = pc.counts.size() == conf.size();
    for (const auto& [tt, row] : conf) {
      double row_total = 0.0;
      for (const auto& [st, c] : row) row_total += c;
      for (const auto& [st, c] : row) {
        const auto it = pc.counts.find(tt);
        if (it == pc.counts.end() || it->second.count(st) == 0 || it->second.at(st) != c) {
          pos_ok = false;
          continue;
        }
        if (std::abs(pc.percent.at(tt).at(st) - 100.0 * c / row_total) > kMetricTol) pos_ok = false;
      }
      if (pc.counts.count(tt) && pc.counts.at(tt).size() != row.size()) pos_ok = false;
    }
    if (!pos_ok) fails.push_back("pos-confusion");
  }
  const double sec = seconds_since(t0);
  std::set<std::string> uniq(fails.begin(), fails.end());
  std::string d = uniq.empty() ? "bleu, bleu1, eos-rate, aer, saer, rot, pos-confusion agree on 50 fixtures"
                               : "mismatch:";
  for (const auto& f : uniq) d += " " + f;
  return {uniq.empty() && sec < kMetricBudgetSec, d + ", " + fmt("%.2f s", sec)};
}

// --- 5, 6, 7 ---------------------------------------------------------------------

struct ToyResults {
  ToySetup setup;
  ToyData data;
  struct Run {
    Variant variant;
    std::uint64_t seed;
    ToyRun run;
    double sec;
    AlignmentReport align;
    double lexicon = 0.0;
  };
  std::vector<Run> runs;

  const Run* find(Variant v, std::uint64_t seed) const {
    for (const auto& r : runs) {
      if (r.variant == v && r.seed == seed) return &r;
    }
    return nullptr;
  }
};

ToyResults& toy_results(std::size_t n_seeds) {
  static ToyResults res;
  static bool done = false;
  if (done) return res;
  done = true;
  res.setup.max_epochs = kToyMaxEpochs;
  res.data = prepare_toy(res.setup);
  auto record = [&](Variant v, std::uint64_t seed, const std::optional<ModelParams>& start) {
    const auto t0 = Clock::now();
    ToyResults::Run r{v, seed, train_toy(res.setup, res.data, v, seed, start), 0.0, {}, 0.0};
    r.sec = seconds_since(t0);
    r.align = dev_alignment(r.run.best, res.data);
    if (v == Variant::kDirectBridge) r.lexicon = lexicon_hit_rate(r.run.best, res.data);
    std::printf("  toy %-14s seed %lu: dev BLEU %.4f (best epoch %zu of %zu), eos %.1f%%, AER %.4f, %.0f s\n",
                variant_name(v), static_cast<unsigned long>(seed), r.run.best_bleu, r.run.best_epoch,
                r.run.epochs, r.align.eos_rate, r.align.aer, r.sec);
    std::fflush(stdout);
    res.runs.push_back(std::move(r));
    return &res.runs.back();
  };
  for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
    record(Variant::kBaseline, seed, std::nullopt);
    const ModelParams donor = record(Variant::kSourceBridge, seed, std::nullopt)->run.best;
    const ModelConfig dc = toy_model_config(res.setup, res.data, Variant::kDirectBridge);
    record(Variant::kDirectBridge, seed,
           pretrain_then_bridge(donor, dc, seed, res.setup.init_scale).params);
    if (seed == 1) record(Variant::kTargetBridge, seed, std::nullopt);
  }
  return res;
}

Outcome toy_learnability(std::size_t n_seeds) {
  const ToyResults& res = toy_results(n_seeds);
  bool ok = true;
  std::string d;
  for (Variant v : {Variant::kBaseline, Variant::kSourceBridge, Variant::kTargetBridge,
                    Variant::kDirectBridge}) {
    const auto* r = res.find(v, 1);
    const bool pass = r && r->run.best_bleu >= kToyBleu && r->run.best_epoch <= kToyMaxEpochs &&
                      r->sec < kToyBudgetSec;
    ok = ok && pass;
    if (r) d += std::string(variant_name(v)) + " " + fmt("%.3f", r->run.best_bleu) + " ";
  }
  return {ok, d + "(threshold " + fmt("%.2f", kToyBleu) + ", seed 1)"};
}

Outcome bridging_direction(std::size_t n_seeds) {
  const ToyResults& res = toy_results(n_seeds);
  std::vector<double> be, de, ba, da;
  for (std::uint64_t s = 1; s <= n_seeds; ++s) {
    be.push_back(res.find(Variant::kBaseline, s)->align.eos_rate);
    de.push_back(res.find(Variant::kDirectBridge, s)->align.eos_rate);
    ba.push_back(res.find(Variant::kBaseline, s)->align.aer);
    da.push_back(res.find(Variant::kDirectBridge, s)->align.aer);
  }
  const double mbe = median3(be), mde = median3(de), mba = median3(ba), mda = median3(da);
  return {mde >= mbe && mda <= mba,
          "median eos " + fmt("%.1f%%", mbe) + " -> " + fmt("%.1f%%", mde) + ", median AER " +
              fmt("%.4f", mba) + " -> " + fmt("%.4f", mda)};
}

Outcome embedding_transform(std::size_t n_seeds) {
  const ToyResults& res = toy_results(n_seeds);
  std::vector<double> hits;
  for (std::uint64_t s = 1; s <= n_seeds; ++s) hits.push_back(res.find(Variant::kDirectBridge, s)->lexicon);
  const double m = median3(hits);
  std::string d = "top-1 = lexicon image for";
  for (double h : hits) d += " " + fmt("%.0f%%", 100 * h);
  return {m >= kLexiconShare, d + " (median " + fmt("%.0f%%", 100 * m) + ")"};
}

// --- 8 --------------------------------------------------------------------------

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::set<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.insert(e.path().filename().string());
  if (na != nb) {
    why = "different file sets";
    return false;
  }
  for (const auto& n : na) {
    if (slurp(a / n) != slurp(b / n)) {
      why = n + " differs";
      return false;
    }
  }
  return true;
}

Outcome determinism() {
  const fs::path root = scratch_dir("det");
  std::vector<std::string> problems;
  std::string why;

  ToySpec spec;
  spec.n_pairs = 240;
  spec.vocab_size = 12;
  spec.seed = 11;
  cmd_toygen(spec, (root / "toy1").string());
  cmd_toygen(spec, (root / "toy2").string());
  if (!same_tree(root / "toy1", root / "toy2", why)) problems.push_back("toygen: " + why);

  RunConfig cfg;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"embed_dim", "8"}, {"hidden_dim", "12"}, {"readout_dim", "8"}, {"batch_size", "16"},
           {"max_epochs", "2"}, {"dropout_rate", "0.5"}, {"dev_size", "40"}, {"save_every", "1"},
           {"seed", "5"}, {"variant", "direct-bridge"},
           {"train_src", (root / "toy1" / "corpus.src").string()},
           {"train_tgt", (root / "toy1" / "corpus.tgt").string()}}) {
    cfg.set(k, v);
  }
  cmd_train({cfg, (root / "run1").string()});
  cmd_train({cfg, (root / "run2").string()});
  if (!same_tree(root / "run1", root / "run2", why)) problems.push_back("train: " + why);

  std::vector<std::string> input = read_lines((root / "toy1" / "corpus.src").string());
  input.resize(30);
  write_lines((root / "in.txt").string(), input);
  std::vector<std::string> refs = read_lines((root / "toy1" / "corpus.tgt").string());
  refs.resize(30);
  write_lines((root / "ref.txt").string(), refs);
  for (std::size_t threads : {1, 3}) {
    for (int rep = 0; rep < 2; ++rep) {
      const std::string tag = std::to_string(threads) + "-" + std::to_string(rep);
      TranslateOptions t;
      t.checkpoint = (root / "run1" / "best.ckpt").string();
      t.input = (root / "in.txt").string();
      t.output = (root / ("hyp" + tag)).string();
      t.attention_out = (root / ("att" + tag)).string();
      t.beam_size = 4;
      t.threads = threads;
      cmd_translate(t);
      AlignOptions a;
      a.checkpoint = t.checkpoint;
      a.src = t.input;
      a.ref = (root / "ref.txt").string();
      a.output = (root / ("al" + tag)).string();
      a.threads = threads;
      cmd_align(a);
    }
  }
  for (const char* f : {"hyp", "att", "al"}) {
    const std::string base = slurp(root / (std::string(f) + "1-0"));
    for (const char* tag : {"1-1", "3-0", "3-1"}) {
      if (slurp(root / (std::string(f) + tag)) != base) problems.push_back(std::string(f) + " " + tag);
    }
  }

  // Round trip: forward outputs of the loaded checkpoint equal the saved ones.
  const Checkpoint ck = load_checkpoint((root / "run1" / "last.ckpt").string());
  save_checkpoint((root / "copy.ckpt").string(), ck);
  const Checkpoint back = load_checkpoint((root / "copy.ckpt").string());
  if (!(back == ck)) problems.push_back("checkpoint fields");
  if (slurp(root / "copy.ckpt") != slurp(root / "run1" / "last.ckpt")) problems.push_back("checkpoint bytes");
  const LoadReport lr = load_parallel((root / "in.txt").string(), (root / "ref.txt").string(), 50);
  const auto pairs = encode_pairs(lr.pairs, ck.src_vocab, ck.tgt_vocab);
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch batch = make_batch(pairs, idx);
  auto forward = [&](const ModelParams& params) {
    Tape tape(false);
    BoundParams bp(params, tape, false);
    Rng rng(3);
    return batch_loss(bp, batch, LossOptions{false, 0.0, false, true}, rng).stats;
  };
  const LossStats fa = forward(ck.params), fb = forward(back.params);
  bool same = fa.sentence_loss == fb.sentence_loss && fa.sentence_nll == fb.sentence_nll &&
              fa.sentence_penalty == fb.sentence_penalty && fa.alphas.size() == fb.alphas.size();
  for (std::size_t t = 0; same && t < fa.alphas.size(); ++t) same = fa.alphas[t] == fb.alphas[t];
  std::vector<std::vector<int>> srcs;
  for (const auto& pr : pairs) srcs.push_back(pr.src);
  const auto ga = greedy_decode_batch(ck.params, srcs), gb = greedy_decode_batch(back.params, srcs);
  for (std::size_t i = 0; same && i < ga.size(); ++i) {
    same = ga[i].tokens == gb[i].tokens && ga[i].log_prob == gb[i].log_prob &&
           ga[i].attention == gb[i].attention;
  }
  if (!same) problems.push_back("forward after reload");
  fs::remove_all(root);
  std::string d = problems.empty() ? "toygen, logs, checkpoints, translations, dumps byte-identical; reload forward bitwise equal"
                                   : "differs:";
  for (const auto& p : problems) d += " " + p;
  return {problems.empty(), d};
}

// --- 9 --------------------------------------------------------------------------

Outcome masking_invariance() {
  std::vector<std::string> problems;
  std::size_t compared = 0;
  Rng r(99);
  std::vector<EncodedPair> pairs;
  for (std::size_t i = 0; i < 6; ++i) {
    EncodedPair p;
    const std::size_t sx = 1 + r.below(9), sy = 1 + r.below(9);
    for (std::size_t j = 0; j < sx; ++j) p.src.push_back(4 + static_cast<int>(r.below(16)));
    for (std::size_t j = 0; j < sy; ++j) p.tgt.push_back(4 + static_cast<int>(r.below(16)));
    pairs.push_back(p);
  }
  for (Variant v : {Variant::kBaseline, Variant::kSourceBridge, Variant::kTargetBridge,
                    Variant::kDirectBridge}) {
    ModelConfig c;
    c.embed_dim = 8;
    c.hidden_dim = 12;
    c.readout_dim = 8;
    c.src_vocab_size = 20;
    c.tgt_vocab_size = 20;
    c.variant = v;
    const ModelParams params = init_params(c, 4, 0.5);
    auto run = [&](const std::vector<std::size_t>& idx, std::size_t xs, std::size_t xt) {
      Tape tape(false);
      BoundParams bp(params, tape, false);
      Rng rng(1);
      return batch_loss(bp, make_batch(pairs, idx, xs, xt), LossOptions{false, 0.0, false, true}, rng).stats;
    };
    std::vector<std::size_t> all(pairs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const LossStats together = run(all, 0, 0);
    const LossStats padded = run(all, 3, 2);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const LossStats alone = run({i}, 0, 0);
      const std::size_t tx = pairs[i].src.size() + 1, ty = pairs[i].tgt.size() + 1;
      for (const LossStats* other : {&together, &padded}) {
        ++compared;
        if (alone.sentence_loss[0] != other->sentence_loss[i] ||
            alone.sentence_nll[0] != other->sentence_nll[i] ||
            alone.sentence_penalty[0] != other->sentence_penalty[i]) {
          problems.push_back(std::string(variant_name(v)) + " loss");
        }
        for (std::size_t t = 0; t < ty; ++t) {
          const Tensor& a = alone.alphas[t];
          const Tensor& b = other->alphas[t];
          for (std::size_t j = 0; j < b.cols(); ++j) {
            const double want = j < tx ? a.at(0, j) : 0.0;
            if (b.at(i, j) != want) {
              problems.push_back(std::string(variant_name(v)) + " attention");
              t = ty;
              break;
            }
          }
        }
      }
    }
    // Decoding: the batched greedy path against one sentence at a time.
    std::vector<std::vector<int>> srcs;
    for (const auto& p : pairs) srcs.push_back(p.src);
    const auto batched = greedy_decode_batch(params, srcs, 12);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Hypothesis h = greedy_decode(params, srcs[i], 12);
      ++compared;
      if (h.tokens != batched[i].tokens || h.log_prob != batched[i].log_prob ||
          h.attention != batched[i].attention) {
        problems.push_back(std::string(variant_name(v)) + " decode");
      }
    }
    const auto forced = force_decode_batch(params, pairs);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      ++compared;
      const ForcedResult one = force_decode_batch(params, {pairs[i]}).front();
      if (one.nll != forced[i].nll || !(one.attention == forced[i].attention)) {
        problems.push_back(std::string(variant_name(v)) + " forced");
      }
    }
  }
  std::set<std::string> uniq(problems.begin(), problems.end());
  std::string d = uniq.empty() ? std::to_string(compared) + " padded/unpadded comparisons exact" : "differs:";
  for (const auto& p : uniq) d += " " + p;
  return {uniq.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::size_t seeds = 3;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (a == "--seeds" && i + 1 < argc) {
      seeds = std::max<std::size_t>(1, std::stoul(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--only 1,2,...] [--seeds N]\n", argv[0]);
      return 64;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness (4 variants, tol 1e-4, < 60 s)", gradient_correctness},
      {"parameter accounting at 620/1000/30k", parameter_accounting},
      {"beam search equals exhaustive enumeration", beam_optimality},
      {"metric oracles", metric_oracles},
      {"toy learnability (dev BLEU >= 0.90 within 30 epochs)", [&] { return toy_learnability(seeds); }},
      {"direct bridge eos-rate up and AER down vs baseline (median of seeds)",
       [&] { return bridging_direction(seeds); }},
      {"nearest target word under W is the lexicon image (>= 80%)", [&] { return embedding_transform(seeds); }},
      {"determinism and checkpoint round trip", determinism},
      {"masking invariance", masking_invariance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %d %s: %s -- %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL",
                criteria[i].first.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed;
}
