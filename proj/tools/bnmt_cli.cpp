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

// bnmt command-line tool. Everything goes through the C API.

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bnmt/bnmt.h"
#include "json.hpp"

namespace {

struct Owned {
  char* p = nullptr;
  ~Owned() { bnmt_free(p); }
  std::string str() const { return p ? p : ""; }
};

int report(bnmt_status st) {
  if (st == BNMT_OK) return 0;
  std::fprintf(stderr, "bnmt: %s error: %s\n", bnmt_status_name(st), bnmt_last_error());
  return bnmt_exit_code(st);
}

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

struct ConfigKey {
  std::string name, def, help;
};

std::vector<ConfigKey> config_keys() {
  Owned text;
  std::vector<ConfigKey> out;
  if (bnmt_config_keys(&text.p) != BNMT_OK) return out;
  std::istringstream is(text.str());
  std::string line;
  while (std::getline(is, line)) {
    const auto a = line.find('\t');
    const auto b = line.find('\t', a + 1);
    out.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)});
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bnmt: attention NMT with embedding bridging"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bnmt_version());

  // toygen
  bnmt_toy_spec toy;
  bnmt_toy_spec_default(&toy);
  std::string toy_mode = toy.swap_mode;
  std::string toy_out;
  auto* toygen = app.add_subcommand("toygen", "Write a synthetic parallel corpus with gold alignments");
  toygen->add_option("--out", toy_out, "Output directory")->required();
  toygen->add_option("--vocab", toy.vocab_size, "Word types per side")->capture_default_str();
  toygen->add_option("--pairs", toy.n_pairs, "Sentence pairs")->capture_default_str();
  toygen->add_option("--min-len", toy.min_len, "Shortest sentence")->capture_default_str();
  toygen->add_option("--max-len", toy.max_len, "Longest sentence")->capture_default_str();
  toygen->add_option("--swap-prob", toy.swap_prob, "Share of reordered pairs")->capture_default_str();
  toygen->add_option("--swap-mode", toy_mode, "lexical | random")->capture_default_str();
  toygen->add_option("--seed", toy.seed, "Generator seed")->capture_default_str();

  // train
  std::string config_path, train_out;
  std::vector<std::string> sets;
  std::map<std::string, std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a model; best.ckpt is chosen by dev BLEU");
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--set", sets, "key=value override, repeatable");
  const std::vector<ConfigKey> keys = config_keys();
  for (const auto& k : keys) {
    train->add_option_function<std::string>(
             flag_name(k.name), [&overrides, name = k.name](const std::string& v) { overrides[name] = v; },
             k.help)
        ->default_str(k.def);
  }

  // translate
  bnmt_translate_options tr;
  bnmt_translate_options_default(&tr);
  std::string tr_ckpt, tr_in, tr_out = "/dev/stdout", tr_att;
  bool tr_norm = false;
  auto* translate = app.add_subcommand("translate", "Beam-search translation, one line per input line");
  translate->add_option("--checkpoint", tr_ckpt, "Checkpoint file")->required();
  translate->add_option("--input", tr_in, "Tokenised source sentences")->required();
  translate->add_option("--output", tr_out, "Translations")->capture_default_str();
  translate->add_option("--beam", tr.beam_size, "Beam size")->capture_default_str();
  translate->add_option("--max-out-len", tr.max_out_len, "Output length cap (0: 2 x source + 5)")->capture_default_str();
  translate->add_flag("--length-norm", tr_norm, "Rank finished hypotheses by per-token log-probability");
  translate->add_option("--dump-attention", tr_att, "Write attention JSON lines here");
  translate->add_option("--threads", tr.threads, "Worker threads")->capture_default_str();

  // align
  bnmt_align_options al{nullptr, nullptr, nullptr, nullptr, nullptr, 1};
  std::string al_ckpt, al_src, al_ref, al_out = "/dev/stdout", al_links;
  auto* align = app.add_subcommand("align", "Forced decoding of references: attention, NLL and hard links");
  align->add_option("--checkpoint", al_ckpt, "Checkpoint file")->required();
  align->add_option("--src", al_src, "Source sentences")->required();
  align->add_option("--ref", al_ref, "Reference translations")->required();
  align->add_option("--output", al_out, "Attention JSON lines")->capture_default_str();
  align->add_option("--pharaoh", al_links, "Also write hard links in i-j form");
  align->add_option("--threads", al.threads, "Worker threads")->capture_default_str();

  // analyze
  std::string metric;
  std::vector<std::pair<std::string, std::string>> args;
  auto* analyze = app.add_subcommand("analyze", "Compute a metric; JSON on stdout, table on stderr");
  analyze->add_option("metric", metric,
                      "bleu | bleu1 | eos-rate | aer | saer | rot | pos-confusion | length-bleu | nearest")
      ->required();
  auto arg = [&](const std::string& key, const std::string& help) {
    analyze->add_option_function<std::vector<std::string>>(
        "--" + key,
        [&args, key](const std::vector<std::string>& vs) {
          for (const auto& v : vs) args.emplace_back(key, v);
        },
        help);
  };
  arg("hyp", "Hypothesis file");
  arg("ref", "Reference file, repeatable for multiple references");
  arg("src", "Source file (length-bleu buckets, nearest word frequencies)");
  arg("attention", "Attention dump from align or translate");
  arg("alignment", "Predicted links in Pharaoh form (instead of --attention)");
  arg("gold", "Gold links, '-' sure and '?' possible");
  arg("src-pos", "Source POS file, surface_TAG tokens");
  arg("tgt-pos", "Target POS file");
  arg("tag-merge", "Tag merge rules (default V*=V,N*=N)");
  arg("tags", "rot: comma-separated source tags to count");
  arg("checkpoint", "nearest: direct-bridge checkpoint");
  arg("words", "nearest: comma-separated source words");
  arg("top-frequent", "nearest: use the N most frequent words of --src (default 10)");
  arg("k", "nearest: neighbours per word (default 5)");
  arg("edges", "length-bleu: bucket edges (default 10,20,30,40,50)");
  arg("smooth", "bleu: add-one smoothing for orders >= 2 (true/false)");
  arg("case-sensitive", "bleu: compare case (true/false)");
  arg("display-top", "pos-confusion: source tags shown per row in the table");

  // gradcheck
  bnmt_gradcheck_options gc;
  bnmt_gradcheck_options_default(&gc);
  std::string gc_variants, gc_fault;
  bool gc_no_ops = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op and every variant's loss");
  gradcheck->add_option("--embed", gc.embed_dim, "Embedding size")->capture_default_str();
  gradcheck->add_option("--hidden", gc.hidden_dim, "Hidden size")->capture_default_str();
  gradcheck->add_option("--vocab", gc.vocab_size, "Vocabulary size per side")->capture_default_str();
  gradcheck->add_option("--length", gc.length, "Positions per sentence, EOS included")->capture_default_str();
  gradcheck->add_option("--batch", gc.batch, "Sentences")->capture_default_str();
  gradcheck->add_option("--dropout", gc.dropout_rate, "Readout dropout (fixed mask)")->capture_default_str();
  gradcheck->add_option("--step", gc.step, "Central difference step")->capture_default_str();
  gradcheck->add_option("--tol", gc.tolerance, "Max relative error")->capture_default_str();
  gradcheck->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  gradcheck->add_option("--variants", gc_variants, "Comma-separated subset of variants");
  gradcheck->add_flag("--no-ops", gc_no_ops, "Skip the primitive op checks");
  gradcheck->add_option("--inject-fault", gc_fault, "Flip the sign of one op's adjoint")->group("");

  // params
  std::string pc_variant = "baseline";
  std::size_t pc_embed = 620, pc_hidden = 1000, pc_src = 30000, pc_tgt = 30000;
  auto* params = app.add_subcommand("params", "Parameter count of a variant");
  params->add_option("--variant", pc_variant, "Model variant")->capture_default_str();
  params->add_option("--embed", pc_embed, "Embedding size")->capture_default_str();
  params->add_option("--hidden", pc_hidden, "Hidden size")->capture_default_str();
  params->add_option("--src-vocab", pc_src, "Source vocabulary")->capture_default_str();
  params->add_option("--tgt-vocab", pc_tgt, "Target vocabulary")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*toygen) {
    toy.swap_mode = toy_mode.c_str();
    return report(bnmt_toygen(&toy, toy_out.c_str()));
  }

  if (*train) {
    bnmt_config* cfg = nullptr;
    bnmt_status st = config_path.empty() ? bnmt_config_new(&cfg)
                                         : bnmt_config_load(config_path.c_str(), &cfg);
    if (st != BNMT_OK) return report(st);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        bnmt_config_free(cfg);
        std::fprintf(stderr, "bnmt: usage error: --set expects key=value, got '%s'\n", s.c_str());
        return 1;
      }
      overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& [k, v] : overrides) {
      if ((st = bnmt_config_set(cfg, k.c_str(), v.c_str())) != BNMT_OK) break;
    }
    Owned summary;
    if (st == BNMT_OK) st = bnmt_train(cfg, train_out.c_str(), &summary.p);
    bnmt_config_free(cfg);
    if (st == BNMT_OK) std::printf("%s\n", summary.str().c_str());
    return report(st);
  }

  if (*translate) {
    tr.checkpoint = tr_ckpt.c_str();
    tr.input = tr_in.c_str();
    tr.output = tr_out.c_str();
    tr.attention_out = tr_att.c_str();
    tr.length_norm = tr_norm ? 1 : 0;
    std::size_t lines = 0, unk = 0;
    const bnmt_status st = bnmt_translate(&tr, &lines, &unk);
    if (st == BNMT_OK) {
      std::fprintf(stderr, "translated %zu lines, %zu unknown source tokens\n", lines, unk);
    }
    return report(st);
  }

  if (*align) {
    al.checkpoint = al_ckpt.c_str();
    al.src = al_src.c_str();
    al.ref = al_ref.c_str();
    al.output = al_out.c_str();
    al.pharaoh_out = al_links.c_str();
    std::size_t lines = 0;
    const bnmt_status st = bnmt_align(&al, &lines);
    if (st == BNMT_OK) std::fprintf(stderr, "aligned %zu pairs\n", lines);
    return report(st);
  }

  if (*analyze) {
    std::vector<const char*> k, v;
    for (const auto& [key, val] : args) {
      k.push_back(key.c_str());
      v.push_back(val.c_str());
    }
    Owned json, table;
    const bnmt_status st =
        bnmt_analyze(metric.c_str(), k.data(), v.data(), k.size(), &json.p, &table.p);
    if (st == BNMT_OK) {
      std::printf("%s\n", json.str().c_str());
      std::fprintf(stderr, "%s", table.str().c_str());
    }
    return report(st);
  }

  if (*gradcheck) {
    gc.primitives = gc_no_ops ? 0 : 1;
    gc.variants = gc_variants.c_str();
    gc.inject_fault = gc_fault.empty() ? nullptr : gc_fault.c_str();
    int passed = 0;
    Owned json;
    const bnmt_status st = bnmt_gradcheck(&gc, &passed, &json.p);
    if (st != BNMT_OK) return report(st);
    std::printf("%s\n", json.str().c_str());
    const auto j = nlohmann::json::parse(json.str());
    for (const auto& e : j["entries"]) {
      std::fprintf(stderr, "%-4s %-15s %-28s max rel err %.3e\n",
                   e["passed"].get<bool>() ? "ok" : "FAIL",
                   e["suite"].get<std::string>().c_str(), e["name"].get<std::string>().c_str(),
                   e["max_rel_error"].get<double>());
    }
    if (!passed) {
      std::fprintf(stderr, "bnmt: gradient check failed\n");
      return 3;
    }
    return 0;
  }

  if (*params) {
    std::uint64_t n = 0;
    const bnmt_status st = bnmt_count_params(pc_variant.c_str(), pc_embed, pc_hidden, pc_src, pc_tgt, &n);
    if (st == BNMT_OK) std::printf("%llu\n", static_cast<unsigned long long>(n));
    return report(st);
  }
  return 0;
}
