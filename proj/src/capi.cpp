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

#include "bnmt/bnmt.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "checkpoint.hpp"
#include "commands.hpp"
#include "decode.hpp"
#include "json.hpp"
#include "model.hpp"
#include "run_config.hpp"

struct bnmt_config {
  bnmt::RunConfig cfg;
};

struct bnmt_model {
  bnmt::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

bnmt_status to_status(bnmt::ErrorKind k) {
  return static_cast<bnmt_status>(static_cast<int>(k) + 1);
}

template <typename F>
bnmt_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return BNMT_OK;
  } catch (const bnmt::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return BNMT_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

std::string str(const char* s) { return s ? s : ""; }

void need(const void* p, const char* what) {
  if (!p) bnmt::fail(bnmt::ErrorKind::kUsage, std::string(what) + " is NULL");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    bnmt::fail(bnmt::ErrorKind::kUsage, key + " expects a non-negative integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  bnmt::fail(bnmt::ErrorKind::kUsage, key + " expects a boolean, got '" + v + "'");
}

}  // namespace

extern "C" {

const char* bnmt_version(void) { return "0.1.0"; }

const char* bnmt_status_name(bnmt_status status) {
  if (status == BNMT_OK) return "ok";
  if (status == BNMT_ERR_INTERNAL) return "internal";
  if (status < BNMT_OK || status > BNMT_ERR_INTERNAL) return "unknown";
  return bnmt::error_kind_name(static_cast<bnmt::ErrorKind>(status - 1));
}

int bnmt_exit_code(bnmt_status status) {
  if (status == BNMT_OK) return 0;
  if (status == BNMT_ERR_INTERNAL || status < BNMT_OK || status > BNMT_ERR_INTERNAL) {
    return 2;
  }
  return bnmt::exit_code_for(static_cast<bnmt::ErrorKind>(status - 1));
}

const char* bnmt_last_error(void) { return g_last_error.c_str(); }

void bnmt_free(char* s) { std::free(s); }

// --- config ---------------------------------------------------------------

bnmt_status bnmt_config_new(bnmt_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new bnmt_config{};
  });
}

bnmt_status bnmt_config_load(const char* path, bnmt_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new bnmt_config{bnmt::RunConfig::from_file(path)};
  });
}

void bnmt_config_free(bnmt_config* config) { delete config; }

bnmt_status bnmt_config_set(bnmt_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    config->cfg.set(key, str(value));
  });
}

bnmt_status bnmt_config_get(const bnmt_config* config, const char* key, char** out) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    put(out, config->cfg.get(key));
  });
}

bnmt_status bnmt_config_text(const bnmt_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    put(out, config->cfg.to_text());
  });
}

bnmt_status bnmt_config_keys(char** out) {
  return guarded([&] {
    std::string s;
    for (const auto& k : bnmt::RunConfig::keys()) {
      s += k.name + "\t" + k.default_value + "\t" + k.help + "\n";
    }
    put(out, s);
  });
}

// --- models ---------------------------------------------------------------

bnmt_status bnmt_model_load(const char* checkpoint, bnmt_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = new bnmt_model{bnmt::load_checkpoint(checkpoint)};
  });
}

void bnmt_model_free(bnmt_model* model) { delete model; }

bnmt_status bnmt_model_info(const bnmt_model* model, char** out) {
  return guarded([&] {
    need(model, "model");
    const bnmt::ModelConfig& c = model->ckpt.params.config();
    nlohmann::ordered_json j;
    j["variant"] = bnmt::variant_name(c.variant);
    j["embed_dim"] = c.embed_dim;
    j["hidden_dim"] = c.hidden_dim;
    j["attention_dim"] = c.attention_size();
    j["readout_dim"] = c.readout_dim;
    j["src_vocab_size"] = c.src_vocab_size;
    j["tgt_vocab_size"] = c.tgt_vocab_size;
    j["max_len"] = c.max_len;
    j["parameters"] = model->ckpt.params.total_size();
    j["epoch"] = model->ckpt.train.epoch;
    j["step"] = model->ckpt.train.step;
    put(out, j.dump());
  });
}

bnmt_status bnmt_model_translate(const bnmt_model* model, const char* sentence,
                                 size_t beam_size, char** out) {
  return guarded([&] {
    need(model, "model");
    need(sentence, "sentence");
    if (beam_size == 0) bnmt::fail(bnmt::ErrorKind::kUsage, "beam size must be positive");
    const auto& ck = model->ckpt;
    const std::vector<int> src = ck.src_vocab.encode(bnmt::split_tokens(sentence));
    bnmt::DecodeOptions d;
    d.beam_size = beam_size;
    std::vector<int> toks = bnmt::beam_search(ck.params, src, d).front().tokens;
    if (!toks.empty() && toks.back() == bnmt::kEos) toks.pop_back();
    put(out, bnmt::join_tokens(ck.tgt_vocab.decode(toks)));
  });
}

bnmt_status bnmt_count_params(const char* variant, size_t embed_dim, size_t hidden_dim,
                              size_t src_vocab, size_t tgt_vocab, uint64_t* out) {
  return guarded([&] {
    need(variant, "variant");
    need(out, "out");
    bnmt::ModelConfig c;
    c.embed_dim = embed_dim;
    c.hidden_dim = hidden_dim;
    c.src_vocab_size = src_vocab;
    c.tgt_vocab_size = tgt_vocab;
    c.variant = bnmt::parse_variant(variant);
    c.validate();
    *out = bnmt::count_params(c, c.variant);
  });
}

// --- commands ---------------------------------------------------------------

void bnmt_toy_spec_default(bnmt_toy_spec* spec) {
  if (!spec) return;
  const bnmt::ToySpec d;
  spec->vocab_size = d.vocab_size;
  spec->n_pairs = d.n_pairs;
  spec->min_len = d.min_len;
  spec->max_len = d.max_len;
  spec->swap_prob = d.swap_prob;
  spec->seed = d.seed;
  spec->swap_mode = bnmt::swap_mode_name(d.swap_mode);
}

bnmt_status bnmt_toygen(const bnmt_toy_spec* spec, const char* out_dir) {
  return guarded([&] {
    need(spec, "spec");
    need(out_dir, "out_dir");
    bnmt::ToySpec s;
    s.vocab_size = spec->vocab_size;
    s.n_pairs = spec->n_pairs;
    s.min_len = spec->min_len;
    s.max_len = spec->max_len;
    s.swap_prob = spec->swap_prob;
    s.seed = spec->seed;
    if (spec->swap_mode && *spec->swap_mode) s.swap_mode = bnmt::parse_swap_mode(spec->swap_mode);
    bnmt::cmd_toygen(s, out_dir);
  });
}

bnmt_status bnmt_train(const bnmt_config* config, const char* out_dir, char** summary) {
  return guarded([&] {
    need(config, "config");
    need(out_dir, "out_dir");
    const bnmt::TrainSummary s = bnmt::cmd_train({config->cfg, out_dir});
    nlohmann::ordered_json j;
    j["epochs"] = s.epochs;
    j["steps"] = s.steps;
    j["best_epoch"] = s.best_epoch;
    j["best_bleu"] = s.best_bleu;
    j["train_pairs"] = s.train_pairs;
    j["dev_pairs"] = s.dev_pairs;
    j["copied"] = s.copied;
    j["fresh"] = s.fresh;
    put(summary, j.dump());
  });
}

void bnmt_translate_options_default(bnmt_translate_options* o) {
  if (!o) return;
  const bnmt::TranslateOptions d;
  *o = bnmt_translate_options{nullptr, nullptr, nullptr, nullptr, d.beam_size,
                              d.max_out_len, d.length_norm ? 1 : 0, d.threads};
}

bnmt_status bnmt_translate(const bnmt_translate_options* options, size_t* lines,
                           size_t* unk_tokens) {
  return guarded([&] {
    need(options, "options");
    need(options->checkpoint, "checkpoint");
    need(options->input, "input");
    need(options->output, "output");
    bnmt::TranslateOptions o;
    o.checkpoint = options->checkpoint;
    o.input = options->input;
    o.output = options->output;
    o.attention_out = str(options->attention_out);
    o.beam_size = options->beam_size;
    o.max_out_len = options->max_out_len;
    o.length_norm = options->length_norm != 0;
    o.threads = options->threads;
    const bnmt::TranslateSummary s = bnmt::cmd_translate(o);
    if (lines) *lines = s.lines;
    if (unk_tokens) *unk_tokens = s.unk_tokens;
  });
}

bnmt_status bnmt_align(const bnmt_align_options* options, size_t* lines) {
  return guarded([&] {
    need(options, "options");
    need(options->checkpoint, "checkpoint");
    need(options->src, "src");
    need(options->ref, "ref");
    need(options->output, "output");
    bnmt::AlignOptions o;
    o.checkpoint = options->checkpoint;
    o.src = options->src;
    o.ref = options->ref;
    o.output = options->output;
    o.pharaoh_out = str(options->pharaoh_out);
    o.threads = options->threads;
    const std::size_t n = bnmt::cmd_align(o);
    if (lines) *lines = n;
  });
}

bnmt_status bnmt_analyze(const char* metric, const char* const* keys,
                         const char* const* values, size_t n, char** report,
                         char** table) {
  return guarded([&] {
    need(metric, "metric");
    if (n) {
      need(keys, "keys");
      need(values, "values");
    }
    bnmt::AnalyzeOptions o;
    o.metric = metric;
    for (size_t i = 0; i < n; ++i) {
      need(keys[i], "key");
      const std::string k = keys[i];
      const std::string v = str(values[i]);
      if (k == "hyp") o.hyp = v;
      else if (k == "ref") o.refs.push_back(v);
      else if (k == "src") o.src = v;
      else if (k == "attention") o.attention = v;
      else if (k == "alignment") o.alignment = v;
      else if (k == "gold") o.gold = v;
      else if (k == "src-pos") o.src_pos = v;
      else if (k == "tgt-pos") o.tgt_pos = v;
      else if (k == "tag-merge") o.tag_merge = v;
      else if (k == "tags") o.tags = split_list(v);
      else if (k == "checkpoint") o.checkpoint = v;
      else if (k == "words") o.words = split_list(v);
      else if (k == "top-frequent") o.top_frequent = parse_count(k, v);
      else if (k == "k") o.k = parse_count(k, v);
      else if (k == "display-top") o.display_top = parse_count(k, v);
      else if (k == "smooth") o.smooth = parse_bool(k, v);
      else if (k == "case-sensitive") o.case_sensitive = parse_bool(k, v);
      else if (k == "edges") {
        o.edges.clear();
        for (const auto& e : split_list(v)) o.edges.push_back(parse_count(k, e));
      } else {
        bnmt::fail(bnmt::ErrorKind::kUsage, "unknown analyze option '" + k + "'");
      }
    }
    const bnmt::MetricReport r = bnmt::cmd_analyze(o);
    put(report, r.to_json());
    put(table, bnmt::report_table(r, o.display_top));
  });
}

void bnmt_gradcheck_options_default(bnmt_gradcheck_options* o) {
  if (!o) return;
  const bnmt::GradcheckSpec d;
  *o = bnmt_gradcheck_options{d.embed_dim, d.hidden_dim, d.vocab_size, d.length,
                              d.batch,     d.dropout_rate, d.step,    d.tolerance,
                              d.seed,      d.primitives ? 1 : 0, nullptr, nullptr};
}

bnmt_status bnmt_gradcheck(const bnmt_gradcheck_options* options, int* passed,
                           char** report) {
  return guarded([&] {
    need(options, "options");
    bnmt::GradcheckSpec s;
    s.embed_dim = options->embed_dim;
    s.hidden_dim = options->hidden_dim;
    s.vocab_size = options->vocab_size;
    s.length = options->length;
    s.batch = options->batch;
    s.dropout_rate = options->dropout_rate;
    s.step = options->step;
    s.tolerance = options->tolerance;
    s.seed = options->seed;
    s.primitives = options->primitives != 0;
    if (options->variants && *options->variants) {
      s.variants.clear();
      for (const auto& v : split_list(options->variants)) {
        s.variants.push_back(bnmt::parse_variant(v));
      }
    }
    if (options->inject_fault && *options->inject_fault) {
      const auto op = bnmt::op_from_name(options->inject_fault);
      if (!op) {
        bnmt::fail(bnmt::ErrorKind::kUsage,
                   std::string("unknown op '") + options->inject_fault + "'");
      }
      s.inject_fault = op;
    }
    const bnmt::GradcheckSummary r = bnmt::cmd_gradcheck(s);
    if (passed) *passed = r.passed ? 1 : 0;
    put(report, r.to_json());
  });
}

}  // extern "C"
