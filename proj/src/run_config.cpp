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

#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace bnmt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
  static const std::vector<ConfigKey> k = {
      {"variant", "baseline", "baseline | source-bridge | target-bridge | direct-bridge"},
      {"embed_dim", "620", "word embedding size"},
      {"hidden_dim", "1000", "GRU state size"},
      {"attention_dim", "0", "attention MLP size (0: hidden_dim)"},
      {"readout_dim", "400", "readout layer size"},
      {"src_vocab_size", "30000", "source vocabulary cap, reserved tokens included"},
      {"tgt_vocab_size", "30000", "target vocabulary cap, reserved tokens included"},
      {"max_len", "50", "drop training pairs longer than this"},
      {"batch_size", "80", "sentences per update"},
      {"adadelta_rho", "0.95", "Adadelta decay"},
      {"adadelta_eps", "1e-6", "Adadelta epsilon"},
      {"dropout_rate", "0.5", "dropout on the readout layer"},
      {"max_epochs", "10", "training epochs"},
      {"grad_clip_norm", "1.0", "global gradient norm limit (inf: off)"},
      {"seed", "1", "seed for initialisation, shuffling and dropout"},
      {"init_scale", "0.05", "weights start uniform in [-init_scale, init_scale]"},
      {"bucketing", "true", "group batches by source length"},
      {"bridge_weighted", "false", "direct bridge: penalise sum_j alpha_j x_j instead of x_t*"},
      {"train_src", "", "training source file"},
      {"train_tgt", "", "training target file"},
      {"dev_src", "", "development source file"},
      {"dev_tgt", "", "development target file"},
      {"dev_size", "0", "hold out the last N training pairs when no dev files are given"},
      {"save_every", "0", "also keep epoch-N.ckpt every N epochs (0: off)"},
      {"log_timing", "false", "record wall_ms in the training log"},
      {"init_from", "", "start from this checkpoint; another variant goes through pretrain_then_bridge"},
  };
  return k;
}

bool RunConfig::known(const std::string& key) {
  const auto& k = keys();
  return std::any_of(k.begin(), k.end(), [&](const ConfigKey& c) { return c.name == key; });
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kConfig, origin + ":" + std::to_string(no) + ": expected key=value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(e.kind(), origin + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::kIo, "cannot open config " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known(key)) fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  const std::string old = values_[key];
  values_[key] = value;
  try {
    if (key == "variant") {
      parse_variant(value);
    } else if (key == "bucketing" || key == "bridge_weighted" || key == "log_timing") {
      flag(key);
    } else if (key == "adadelta_rho" || key == "adadelta_eps" ||
               key == "dropout_rate" || key == "grad_clip_norm" ||
               key == "init_scale") {
      real(key);
    } else if (key.find("_src") == std::string::npos &&
               key.find("_tgt") == std::string::npos && key != "init_from") {
      u64(key);
    }
  } catch (...) {
    values_[key] = old;
    throw;
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::kConfig, "config '" + key + "' is not a number: '" + s + "'");
  }
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::kConfig, "config '" + key + "' is not a non-negative integer: '" + s + "'");
  }
}

std::size_t RunConfig::count(const std::string& key) const {
  return static_cast<std::size_t>(u64(key));
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail(ErrorKind::kConfig, "config '" + key + "' is not a boolean: '" + s + "'");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.variant = parse_variant(get("variant"));
  c.embed_dim = count("embed_dim");
  c.hidden_dim = count("hidden_dim");
  c.attention_dim = count("attention_dim");
  c.readout_dim = count("readout_dim");
  c.src_vocab_size = count("src_vocab_size");
  c.tgt_vocab_size = count("tgt_vocab_size");
  c.max_len = count("max_len");
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = count("batch_size");
  t.adadelta_rho = real("adadelta_rho");
  t.adadelta_eps = real("adadelta_eps");
  t.dropout_rate = real("dropout_rate");
  t.max_epochs = count("max_epochs");
  t.grad_clip_norm = real("grad_clip_norm");
  t.seed = u64("seed");
  t.bucketing = flag("bucketing");
  t.bridge_weighted = flag("bridge_weighted");
  return t;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + "=" + values_.at(k.name) + "\n";
  return out;
}

}  // namespace bnmt
