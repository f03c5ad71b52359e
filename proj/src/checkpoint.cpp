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

#include "checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace bnmt {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'M', 'T'};
constexpr std::uint8_t kDtypeF64 = 1;
const std::string kEg2Prefix = "opt.eg2.";
const std::string kEdx2Prefix = "opt.edx2.";

// Little-endian regardless of host order.
template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double d) {
  put(out, std::bit_cast<std::uint64_t>(d));
}

void put_str(std::string& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  double get_f64(const char* what) {
    return std::bit_cast<double>(get<std::uint64_t>(what));
  }

  std::string get_str(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::kTruncated, std::string("checkpoint truncated while reading ") +
                                      what);
    }
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += v[i];
  }
  return s;
}

std::map<std::string, std::string> parse_block(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kFormat, "checkpoint config line without '=': " + line);
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv,
                           const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) fail(ErrorKind::kFormat, "checkpoint config missing '" + key + "'");
  return it->second;
}

std::uint64_t require_u64(const std::map<std::string, std::string>& kv,
                          const std::string& key) {
  const std::string& s = require(kv, key);
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::kFormat, "checkpoint config '" + key + "' is not an integer: " + s);
  }
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  return params == o.params && src_vocab == o.src_vocab &&
         tgt_vocab == o.tgt_vocab && optimizer == o.optimizer &&
         train.epoch == o.train.epoch && train.step == o.train.step &&
         train.rng == o.train.rng;
}

std::string checkpoint_config_text(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.params.config();
  std::ostringstream os;
  os << "variant=" << variant_name(c.variant) << '\n'
     << "embed_dim=" << c.embed_dim << '\n'
     << "hidden_dim=" << c.hidden_dim << '\n'
     << "attention_dim=" << c.attention_dim << '\n'
     << "readout_dim=" << c.readout_dim << '\n'
     << "src_vocab_size=" << c.src_vocab_size << '\n'
     << "tgt_vocab_size=" << c.tgt_vocab_size << '\n'
     << "max_len=" << c.max_len << '\n'
     << "epoch=" << ckpt.train.epoch << '\n'
     << "step=" << ckpt.train.step << '\n'
     << "rng=" << ckpt.train.rng.state() << '\n'
     << "src_vocab=" << join(ckpt.src_vocab.content_tokens()) << '\n'
     << "tgt_vocab=" << join(ckpt.tgt_vocab.content_tokens()) << '\n';
  return os.str();
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.params.config();
  if (ckpt.src_vocab.size() != c.src_vocab_size ||
      ckpt.tgt_vocab.size() != c.tgt_vocab_size) {
    fail(ErrorKind::kShape, "checkpoint vocabulary sizes disagree with the model config");
  }
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, t] : ckpt.params.entries()) tensors.emplace_back(name, &t);
  if (!ckpt.optimizer.empty()) {
    const auto& e = ckpt.params.entries();
    for (std::size_t k = 0; k < e.size(); ++k) {
      tensors.emplace_back(kEg2Prefix + e[k].first, &ckpt.optimizer.mean_sq_grad[k]);
    }
    for (std::size_t k = 0; k < e.size(); ++k) {
      tensors.emplace_back(kEdx2Prefix + e[k].first, &ckpt.optimizer.mean_sq_update[k]);
    }
  }

  std::string out(kMagic, 4);
  put(out, kCheckpointVersion);
  put_str(out, checkpoint_config_text(ckpt));
  put(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_str(out, name);
    put(out, kDtypeF64);
    put(out, static_cast<std::uint32_t>(t->shape.size()));
    for (std::size_t d : t->shape) put(out, static_cast<std::uint64_t>(d));
  }
  for (const auto& [name, t] : tensors) {
    for (double d : t->data) put_f64(out, d);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorKind::kFormat, "not a checkpoint (bad magic)");
  }
  Reader r(bytes);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kVersion, "unsupported checkpoint version " +
                                  std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  const auto kv = parse_block(r.get_str("config block"));

  ModelConfig c;
  c.variant = parse_variant(require(kv, "variant"));
  c.embed_dim = require_u64(kv, "embed_dim");
  c.hidden_dim = require_u64(kv, "hidden_dim");
  c.attention_dim = require_u64(kv, "attention_dim");
  c.readout_dim = require_u64(kv, "readout_dim");
  c.src_vocab_size = require_u64(kv, "src_vocab_size");
  c.tgt_vocab_size = require_u64(kv, "tgt_vocab_size");
  c.max_len = require_u64(kv, "max_len");
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, std::string("checkpoint config invalid: ") + e.what());
  }

  Checkpoint ck;
  ck.src_vocab = Vocabulary::from_tokens(split_tokens(require(kv, "src_vocab")));
  ck.tgt_vocab = Vocabulary::from_tokens(split_tokens(require(kv, "tgt_vocab")));
  if (ck.src_vocab.size() != c.src_vocab_size ||
      ck.tgt_vocab.size() != c.tgt_vocab_size) {
    fail(ErrorKind::kShape, "checkpoint vocabulary sizes disagree with its config");
  }
  ck.train.epoch = require_u64(kv, "epoch");
  ck.train.step = require_u64(kv, "step");
  ck.train.rng.set_state(require(kv, "rng"));

  struct Item {
    std::string name;
    Shape shape;
  };
  const auto count = r.get<std::uint32_t>("manifest size");
  std::vector<Item> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Item it;
    it.name = r.get_str("manifest name");
    const auto dtype = r.get<std::uint8_t>("manifest dtype");
    if (dtype != kDtypeF64) {
      fail(ErrorKind::kFormat, "tensor '" + it.name + "' has unknown dtype " +
                                   std::to_string(dtype));
    }
    const auto rank = r.get<std::uint32_t>("manifest rank");
    for (std::uint32_t k = 0; k < rank; ++k) {
      it.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("manifest shape")));
    }
    manifest.push_back(std::move(it));
  }

  const auto layout = param_layout(c);
  const bool has_opt = manifest.size() == 3 * layout.size();
  if (manifest.size() != layout.size() && !has_opt) {
    fail(ErrorKind::kShape, "checkpoint holds " + std::to_string(manifest.size()) +
                                " tensors; config expects " +
                                std::to_string(layout.size()) + " (or " +
                                std::to_string(3 * layout.size()) +
                                " with optimizer state)");
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& [lname, lshape] = layout[i % layout.size()];
    const std::size_t block = i / layout.size();
    const std::string want =
        block == 0 ? lname : (block == 1 ? kEg2Prefix : kEdx2Prefix) + lname;
    if (manifest[i].name != want) {
      fail(ErrorKind::kFormat, "checkpoint tensor " + std::to_string(i) + " is '" +
                                   manifest[i].name + "', expected '" + want + "'");
    }
    if (manifest[i].shape != lshape) {
      fail(ErrorKind::kShape, "tensor '" + want + "' has shape " +
                                  shape_string(manifest[i].shape) +
                                  ", config implies " + shape_string(lshape));
    }
  }

  ck.params = ModelParams(c);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    Tensor t(manifest[i].shape);
    r.need(t.size() * sizeof(double), "tensor payload");
    for (double& d : t.data) d = r.get_f64("tensor payload");
    const std::size_t block = i / layout.size();
    if (block == 0) {
      ck.params.add(manifest[i].name, std::move(t));
    } else if (block == 1) {
      ck.optimizer.mean_sq_grad.push_back(std::move(t));
    } else {
      ck.optimizer.mean_sq_update.push_back(std::move(t));
    }
  }
  if (!r.at_end()) {
    fail(ErrorKind::kFormat, std::to_string(r.remaining()) +
                                 " trailing bytes after the last tensor");
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::kIo, "cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(ErrorKind::kIo, "write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace bnmt
