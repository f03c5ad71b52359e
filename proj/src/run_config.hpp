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

#ifndef BNMT_RUN_CONFIG_HPP_
#define BNMT_RUN_CONFIG_HPP_

#include <map>
#include <string>
#include <vector>

#include "model.hpp"
#include "train.hpp"

namespace bnmt {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

// Flat key=value settings for a run: model shape, training, data paths.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();
  static bool known(const std::string& key);

  // "key = value" lines; '#' starts a comment. Unknown keys are rejected.
  static RunConfig parse(const std::string& text, const std::string& origin = "config");
  static RunConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::string str(const std::string& key) const { return get(key); }
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;

  // Vocabulary caps stand in for the vocabulary sizes; the trainer
  // replaces them with the built sizes.
  ModelConfig model_config() const;
  TrainConfig train_config() const;

  // Every key in declaration order.
  std::string to_text() const;

  bool operator==(const RunConfig& o) const { return values_ == o.values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace bnmt

#endif  // BNMT_RUN_CONFIG_HPP_
