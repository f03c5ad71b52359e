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

#ifndef BNMT_CHECKPOINT_HPP_
#define BNMT_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "data.hpp"
#include "model.hpp"
#include "train.hpp"

namespace bnmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  OptimizerState optimizer;  // may be empty
  TrainState train;

  bool operator==(const Checkpoint& o) const;
};

// Canonical key=value block stored in the header.
std::string checkpoint_config_text(const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bnmt

#endif  // BNMT_CHECKPOINT_HPP_
