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

#ifndef BNMT_ERROR_HPP_
#define BNMT_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace bnmt {

enum class ErrorKind {
  kUsage,          // bad flag or command line
  kConfig,         // invalid configuration value or unknown key
  kVariant,        // operation not available for this model variant
  kIncompatible,   // checkpoint/config mismatch
  kInput,          // malformed or empty input data
  kAlignment,      // line-count mismatch between parallel files
  kLookup,         // id out of range
  kFormat,         // bad magic or malformed checkpoint
  kVersion,        // unsupported checkpoint version
  kTruncated,      // checkpoint ends early
  kShape,          // checkpoint tensor shape disagrees with config
  kIo,             // file cannot be opened or written
  kDimension,      // tensor shapes do not agree
  kDegenerateMask, // softmax over an all-masked row
  kNumeric,        // non-finite value
};

const char* error_kind_name(ErrorKind kind);

// Process exit code for an error kind: 1 usage/config, 2 data, 3 numeric.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace bnmt

#endif  // BNMT_ERROR_HPP_
