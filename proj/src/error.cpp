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

#include "error.hpp"

namespace bnmt {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kVariant: return "variant";
    case ErrorKind::kIncompatible: return "incompatible";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kDegenerateMask: return "degenerate-mask";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kConfig:
    case ErrorKind::kVariant:
    case ErrorKind::kIncompatible:
      return 1;
    case ErrorKind::kDimension:
    case ErrorKind::kDegenerateMask:
    case ErrorKind::kNumeric:
      return 3;
    default:
      return 2;
  }
}

}  // namespace bnmt
