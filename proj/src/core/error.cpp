// Copyright 2026 The polarface Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "polarface/core/error.hpp"

namespace polarface {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kDecode: return "decode";
    case ErrorKind::kModalityMismatch: return "modality-mismatch";
    case ErrorKind::kGeometry: return "geometry";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kDegenerateTemplate: return "degenerate-template";
    case ErrorKind::kUndefinedMetric: return "undefined-metric";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace polarface
