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

#pragma once

#include <stdexcept>
#include <string>

namespace polarface {

enum class ErrorKind {
  kShape,
  kConfig,
  kDecode,
  kModalityMismatch,
  kGeometry,
  kDomain,
  kDivergence,
  kDegenerateTemplate,
  kUndefinedMetric,
  kRange,
  kIo,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base for every error the library throws. The kind doubles as the category
/// shown by the command-line front end.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define POLARFACE_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

POLARFACE_DEFINE_ERROR(ShapeError, kShape)
POLARFACE_DEFINE_ERROR(ConfigError, kConfig)
POLARFACE_DEFINE_ERROR(DecodeError, kDecode)
POLARFACE_DEFINE_ERROR(ModalityMismatchError, kModalityMismatch)
POLARFACE_DEFINE_ERROR(GeometryError, kGeometry)
POLARFACE_DEFINE_ERROR(DomainError, kDomain)
POLARFACE_DEFINE_ERROR(DegenerateTemplateError, kDegenerateTemplate)
POLARFACE_DEFINE_ERROR(UndefinedMetricError, kUndefinedMetric)
POLARFACE_DEFINE_ERROR(RangeError, kRange)
POLARFACE_DEFINE_ERROR(IoError, kIo)

#undef POLARFACE_DEFINE_ERROR

/// Raised when a training step produces a non-finite loss or parameter.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string term, const std::string& what)
      : Error(ErrorKind::kDivergence, what), term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace polarface
