// Copyright 2026 The l2ir Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "l2ir/error.hpp"

namespace l2ir {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return "usage";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kNumerical:
      return "numerical";
  }
  return "unknown";
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : DataError(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

ContextOverflowError::ContextOverflowError(std::size_t length,
                                           std::size_t max_context)
    : DataError("sequence of length " + std::to_string(length) +
                " exceeds max_context " + std::to_string(max_context)) {}

}  // namespace l2ir
