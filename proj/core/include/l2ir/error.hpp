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

#ifndef L2IR_ERROR_HPP_
#define L2IR_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace l2ir {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kUsage,      // bad arguments or configuration
  kData,       // malformed or inconsistent input data
  kNumerical,  // NaN, shape mismatch inside the numeric core, grad-check
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

// Malformed input; `line()` is 1-based, 0 when not applicable.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what);

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Duplicate identifiers and similar uniqueness violations.
class ConflictError : public DataError {
 public:
  explicit ConflictError(const std::string& what) : DataError(what) {}
};

// A sequence longer than the model's context window reached the model.
class ContextOverflowError : public DataError {
 public:
  ContextOverflowError(std::size_t length, std::size_t max_context);
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class ShapeError : public NumericalError {
 public:
  explicit ShapeError(const std::string& what) : NumericalError(what) {}
};

}  // namespace l2ir

#endif  // L2IR_ERROR_HPP_
