// Copyright 2026 The fedmp Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedmp {

// Bad input to a builder or operation (out-of-range ids, shape mismatch,
// infeasible configuration).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text or binary input. Carries the 1-based line (0 when the input
// is not line oriented) and the byte offset where the problem was detected.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t offset)
      : std::runtime_error(what + " (line " + std::to_string(line) +
                           ", byte " + std::to_string(offset) + ")"),
        line_(line),
        offset_(offset) {}

  std::size_t line() const { return line_; }
  std::size_t offset() const { return offset_; }

 private:
  std::size_t line_;
  std::size_t offset_;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when the lockstep exchange contract is broken: a layer reads a row
// that was never materialized, a barrier is skipped, or a remote policy reads
// outside what it is allowed to see.
class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedmp
