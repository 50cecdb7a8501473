// Copyright 2026 The Veritas Authors. All Rights Reserved.
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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace veritas {

/// Broad failure category, used by the CLI to pick an exit code.
enum class ErrorKind {
  kConfig,      ///< inconsistent dimensions, bad parameters, bad templates
  kValidation,  ///< precondition or input-record validation failure
  kNumeric,     ///< non-finite values or diverging optimisation
  kFormat,      ///< malformed trace / replay / dataset file
  kReplayMiss,  ///< replay model asked about an unrecorded context
  kIo,
  kRuntime,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kReplayMiss: return "replay_miss";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kRuntime: return "runtime";
  }
  return "runtime";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string& what) : Error(ErrorKind::kRuntime, what) {}
};

/// Non-finite value or diverging loss. Carries the (layer, head) location when
/// raised from a forward pass; -1 otherwise.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, int layer = -1, int head = -1)
      : Error(ErrorKind::kNumeric, what), layer_(layer), head_(head) {}
  int layer() const noexcept { return layer_; }
  int head() const noexcept { return head_; }

 private:
  int layer_;
  int head_;
};

/// Malformed binary or text file. `offset()` is the byte offset (binary files)
/// or 1-based line number (text files) where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::kFormat, what + " (at " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class ReplayMissError : public Error {
 public:
  explicit ReplayMissError(const std::string& context_hash)
      : Error(ErrorKind::kReplayMiss, "no recorded data for context " + context_hash),
        context_hash_(context_hash) {}
  ReplayMissError(const std::string& context_hash, const std::string& what)
      : Error(ErrorKind::kReplayMiss, what + " (context " + context_hash + ")"),
        context_hash_(context_hash) {}
  const std::string& context_hash() const noexcept { return context_hash_; }

 private:
  std::string context_hash_;
};

/// A model produced no usable continuation for a context.
class EmptyCandidatesError : public Error {
 public:
  explicit EmptyCandidatesError(const std::string& what) : Error(ErrorKind::kRuntime, what) {}
};

/// Rethrows `e` as the same error class with `prefix` prepended to its
/// message; location payloads are kept.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& prefix) {
  const std::string msg = prefix + e.what();
  if (const auto* n = dynamic_cast<const NumericError*>(&e)) throw NumericError(msg, n->layer(), n->head());
  if (const auto* f = dynamic_cast<const FormatError*>(&e)) {
    std::string raw = e.what();
    raw.resize(raw.rfind(" (at "));
    throw FormatError(prefix + raw, f->offset());
  }
  if (const auto* r = dynamic_cast<const ReplayMissError*>(&e)) throw ReplayMissError(r->context_hash(), msg);
  if (dynamic_cast<const EmptyCandidatesError*>(&e)) throw EmptyCandidatesError(msg);
  switch (e.kind()) {
    case ErrorKind::kConfig: throw ConfigError(msg);
    case ErrorKind::kValidation: throw ValidationError(msg);
    case ErrorKind::kIo: throw IoError(msg);
    default: throw RuntimeError(msg);
  }
}

}  // namespace veritas
