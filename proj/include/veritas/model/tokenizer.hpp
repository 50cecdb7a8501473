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

#include <optional>
#include <string>
#include <string_view>

#include "veritas/model/types.hpp"

namespace veritas {

/// Byte-level tokenizer: token b is byte b. Vocabularies with at least 257
/// entries reserve id 256 as end-of-sequence. Smaller vocabularies are used
/// by toy models that operate on raw ids.
class Tokenizer {
 public:
  static constexpr TokenId kEos = 256;

  explicit Tokenizer(std::size_t vocab_size = 257) : vocab_size_(vocab_size) {}

  std::size_t vocab_size() const { return vocab_size_; }
  std::optional<TokenId> eos() const {
    return vocab_size_ > static_cast<std::size_t>(kEos) ? std::optional<TokenId>(kEos) : std::nullopt;
  }

  TokenSeq encode(std::string_view text) const {
    TokenSeq out;
    out.reserve(text.size());
    for (unsigned char c : text) {
      if (static_cast<std::size_t>(c) >= vocab_size_) {
        throw ConfigError("byte " + std::to_string(c) + " has no token in a vocabulary of size " +
                          std::to_string(vocab_size_));
      }
      out.push_back(static_cast<TokenId>(c));
    }
    return out;
  }

  /// Special ids (>= 256) decode to nothing.
  std::string decode(TokenSpan tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (TokenId t : tokens) {
      if (t >= 0 && t < 256) out.push_back(static_cast<char>(t));
    }
    return out;
  }

  std::string piece(TokenId t) const { return (t >= 0 && t < 256) ? std::string(1, static_cast<char>(t)) : std::string(); }

  /// Single-token lookup for verification targets; nullopt when `text` is not
  /// exactly one token of this vocabulary.
  std::optional<TokenId> single_token(std::string_view text) const {
    if (text.size() != 1) return std::nullopt;
    const auto c = static_cast<unsigned char>(text[0]);
    if (static_cast<std::size_t>(c) >= vocab_size_) return std::nullopt;
    return static_cast<TokenId>(c);
  }

 private:
  std::size_t vocab_size_;
};

}  // namespace veritas
