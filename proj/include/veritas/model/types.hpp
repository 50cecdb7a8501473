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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "veritas/error.hpp"

namespace veritas {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;
using TokenSpan = std::span<const TokenId>;

/// Shape of a decoder-only model. The residual width is always
/// n_heads * d_head.
struct ModelDims {
  std::size_t n_layers = 1;
  std::size_t n_heads = 1;
  std::size_t d_head = 1;
  std::size_t d_model = 1;
  std::size_t vocab_size = 2;

  static ModelDims make(std::size_t layers, std::size_t heads, std::size_t d_head,
                        std::size_t vocab) {
    return ModelDims{layers, heads, d_head, heads * d_head, vocab};
  }

  std::size_t heads_total() const { return n_layers * n_heads; }
  std::size_t activation_size() const { return n_layers * n_heads * d_head; }

  void validate() const {
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
    if (n_heads < 1) throw ConfigError("n_heads must be >= 1");
    if (d_head < 1) throw ConfigError("d_head must be >= 1");
    if (d_model != n_heads * d_head) {
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must equal n_heads * d_head (" +
                        std::to_string(n_heads * d_head) + ")");
    }
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// A (layer, head) coordinate, zero-based.
struct HeadCoord {
  std::size_t layer = 0;
  std::size_t head = 0;

  friend auto operator<=>(const HeadCoord&, const HeadCoord&) = default;
};

inline std::string to_string(HeadCoord c) {
  return "(" + std::to_string(c.layer) + "," + std::to_string(c.head) + ")";
}

inline void validate_tokens(TokenSpan tokens, std::size_t vocab_size) {
  if (tokens.empty()) throw ValidationError("token sequence is empty");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab_size) {
      throw ValidationError("token " + std::to_string(tokens[i]) + " at position " +
                            std::to_string(i) + " outside vocabulary of size " +
                            std::to_string(vocab_size));
    }
  }
}

/// Final-position per-head attention outputs, indexed [layer][head][dim].
class HeadActivationTensor {
 public:
  HeadActivationTensor() = default;
  HeadActivationTensor(std::size_t layers, std::size_t heads, std::size_t d_head)
      : layers_(layers), heads_(heads), d_head_(d_head), values_(layers * heads * d_head, 0.0) {}
  HeadActivationTensor(std::size_t layers, std::size_t heads, std::size_t d_head,
                       std::vector<double> values)
      : layers_(layers), heads_(heads), d_head_(d_head), values_(std::move(values)) {
    if (values_.size() != layers * heads * d_head) {
      throw ConfigError("activation buffer has " + std::to_string(values_.size()) +
                        " values, expected " + std::to_string(layers * heads * d_head));
    }
  }
  explicit HeadActivationTensor(const ModelDims& dims)
      : HeadActivationTensor(dims.n_layers, dims.n_heads, dims.d_head) {}

  std::size_t n_layers() const { return layers_; }
  std::size_t n_heads() const { return heads_; }
  std::size_t d_head() const { return d_head_; }
  bool empty() const { return values_.empty(); }

  double& at(std::size_t l, std::size_t h, std::size_t d) { return values_[offset(l, h) + d]; }
  double at(std::size_t l, std::size_t h, std::size_t d) const { return values_[offset(l, h) + d]; }

  std::span<double> head(std::size_t l, std::size_t h) {
    return {values_.data() + offset(l, h), d_head_};
  }
  std::span<const double> head(std::size_t l, std::size_t h) const {
    return {values_.data() + offset(l, h), d_head_};
  }
  std::span<double> head(HeadCoord c) { return head(c.layer, c.head); }
  std::span<const double> head(HeadCoord c) const { return head(c.layer, c.head); }

  const std::vector<double>& flat() const { return values_; }

  bool matches(const ModelDims& dims) const {
    return layers_ == dims.n_layers && heads_ == dims.n_heads && d_head_ == dims.d_head;
  }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const HeadActivationTensor&, const HeadActivationTensor&) = default;

 private:
  std::size_t offset(std::size_t l, std::size_t h) const { return (l * heads_ + h) * d_head_; }

  std::size_t layers_ = 0;
  std::size_t heads_ = 0;
  std::size_t d_head_ = 0;
  std::vector<double> values_;
};

/// One proposed next reasoning step.
struct StepCandidate {
  std::string text;
  TokenSeq token_ids;  // may be empty for replayed candidates
  std::vector<double> token_logprobs;
  HeadActivationTensor activations;

  double sum_logprob() const {
    double s = 0.0;
    for (double lp : token_logprobs) s += lp;
    return s;
  }
  double mean_logprob() const {
    return token_logprobs.empty() ? -INFINITY : sum_logprob() / static_cast<double>(token_logprobs.size());
  }
};

struct CandidateSet {
  std::vector<StepCandidate> candidates;
  std::size_t duplicates_removed = 0;
};

/// Knobs for candidate generation.
struct GenerationParams {
  std::size_t max_new_tokens = 1024;
  std::size_t beam_width = 0;  // 0 means "same as m"
  bool do_sample = false;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  /// A step ends at the newline that starts this delimiter.
  std::string step_delimiter = "\nStep ";
};

struct ForwardResult {
  std::vector<double> distribution;
  HeadActivationTensor activations;
};

}  // namespace veritas
