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

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "veritas/model/tokenizer.hpp"
#include "veritas/model/types.hpp"
#include "veritas/util.hpp"

namespace veritas {

/// A language model seen through the two things the toolkit needs from it:
/// next-token distributions and final-position per-head activations.
///
/// Implementations are immutable after construction; every method is const
/// and may be called concurrently.
class CognitiveModel {
 public:
  virtual ~CognitiveModel() = default;

  virtual const ModelDims& dims() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::string model_id() const = 0;

  virtual ForwardResult forward(TokenSpan tokens) const = 0;

  virtual HeadActivationTensor activations(TokenSpan tokens) const {
    return forward(tokens).activations;
  }
  virtual std::vector<double> next_token_distribution(TokenSpan tokens) const {
    return forward(tokens).distribution;
  }

  /// Up to m distinct next-step candidates for `context`, sorted by mean
  /// token log-probability (ties by text).
  virtual CandidateSet generate_candidates(TokenSpan context, std::size_t m,
                                           const GenerationParams& params) const = 0;
};

namespace detail {

inline void check_distribution(const std::vector<double>& dist, std::size_t vocab) {
  if (dist.size() != vocab) {
    throw ConfigError("distribution has " + std::to_string(dist.size()) + " entries, vocabulary has " +
                      std::to_string(vocab));
  }
  double sum = 0.0;
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0) throw NumericError("distribution entry is negative or non-finite");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw NumericError("distribution sums to " + std::to_string(sum));
  }
}

}  // namespace detail

/// Validated forward pass: token range checks on the way in, distribution and
/// activation shape checks on the way out.
inline ForwardResult forward_with_hooks(const CognitiveModel& model, TokenSpan tokens) {
  validate_tokens(tokens, model.dims().vocab_size);
  ForwardResult out = model.forward(tokens);
  detail::check_distribution(out.distribution, model.dims().vocab_size);
  if (!out.activations.matches(model.dims())) {
    throw ConfigError("activation tensor shape does not match model dims");
  }
  return out;
}

inline bool candidate_order(const StepCandidate& a, const StepCandidate& b) {
  const double ma = a.mean_logprob();
  const double mb = b.mean_logprob();
  if (ma != mb) return ma > mb;
  return a.text < b.text;
}

/// Sorts by mean log-probability, drops exact-text duplicates (keeping the
/// better-ranked copy) and truncates to m.
inline CandidateSet finalize_candidates(std::vector<StepCandidate> raw, std::size_t m) {
  std::stable_sort(raw.begin(), raw.end(), candidate_order);
  CandidateSet out;
  std::unordered_set<std::string> seen;
  for (auto& c : raw) {
    if (!seen.insert(c.text).second) {
      ++out.duplicates_removed;
      continue;
    }
    if (out.candidates.size() < m) out.candidates.push_back(std::move(c));
  }
  return out;
}

inline CandidateSet generate_candidates(const CognitiveModel& model, TokenSpan context, std::size_t m,
                                        const GenerationParams& params) {
  if (m < 1) throw ValidationError("m must be >= 1");
  if (params.max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
  if (params.do_sample && !(params.temperature > 0.0)) {
    throw ValidationError("sampling temperature must be > 0");
  }
  validate_tokens(context, model.dims().vocab_size);
  CandidateSet out = model.generate_candidates(context, m, params);
  if (out.candidates.empty()) {
    throw EmptyCandidatesError("model " + model.model_id() + " produced no valid continuation");
  }
  return out;
}

namespace detail {

struct Hypothesis {
  TokenSeq tokens;
  std::vector<double> logprobs;
  std::string text;
  double sum = 0.0;
};

enum class StepEnd { kOpen, kEos, kDelimiter, kBudget };

// Checks whether the hypothesis just finished and trims a trailing delimiter
// so the step keeps its newline but not the next step's prefix.
inline StepEnd close_hypothesis(Hypothesis& h, const Tokenizer& tok, const GenerationParams& params) {
  if (tok.eos() && h.tokens.back() == *tok.eos()) return StepEnd::kEos;
  const std::string& delim = params.step_delimiter;
  if (!delim.empty() && h.text.size() > delim.size()) {
    const std::size_t pos = h.text.find(delim, 1);
    if (pos != std::string::npos) {
      const std::size_t keep_chars = pos + 1;  // through the newline
      std::size_t chars = 0;
      std::size_t keep_tokens = 0;
      while (keep_tokens < h.tokens.size() && chars < keep_chars) {
        chars += tok.piece(h.tokens[keep_tokens]).size();
        ++keep_tokens;
      }
      h.tokens.resize(keep_tokens);
      h.logprobs.resize(keep_tokens);
      h.text = tok.decode(h.tokens);
      h.sum = 0.0;
      for (double lp : h.logprobs) h.sum += lp;
      return StepEnd::kDelimiter;
    }
  }
  if (h.tokens.size() >= params.max_new_tokens) return StepEnd::kBudget;
  return StepEnd::kOpen;
}

inline StepCandidate to_candidate(const CognitiveModel& model, TokenSpan context, Hypothesis h) {
  StepCandidate c;
  c.text = std::move(h.text);
  c.token_ids = std::move(h.tokens);
  c.token_logprobs = std::move(h.logprobs);
  TokenSeq full(context.begin(), context.end());
  std::size_t n = c.token_ids.size();
  const auto eos = model.tokenizer().eos();
  if (n > 1 && eos && c.token_ids.back() == *eos) --n;  // activations at the last real token
  full.insert(full.end(), c.token_ids.begin(), c.token_ids.begin() + static_cast<std::ptrdiff_t>(n));
  c.activations = model.activations(full);
  return c;
}

inline TokenSeq concat(TokenSpan a, const TokenSeq& b) {
  TokenSeq out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace detail

/// Token-level candidate generation for models that expose next-token
/// distributions: beam search of width max(m, beam_width), or m independent
/// temperature samples when params.do_sample is set.
inline CandidateSet token_level_candidates(const CognitiveModel& model, TokenSpan context,
                                           std::size_t m, const GenerationParams& params) {
  using detail::Hypothesis;
  using detail::StepEnd;
  const Tokenizer& tok = model.tokenizer();
  std::vector<StepCandidate> finished;

  if (params.do_sample) {
    const std::uint64_t ctx_hash = fnv1a(tok.decode(context));
    for (std::size_t s = 0; s < m; ++s) {
      std::mt19937_64 rng(mix_seed(params.seed, ctx_hash, s));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      Hypothesis h;
      while (true) {
        const auto dist = model.next_token_distribution(detail::concat(context, h.tokens));
        std::vector<double> tempered(dist.size());
        double z = 0.0;
        for (std::size_t i = 0; i < dist.size(); ++i) {
          tempered[i] = dist[i] > 0.0 ? std::pow(dist[i], 1.0 / params.temperature) : 0.0;
          z += tempered[i];
        }
        double u = unif(rng) * z;
        std::size_t pick = 0;
        for (; pick + 1 < tempered.size(); ++pick) {
          if (u < tempered[pick]) break;
          u -= tempered[pick];
        }
        while (dist[pick] <= 0.0 && pick > 0) --pick;
        h.tokens.push_back(static_cast<TokenId>(pick));
        h.logprobs.push_back(std::log(dist[pick]));
        h.text += tok.piece(static_cast<TokenId>(pick));
        h.sum += h.logprobs.back();
        if (detail::close_hypothesis(h, tok, params) != StepEnd::kOpen) break;
      }
      finished.push_back(detail::to_candidate(model, context, std::move(h)));
    }
    return finalize_candidates(std::move(finished), m);
  }

  const std::size_t width = std::max(m, params.beam_width);
  std::vector<Hypothesis> beam(1);
  std::vector<Hypothesis> done;
  while (!beam.empty()) {
    std::vector<Hypothesis> expanded;
    for (const auto& h : beam) {
      const auto dist = model.next_token_distribution(detail::concat(context, h.tokens));
      for (std::size_t t = 0; t < dist.size(); ++t) {
        if (dist[t] <= 0.0) continue;
        Hypothesis next = h;
        next.tokens.push_back(static_cast<TokenId>(t));
        next.logprobs.push_back(std::log(dist[t]));
        next.text += tok.piece(static_cast<TokenId>(t));
        next.sum += next.logprobs.back();
        expanded.push_back(std::move(next));
      }
    }
    std::sort(expanded.begin(), expanded.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.sum != b.sum) return a.sum > b.sum;
      return a.tokens < b.tokens;
    });
    if (expanded.size() > width) expanded.resize(width);
    beam.clear();
    for (auto& h : expanded) {
      if (detail::close_hypothesis(h, tok, params) == StepEnd::kOpen) {
        beam.push_back(std::move(h));
      } else {
        done.push_back(std::move(h));
      }
    }
  }
  for (auto& h : done) finished.push_back(detail::to_candidate(model, context, std::move(h)));
  return finalize_candidates(std::move(finished), m);
}

}  // namespace veritas
