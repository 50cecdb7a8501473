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

#include <string>
#include <unordered_map>

#include "veritas/model/cognitive_model.hpp"
#include "veritas/model/trace_io.hpp"
#include "veritas/sha256.hpp"

namespace veritas {

/// Serves activations and candidates recorded from another model. Forward
/// lookups key trace records by context_key(prompt); candidate lookups key
/// replay lines by the hex SHA-256 of the context text. Anything unrecorded
/// is a ReplayMissError.
class ReplayModel final : public CognitiveModel {
 public:
  ReplayModel(TraceFile trace, std::vector<ReplayEntry> replay)
      : trace_(std::move(trace)), tokenizer_(257) {
    const auto& h = trace_.header;
    dims_ = ModelDims::make(h.n_layers, h.n_heads, h.d_head, 257);
    dims_.validate();
    for (std::size_t i = 0; i < trace_.records.size(); ++i) {
      const auto& r = trace_.records[i];
      if (r.activations.size() != h.record_floats()) {
        throw FormatError("record " + std::to_string(r.example_id) + " does not match header dims", i);
      }
      by_key_.emplace(r.example_id, i);
    }
    for (std::size_t i = 0; i < replay.size(); ++i) {
      for (const auto& c : replay[i].candidates) {
        if (c.activations.size() != h.record_floats()) {
          throw FormatError("replay candidate activations do not match trace header dims", i + 1);
        }
      }
      const std::string key = replay[i].context_sha256;
      if (!by_context_.emplace(key, std::move(replay[i])).second) {
        throw FormatError("context " + key + " recorded twice", i + 1);
      }
    }
  }

  const ModelDims& dims() const override { return dims_; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::string model_id() const override { return "replay:" + trace_.header.model_id; }
  const TraceFile& trace() const { return trace_; }

  HeadActivationTensor activations(TokenSpan tokens) const override {
    const std::string text = tokenizer_.decode(tokens);
    const std::uint64_t key = context_key(text);
    const auto it = by_key_.find(key);
    if (it == by_key_.end()) throw ReplayMissError(sha256_hex(text));
    return from_f32(trace_.header, trace_.records[it->second].activations);
  }

  std::vector<double> next_token_distribution(TokenSpan tokens) const override {
    throw ReplayMissError(sha256_hex(tokenizer_.decode(tokens)), "replay model records no next-token distributions");
  }

  ForwardResult forward(TokenSpan tokens) const override {
    return {next_token_distribution(tokens), activations(tokens)};
  }

  CandidateSet generate_candidates(TokenSpan context, std::size_t m, const GenerationParams&) const override {
    const std::string hash = sha256_hex(tokenizer_.decode(context));
    const auto it = by_context_.find(hash);
    if (it == by_context_.end()) throw ReplayMissError(hash);
    std::vector<StepCandidate> raw;
    for (const auto& rc : it->second.candidates) {
      StepCandidate c;
      c.text = rc.text;
      c.token_ids = rc.token_ids;
      c.token_logprobs = rc.token_logprobs;
      c.activations = from_f32(trace_.header, rc.activations);
      raw.push_back(std::move(c));
    }
    return finalize_candidates(std::move(raw), m);
  }

 private:
  TraceFile trace_;
  ModelDims dims_;
  Tokenizer tokenizer_;
  std::unordered_map<std::uint64_t, std::size_t> by_key_;
  std::unordered_map<std::string, ReplayEntry> by_context_;
};

inline ReplayModel replay_model(const std::string& trace_path, const std::string& replay_path) {
  TraceFile trace = read_trace(trace_path);
  std::vector<ReplayEntry> replay;
  if (!replay_path.empty()) replay = read_replay(replay_path);
  return ReplayModel(std::move(trace), std::move(replay));
}

/// Replay line for one generation context, as the exporter would write it.
inline ReplayEntry record_candidates(std::string_view context_text, const CandidateSet& set) {
  ReplayEntry e;
  e.context_sha256 = sha256_hex(context_text);
  for (const auto& c : set.candidates) {
    e.candidates.push_back({c.text, c.token_logprobs, to_f32(c.activations), c.token_ids});
  }
  return e;
}

}  // namespace veritas
