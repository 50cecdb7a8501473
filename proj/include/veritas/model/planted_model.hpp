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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "veritas/model/cognitive_model.hpp"
#include "veritas/model/world.hpp"

namespace veritas {

/// Half-distance between the two label means at a planted head, in units of
/// the unit-variance noise, at strength 1.
inline constexpr double kPlantedSeparation = 3.0;
/// Probability given to every token a candidate shares with all alternatives.
inline constexpr double kSharedTokenProb = 0.99;

struct PlantedConfig {
  ModelDims dims = ModelDims::make(4, 4, 8, 257);
  std::vector<HeadCoord> planted;
  double strength = 1.0;
  /// Probability that the planted encoding reflects the true label.
  double fidelity = 1.0;
  std::uint64_t seed = 0;
};

/// Synthetic model whose planted heads linearly encode the truth of their
/// input; every other head is label-independent unit Gaussian noise. All
/// randomness is a pure function of (seed, input text), so identical inputs
/// give identical outputs.
class PlantedSignalModel final : public CognitiveModel {
 public:
  explicit PlantedSignalModel(PlantedConfig cfg,
                              std::shared_ptr<const SyntheticWorld> world = std::make_shared<ArithmeticWorld>())
      : cfg_(std::move(cfg)), world_(std::move(world)), tokenizer_(cfg_.dims.vocab_size) {
    cfg_.dims.validate();
    if (cfg_.dims.vocab_size < 257) {
      throw ConfigError("planted model needs a byte vocabulary (vocab_size >= 257)");
    }
    if (cfg_.planted.empty()) throw ConfigError("planted head set is empty");
    if (!(cfg_.strength >= 0.0 && cfg_.strength <= 1.0)) throw ConfigError("strength must lie in [0, 1]");
    if (!(cfg_.fidelity > 0.0 && cfg_.fidelity <= 1.0)) throw ConfigError("fidelity must lie in (0, 1]");
    if (!world_) throw ConfigError("planted model needs a synthetic world");
    std::set<HeadCoord> unique;
    for (const auto& c : cfg_.planted) {
      if (c.layer >= cfg_.dims.n_layers || c.head >= cfg_.dims.n_heads) {
        throw ConfigError("planted head " + to_string(c) + " outside model dims");
      }
      if (!unique.insert(c).second) throw ConfigError("planted head " + to_string(c) + " listed twice");
    }
    std::mt19937_64 rng(mix_seed(cfg_.seed, 0xD1EC7u));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& c : cfg_.planted) {
      Eigen::VectorXd u(static_cast<Eigen::Index>(cfg_.dims.d_head));
      for (auto& v : u) v = normal(rng);
      directions_.push_back({c, u.normalized()});
    }
  }

  const ModelDims& dims() const override { return cfg_.dims; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::string model_id() const override {
    return "planted-L" + std::to_string(cfg_.dims.n_layers) + "H" + std::to_string(cfg_.dims.n_heads) + "D" +
           std::to_string(cfg_.dims.d_head) + "-seed" + std::to_string(cfg_.seed);
  }
  const PlantedConfig& config() const { return cfg_; }
  const SyntheticWorld& world() const { return *world_; }

  bool is_planted(HeadCoord c) const {
    return std::find(cfg_.planted.begin(), cfg_.planted.end(), c) != cfg_.planted.end();
  }

  /// The label actually written into the planted heads (truth after fidelity
  /// flips), nullopt for ungradable text.
  std::optional<bool> encoded_label(std::string_view text) const {
    auto label = world_->truth(text);
    if (label && cfg_.fidelity < 1.0) {
      std::mt19937_64 rng(mix_seed(cfg_.seed, fnv1a(text), 0xF1DE11u));
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= cfg_.fidelity) label = !*label;
    }
    return label;
  }

  HeadActivationTensor activations(TokenSpan tokens) const override {
    validate_tokens(tokens, cfg_.dims.vocab_size);
    const std::string text = tokenizer_.decode(tokens);
    const std::uint64_t h = fnv1a(text);
    HeadActivationTensor out(cfg_.dims);
    for (std::size_t l = 0; l < cfg_.dims.n_layers; ++l) {
      for (std::size_t hd = 0; hd < cfg_.dims.n_heads; ++hd) {
        std::mt19937_64 rng(mix_seed(cfg_.seed, h, l, hd));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (double& v : out.head(l, hd)) v = normal(rng);
      }
    }
    if (const auto label = encoded_label(text); label && cfg_.strength > 0.0) {
      const double shift = (*label ? 1.0 : -1.0) * cfg_.strength * kPlantedSeparation;
      for (const auto& [coord, u] : directions_) {
        auto slot = out.head(coord);
        for (std::size_t d = 0; d < slot.size(); ++d) {
          slot[d] += shift * u(static_cast<Eigen::Index>(d));
        }
      }
    }
    return out;
  }

  std::vector<double> next_token_distribution(TokenSpan tokens) const override {
    validate_tokens(tokens, cfg_.dims.vocab_size);
    std::mt19937_64 rng(mix_seed(cfg_.seed, fnv1a(tokenizer_.decode(tokens)), 0xD157u));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> dist(cfg_.dims.vocab_size);
    double z = 0.0;
    for (double& p : dist) z += (p = std::exp(normal(rng)));
    for (double& p : dist) p /= z;
    return dist;
  }

  ForwardResult forward(TokenSpan tokens) const override {
    return {next_token_distribution(tokens), activations(tokens)};
  }

  /// Candidates come from the world's proposals. Tokens shared by every
  /// proposal are near-certain; the first divergent token carries the
  /// proposal's probability.
  CandidateSet generate_candidates(TokenSpan context, std::size_t m,
                                   const GenerationParams& params) const override {
    const std::string ctx = tokenizer_.decode(context);
    const auto proposals = world_->propose(ctx, cfg_.seed);
    if (proposals.empty()) return {};

    std::size_t prefix = proposals.front().text.size();
    for (const auto& p : proposals) {
      std::size_t k = 0;
      while (k < prefix && k < p.text.size() && p.text[k] == proposals.front().text[k]) ++k;
      prefix = k;
    }

    std::vector<std::size_t> chosen;
    if (params.do_sample) {
      std::mt19937_64 rng(mix_seed(params.seed, fnv1a(ctx), 0x5A3Bu));
      std::vector<double> w;
      for (const auto& p : proposals) w.push_back(std::pow(p.probability, 1.0 / params.temperature));
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      for (std::size_t s = 0; s < m; ++s) chosen.push_back(pick(rng));
    } else {
      for (std::size_t k = 0; k < proposals.size(); ++k) chosen.push_back(k);
    }

    std::vector<StepCandidate> raw;
    for (std::size_t k : chosen) {
      const auto& p = proposals[k];
      StepCandidate c;
      c.text = p.text.substr(0, std::min(p.text.size(), params.max_new_tokens));
      c.token_ids = tokenizer_.encode(c.text);
      const std::size_t decisive = std::min(prefix, c.token_ids.size() - 1);
      c.token_logprobs.assign(c.token_ids.size(), std::log(kSharedTokenProb));
      c.token_logprobs[decisive] = std::log(p.probability);
      TokenSeq full(context.begin(), context.end());
      full.insert(full.end(), c.token_ids.begin(), c.token_ids.end());
      c.activations = activations(full);
      raw.push_back(std::move(c));
    }
    return finalize_candidates(std::move(raw), m);
  }

 private:
  PlantedConfig cfg_;
  std::shared_ptr<const SyntheticWorld> world_;
  Tokenizer tokenizer_;
  std::vector<std::pair<HeadCoord, Eigen::VectorXd>> directions_;
};

inline PlantedSignalModel planted_signal_model(const ModelDims& dims, std::vector<HeadCoord> planted,
                                               double strength, std::uint64_t seed) {
  PlantedConfig cfg;
  cfg.dims = dims;
  cfg.planted = std::move(planted);
  cfg.strength = strength;
  cfg.seed = seed;
  return PlantedSignalModel(std::move(cfg));
}

}  // namespace veritas
