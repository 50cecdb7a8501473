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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "veritas/model/cognitive_model.hpp"

namespace veritas {

/// Parameters of a pre-norm decoder-only transformer. Per head, `value` is
/// the projection into head space and `output` maps the mixed head vector
/// back into the residual stream; the hooked activation sits between them.
struct TinyTransformerWeights {
  struct Layer {
    Eigen::VectorXd ln1_gain, ln1_bias;
    std::vector<Eigen::MatrixXd> query;   // per head, d_head x d_model
    std::vector<Eigen::MatrixXd> key;     // per head, d_head x d_model
    std::vector<Eigen::MatrixXd> value;   // per head, d_head x d_model
    std::vector<Eigen::MatrixXd> output;  // per head, d_model x d_head
    Eigen::VectorXd ln2_gain, ln2_bias;
    Eigen::MatrixXd mlp_in;   // d_mlp x d_model
    Eigen::VectorXd mlp_in_bias;
    Eigen::MatrixXd mlp_out;  // d_model x d_mlp
    Eigen::VectorXd mlp_out_bias;
  };

  Eigen::MatrixXd token_embedding;     // vocab x d_model
  Eigen::MatrixXd position_embedding;  // max_positions x d_model
  std::vector<Layer> layers;
  Eigen::VectorXd final_gain, final_bias;
  Eigen::MatrixXd unembedding;  // vocab x d_model
};

struct TinyTransformerConfig {
  ModelDims dims = ModelDims::make(2, 2, 4, 8);
  std::size_t max_positions = 64;
  std::size_t d_mlp = 0;  // 0 means 4 * d_model
  std::uint64_t seed = 0;
};

inline constexpr double kLayerNormEps = 1e-5;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Random initialisation; scales are chosen so that next-token distributions
/// are visibly non-uniform on small vocabularies.
inline TinyTransformerWeights init_tiny_weights(const TinyTransformerConfig& cfg) {
  cfg.dims.validate();
  const auto& d = cfg.dims;
  const auto dm = static_cast<Eigen::Index>(d.d_model);
  const auto dh = static_cast<Eigen::Index>(d.d_head);
  const auto dmlp = static_cast<Eigen::Index>(cfg.d_mlp == 0 ? 4 * d.d_model : cfg.d_mlp);
  const auto vocab = static_cast<Eigen::Index>(d.vocab_size);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto rand = [&](Eigen::Index r, Eigen::Index c, double scale) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * normal(rng);
    return m;
  };
  const double proj = 1.0 / std::sqrt(static_cast<double>(dm));

  TinyTransformerWeights w;
  w.token_embedding = rand(vocab, dm, 1.0);
  w.position_embedding = rand(static_cast<Eigen::Index>(cfg.max_positions), dm, 0.5);
  for (std::size_t l = 0; l < d.n_layers; ++l) {
    TinyTransformerWeights::Layer layer;
    layer.ln1_gain = Eigen::VectorXd::Ones(dm) + rand(dm, 1, 0.1).col(0);
    layer.ln1_bias = rand(dm, 1, 0.1).col(0);
    for (std::size_t h = 0; h < d.n_heads; ++h) {
      layer.query.push_back(rand(dh, dm, 2.0 * proj));
      layer.key.push_back(rand(dh, dm, 2.0 * proj));
      layer.value.push_back(rand(dh, dm, proj));
      layer.output.push_back(rand(dm, dh, 1.0 / std::sqrt(static_cast<double>(dh))));
    }
    layer.ln2_gain = Eigen::VectorXd::Ones(dm) + rand(dm, 1, 0.1).col(0);
    layer.ln2_bias = rand(dm, 1, 0.1).col(0);
    layer.mlp_in = rand(dmlp, dm, proj);
    layer.mlp_in_bias = rand(dmlp, 1, 0.1).col(0);
    layer.mlp_out = rand(dm, dmlp, 1.0 / std::sqrt(static_cast<double>(dmlp)));
    layer.mlp_out_bias = rand(dm, 1, 0.1).col(0);
    w.layers.push_back(std::move(layer));
  }
  w.final_gain = Eigen::VectorXd::Ones(dm);
  w.final_bias = Eigen::VectorXd::Zero(dm);
  w.unembedding = rand(vocab, dm, 2.0 * proj);
  return w;
}

/// Everything computed by one forward pass, for inspection in tests and tools.
struct ForwardTrace {
  ForwardResult result;
  Eigen::VectorXd logits;
  /// attention[l][h] is the n x n causal attention matrix.
  std::vector<std::vector<Eigen::MatrixXd>> attention;
};

class TinyTransformer final : public CognitiveModel {
 public:
  explicit TinyTransformer(const TinyTransformerConfig& cfg)
      : TinyTransformer(cfg.dims, init_tiny_weights(cfg), cfg.seed) {}

  TinyTransformer(ModelDims dims, TinyTransformerWeights weights, std::uint64_t seed = 0)
      : dims_(dims), weights_(std::move(weights)), tokenizer_(dims.vocab_size), seed_(seed) {
    dims_.validate();
    check_shapes();
  }

  const ModelDims& dims() const override { return dims_; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  std::string model_id() const override {
    return "tiny-transformer-L" + std::to_string(dims_.n_layers) + "H" + std::to_string(dims_.n_heads) +
           "D" + std::to_string(dims_.d_head) + "-seed" + std::to_string(seed_);
  }
  const TinyTransformerWeights& weights() const { return weights_; }
  std::size_t max_positions() const { return static_cast<std::size_t>(weights_.position_embedding.rows()); }

  ForwardResult forward(TokenSpan tokens) const override { return run(tokens, false).result; }

  ForwardTrace forward_traced(TokenSpan tokens) const { return run(tokens, true); }

  CandidateSet generate_candidates(TokenSpan context, std::size_t m,
                                   const GenerationParams& params) const override {
    return token_level_candidates(*this, context, m, params);
  }

 private:
  void check_shapes() const {
    const auto dm = static_cast<Eigen::Index>(dims_.d_model);
    const auto dh = static_cast<Eigen::Index>(dims_.d_head);
    const auto vocab = static_cast<Eigen::Index>(dims_.vocab_size);
    auto expect = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("weight shape mismatch: " + what);
    };
    expect(weights_.token_embedding.rows() == vocab && weights_.token_embedding.cols() == dm,
           "token_embedding");
    expect(weights_.position_embedding.cols() == dm && weights_.position_embedding.rows() >= 1,
           "position_embedding");
    expect(weights_.layers.size() == dims_.n_layers, "layer count");
    for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
      const auto& L = weights_.layers[l];
      const std::string at = " in layer " + std::to_string(l);
      expect(L.ln1_gain.size() == dm && L.ln1_bias.size() == dm, "ln1" + at);
      expect(L.ln2_gain.size() == dm && L.ln2_bias.size() == dm, "ln2" + at);
      expect(L.query.size() == dims_.n_heads && L.key.size() == dims_.n_heads &&
                 L.value.size() == dims_.n_heads && L.output.size() == dims_.n_heads,
             "head count" + at);
      for (std::size_t h = 0; h < dims_.n_heads; ++h) {
        expect(L.query[h].rows() == dh && L.query[h].cols() == dm, "query" + at);
        expect(L.key[h].rows() == dh && L.key[h].cols() == dm, "key" + at);
        expect(L.value[h].rows() == dh && L.value[h].cols() == dm, "value" + at);
        expect(L.output[h].rows() == dm && L.output[h].cols() == dh, "output" + at);
      }
      expect(L.mlp_in.cols() == dm && L.mlp_in_bias.size() == L.mlp_in.rows(), "mlp_in" + at);
      expect(L.mlp_out.rows() == dm && L.mlp_out.cols() == L.mlp_in.rows() && L.mlp_out_bias.size() == dm,
             "mlp_out" + at);
    }
    expect(weights_.final_gain.size() == dm && weights_.final_bias.size() == dm, "final norm");
    expect(weights_.unembedding.rows() == vocab && weights_.unembedding.cols() == dm, "unembedding");
  }

  static Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                                    const Eigen::VectorXd& bias) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double mean = x.row(i).mean();
      const Eigen::RowVectorXd centered = x.row(i).array() - mean;
      const double var = centered.squaredNorm() / static_cast<double>(x.cols());
      out.row(i) = (centered / std::sqrt(var + kLayerNormEps)).cwiseProduct(gain.transpose()) +
                   bias.transpose();
    }
    return out;
  }

  ForwardTrace run(TokenSpan tokens, bool keep_attention) const {
    validate_tokens(tokens, dims_.vocab_size);
    if (tokens.size() > max_positions()) {
      throw ValidationError("sequence of " + std::to_string(tokens.size()) +
                            " tokens exceeds max_positions " + std::to_string(max_positions()));
    }
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const auto dm = static_cast<Eigen::Index>(dims_.d_model);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.d_head));

    ForwardTrace trace;
    trace.result.activations = HeadActivationTensor(dims_);
    if (keep_attention) trace.attention.resize(dims_.n_layers);

    Eigen::MatrixXd x(n, dm);
    for (Eigen::Index i = 0; i < n; ++i) {
      x.row(i) = weights_.token_embedding.row(tokens[static_cast<std::size_t>(i)]) +
                 weights_.position_embedding.row(i);
    }

    for (std::size_t l = 0; l < dims_.n_layers; ++l) {
      const auto& L = weights_.layers[l];
      const Eigen::MatrixXd xn = layer_norm(x, L.ln1_gain, L.ln1_bias);
      Eigen::MatrixXd attn_out = Eigen::MatrixXd::Zero(n, dm);
      for (std::size_t h = 0; h < dims_.n_heads; ++h) {
        const Eigen::MatrixXd q = xn * L.query[h].transpose();
        const Eigen::MatrixXd k = xn * L.key[h].transpose();
        const Eigen::MatrixXd v = xn * L.value[h].transpose();
        Eigen::MatrixXd att = (q * k.transpose()) * scale;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double row_max = att.row(i).head(i + 1).maxCoeff();
          double z = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            att(i, j) = std::exp(att(i, j) - row_max);
            z += att(i, j);
          }
          for (Eigen::Index j = 0; j <= i; ++j) att(i, j) /= z;
          for (Eigen::Index j = i + 1; j < n; ++j) att(i, j) = 0.0;
        }
        const Eigen::MatrixXd mixed = att * v;  // n x d_head
        auto slot = trace.result.activations.head(l, h);
        for (std::size_t d = 0; d < dims_.d_head; ++d) {
          slot[d] = mixed(n - 1, static_cast<Eigen::Index>(d));
          if (!std::isfinite(slot[d])) {
            throw NumericError("non-finite head activation at layer " + std::to_string(l) + ", head " +
                                   std::to_string(h),
                               static_cast<int>(l), static_cast<int>(h));
          }
        }
        attn_out += mixed * L.output[h].transpose();
        if (keep_attention) trace.attention[l].push_back(std::move(att));
      }
      x += attn_out;
      const Eigen::MatrixXd xn2 = layer_norm(x, L.ln2_gain, L.ln2_bias);
      Eigen::MatrixXd hidden = (xn2 * L.mlp_in.transpose()).rowwise() + L.mlp_in_bias.transpose();
      hidden = hidden.unaryExpr([](double v) { return gelu(v); });
      x += (hidden * L.mlp_out.transpose()).rowwise() + L.mlp_out_bias.transpose();
      if (!x.allFinite()) {
        throw NumericError("non-finite residual stream after layer " + std::to_string(l),
                           static_cast<int>(l), -1);
      }
    }

    const Eigen::MatrixXd last = layer_norm(x.row(n - 1), weights_.final_gain, weights_.final_bias);
    trace.logits = weights_.unembedding * last.row(0).transpose();
    const double lmax = trace.logits.maxCoeff();
    std::vector<double> dist(dims_.vocab_size);
    double z = 0.0;
    for (std::size_t t = 0; t < dist.size(); ++t) {
      dist[t] = std::exp(trace.logits(static_cast<Eigen::Index>(t)) - lmax);
      z += dist[t];
    }
    for (double& p : dist) p /= z;
    trace.result.distribution = std::move(dist);
    return trace;
  }

  ModelDims dims_;
  TinyTransformerWeights weights_;
  Tokenizer tokenizer_;
  std::uint64_t seed_;
};

}  // namespace veritas
