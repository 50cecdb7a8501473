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
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "veritas/veritas.hpp"

namespace vt {

using namespace veritas;

// Reference forward pass written with explicit loops over plain indices, no
// Eigen arithmetic. Returns the next-token distribution and fills `acts`
// with final-position attention-mixed head vectors.
struct NaiveOutput {
  std::vector<double> distribution;
  std::vector<double> logits;
  std::vector<double> acts;  // [l][h][d]
  std::vector<std::vector<std::vector<std::vector<double>>>> attention;  // [l][h][i][j]
};

inline std::vector<std::vector<double>> naive_layer_norm(const std::vector<std::vector<double>>& x,
                                                         const Eigen::VectorXd& g, const Eigen::VectorXd& b) {
  std::vector<std::vector<double>> out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0;
    for (double v : x[i]) mean += v;
    mean /= static_cast<double>(x[i].size());
    double var = 0;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x[i].size());
    for (std::size_t k = 0; k < x[i].size(); ++k) {
      out[i][k] = (x[i][k] - mean) / std::sqrt(var + 1e-5) * g(static_cast<long>(k)) + b(static_cast<long>(k));
    }
  }
  return out;
}

inline NaiveOutput naive_forward(const TinyTransformer& model, const TokenSeq& tokens) {
  const auto& w = model.weights();
  const auto& dims = model.dims();
  const std::size_t n = tokens.size(), dm = dims.d_model, dh = dims.d_head;
  std::vector<std::vector<double>> x(n, std::vector<double>(dm));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dm; ++k)
      x[i][k] = w.token_embedding(tokens[i], static_cast<long>(k)) +
                w.position_embedding(static_cast<long>(i), static_cast<long>(k));
  NaiveOutput out;
  out.acts.assign(dims.n_layers * dims.n_heads * dh, 0.0);
  out.attention.resize(dims.n_layers);
  for (std::size_t l = 0; l < dims.n_layers; ++l) {
    const auto& L = w.layers[l];
    const auto xn = naive_layer_norm(x, L.ln1_gain, L.ln1_bias);
    std::vector<std::vector<double>> add(n, std::vector<double>(dm, 0.0));
    for (std::size_t h = 0; h < dims.n_heads; ++h) {
      auto proj = [&](const Eigen::MatrixXd& m) {
        std::vector<std::vector<double>> r(n, std::vector<double>(dh, 0.0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t a = 0; a < dh; ++a)
            for (std::size_t k = 0; k < dm; ++k) r[i][a] += m(static_cast<long>(a), static_cast<long>(k)) * xn[i][k];
        return r;
      };
      const auto q = proj(L.query[h]), kk = proj(L.key[h]), v = proj(L.value[h]);
      std::vector<std::vector<double>> att(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(i + 1);
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0;
          for (std::size_t a = 0; a < dh; ++a) dot += q[i][a] * kk[j][a];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j <= i; ++j) z += std::exp(s[j] - mx);
        for (std::size_t j = 0; j <= i; ++j) att[i][j] = std::exp(s[j] - mx) / z;
      }
      std::vector<std::vector<double>> mixed(n, std::vector<double>(dh, 0.0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t a = 0; a < dh; ++a) mixed[i][a] += att[i][j] * v[j][a];
      for (std::size_t a = 0; a < dh; ++a) out.acts[(l * dims.n_heads + h) * dh + a] = mixed[n - 1][a];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dm; ++k)
          for (std::size_t a = 0; a < dh; ++a) add[i][k] += L.output[h](static_cast<long>(k), static_cast<long>(a)) * mixed[i][a];
      out.attention[l].push_back(att);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < dm; ++k) x[i][k] += add[i][k];
    const auto xn2 = naive_layer_norm(x, L.ln2_gain, L.ln2_bias);
    const std::size_t dmlp = static_cast<std::size_t>(L.mlp_in.rows());
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> hid(dmlp);
      for (std::size_t u = 0; u < dmlp; ++u) {
        double s = L.mlp_in_bias(static_cast<long>(u));
        for (std::size_t k = 0; k < dm; ++k) s += L.mlp_in(static_cast<long>(u), static_cast<long>(k)) * xn2[i][k];
        hid[u] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
      }
      for (std::size_t k = 0; k < dm; ++k) {
        double s = L.mlp_out_bias(static_cast<long>(k));
        for (std::size_t u = 0; u < dmlp; ++u) s += L.mlp_out(static_cast<long>(k), static_cast<long>(u)) * hid[u];
        x[i][k] += s;
      }
    }
  }
  const auto last = naive_layer_norm({x[n - 1]}, w.final_gain, w.final_bias)[0];
  out.logits.assign(dims.vocab_size, 0.0);
  double mx = -INFINITY;
  for (std::size_t t = 0; t < dims.vocab_size; ++t) {
    for (std::size_t k = 0; k < dm; ++k) out.logits[t] += w.unembedding(static_cast<long>(t), static_cast<long>(k)) * last[k];
    mx = std::max(mx, out.logits[t]);
  }
  double z = 0;
  for (double lg : out.logits) z += std::exp(lg - mx);
  for (double lg : out.logits) out.distribution.push_back(std::exp(lg - mx) / z);
  return out;
}

// Metric oracles: naive binning with explicit edge comparisons, and O(n^2)
// pair counting.
inline double oracle_ece(const std::vector<double>& conf, const std::vector<int>& labels, std::size_t bins) {
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    double cs = 0, ls = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      const bool in = b == 0 ? (conf[i] >= lo && conf[i] <= hi) : (conf[i] > lo && conf[i] <= hi);
      if (!in) continue;
      ++count;
      cs += conf[i];
      ls += labels[i];
    }
    if (count == 0) continue;
    total += static_cast<double>(count) / static_cast<double>(conf.size()) *
             std::abs(ls / static_cast<double>(count) - cs / static_cast<double>(count));
  }
  return total;
}

inline double oracle_brier(const std::vector<double>& conf, const std::vector<int>& labels) {
  double s = 0;
  for (std::size_t i = 0; i < conf.size(); ++i) s += (conf[i] - labels[i]) * (conf[i] - labels[i]);
  return s / static_cast<double>(conf.size());
}

inline double oracle_auc(const std::vector<double>& conf, const std::vector<int>& labels) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < conf.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      wins += conf[i] > conf[j] ? 1.0 : (conf[i] == conf[j] ? 0.5 : 0.0);
    }
  }
  return wins / static_cast<double>(pairs);
}

/// Random prediction set with a share of values snapped to bin edges and
/// repeated values, so edge and tie handling are exercised.
inline calibration::PredictionSet random_predictions(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  calibration::PredictionSet p;
  for (std::size_t i = 0; i < n; ++i) {
    double c = u(rng);
    const double r = u(rng);
    if (r < 0.15) c = std::round(c * 10.0) / 10.0;
    else if (r < 0.25) c = std::round(c * 4.0) / 4.0;
    p.confidences.push_back(c);
    p.labels.push_back(u(rng) < c ? 1 : 0);
  }
  p.labels[0] = 1;
  p.labels[1] = 0;
  return p;
}

// Lookup-table model for hand-built fixtures. Contexts and texts are decoded
// strings; anything not scripted gets a uniform distribution, a zero
// activation and no candidates.
class ScriptedModel final : public CognitiveModel {
 public:
  std::map<std::string, std::vector<double>> distributions;
  std::map<std::string, std::vector<StepCandidate>> candidates;
  // Value of the single activation coordinate for a candidate text.
  std::map<std::string, double> feature;
  mutable std::size_t generate_calls = 0;

  const ModelDims& dims() const override { return dims_; }
  const Tokenizer& tokenizer() const override { return tok_; }
  std::string model_id() const override { return "scripted"; }

  ForwardResult forward(TokenSpan tokens) const override {
    return {next_token_distribution(tokens), activations(tokens)};
  }
  std::vector<double> next_token_distribution(TokenSpan tokens) const override {
    const auto it = distributions.find(tok_.decode(tokens));
    if (it != distributions.end()) return it->second;
    return std::vector<double>(dims_.vocab_size, 1.0 / static_cast<double>(dims_.vocab_size));
  }
  HeadActivationTensor activations(TokenSpan tokens) const override { return tensor(tok_.decode(tokens)); }

  CandidateSet generate_candidates(TokenSpan context, std::size_t m, const GenerationParams&) const override {
    ++generate_calls;
    const auto it = candidates.find(tok_.decode(context));
    if (it == candidates.end()) return {};
    auto raw = it->second;
    for (auto& c : raw) c.activations = tensor(c.text);
    return finalize_candidates(std::move(raw), m);
  }

  HeadActivationTensor tensor(const std::string& text) const {
    HeadActivationTensor t(dims_);
    const auto it = feature.find(text);
    t.at(0, 0, 0) = it == feature.end() ? 0.0 : it->second;
    return t;
  }

 private:
  ModelDims dims_ = ModelDims::make(1, 1, 1, 257);
  Tokenizer tok_{257};
};

inline StepCandidate make_candidate(const std::string& text, const std::vector<double>& probs) {
  StepCandidate c;
  c.text = text;
  for (double p : probs) c.token_logprobs.push_back(std::log(p));
  return c;
}

// Predictor over the scripted model's single coordinate: beta = sigmoid(v).
inline predictor::ConfidencePredictor identity_predictor() {
  predictor::ConfidencePredictor p;
  p.selection.coords = {{0, 0}};
  p.weights = {1.0};
  p.bias = 0.0;
  return p;
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Files and processes.

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("veritas-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

/// Runs a shell command, capturing stdout and stderr together.
inline RunResult run(const std::string& cmd) {
  RunResult r;
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// One CLI invocation of the end-to-end pipeline.
struct PipelineStep {
  std::string command;
  std::string config;  // JSON; relative paths resolve against the config file
  std::string out;
  std::string flags;
};

/// Every subcommand in dependency order, on a small planted model.
inline std::vector<PipelineStep> pipeline_steps() {
  const std::string model =
      R"({"kind":"planted","n_layers":3,"n_heads":3,"d_head":4,"planted":[[1,1],[2,0]],"seed":5})";
  const std::string data = R"("dataset":"../data/dataset.jsonl")";
  return {
      {"synth-data", R"({"kind":"steps","n":120})", "data", "--seed 7"},
      {"synth-data", R"({"kind":"tasks","n":12,"n_exemplars":2})", "tasks", "--seed 8"},
      {"dataset-validate", "{" + data + "}", "validate", ""},
      {"probe", R"({"model":)" + model + "," + data + R"(,"export_trace":true})", "probe", "--plot --threads 2"},
      {"select-heads", R"({"probes":"../probe/probes.json","k":2})", "select", ""},
      {"heatmap", R"({"probes":"../probe/probes.json"})", "heatmap", "--plot"},
      {"answer-diff",
       R"({"model":)" + model +
           R"(,"probes":"../probe/probes.json","question":"Calculate 3 + 4.","answer_a":"7","answer_b":"8"})",
       "diff", ""},
      {"train-predictor",
       R"({"model":)" + model + "," + data + R"(,"probes":"../probe/probes.json","selection":"../select/selection.json"})",
       "predictor", ""},
      {"eval-calibration", R"({"model":)" + model + "," + data + R"(,"predictor":"../predictor/predictor.json"})",
       "calibration", "--plot"},
      {"decode",
       R"({"model":)" + model +
           R"(,"tasks":"../tasks/tasks.jsonl","exemplars":"../tasks/exemplars.json","predictor":"../predictor/predictor.json",)"
           R"("strategies":["guided","greedy_fewshot","self_consistency","random_select","self_eval"],)"
           R"("params":{"self_correction":true}})",
       "decode", "--threads 2"},
  };
}

/// Runs the pipeline under `root`; returns the first failing step's output,
/// or an empty string.
inline std::string run_pipeline(const std::string& cli, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "cfg");
  std::size_t i = 0;
  for (const auto& s : pipeline_steps()) {
    const auto cfg = root / "cfg" / (std::to_string(i++) + ".json");
    spit(cfg, s.config);
    const auto r = run(cli + " " + s.command + " --config " + cfg.string() + " --out-dir " +
                       (root / s.out).string() + " " + s.flags);
    if (r.exit_code != 0) return s.command + " exited " + std::to_string(r.exit_code) + ": " + r.output;
  }
  return "";
}

/// Every regular file under `dir`, keyed by relative path, with contents.
inline std::vector<std::pair<std::string, std::string>> snapshot(const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.emplace_back(std::filesystem::relative(e.path(), dir).string(), slurp(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace vt
