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
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "veritas/dataset.hpp"
#include "veritas/model/cognitive_model.hpp"
#include "veritas/model/trace_io.hpp"
#include "veritas/sha256.hpp"
#include "veritas/util.hpp"

namespace veritas::probing {

/// One activation tensor per example, with its binary label.
struct LabeledActivations {
  std::vector<HeadActivationTensor> tensors;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return tensors.size(); }
  void push_back(HeadActivationTensor t, int label, std::string id) {
    tensors.push_back(std::move(t));
    labels.push_back(label);
    ids.push_back(std::move(id));
  }
};

/// Renders each record with its template (non-CoT or CoT, by record type)
/// and captures final-token activations. Output order follows input order.
inline LabeledActivations collect_activations(const CognitiveModel& model,
                                              const std::vector<data::LabeledRecord>& records,
                                              std::size_t threads = 1) {
  LabeledActivations out;
  out.tensors.resize(records.size());
  out.labels.resize(records.size());
  out.ids.resize(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& r = records[i];
    try {
      data::validate_record(r);
      const auto tokens = model.tokenizer().encode(data::render_prompt(r));
      validate_tokens(tokens, model.dims().vocab_size);
      out.tensors[i] = model.activations(tokens);
      if (!out.tensors[i].matches(model.dims())) throw ConfigError("activation shape does not match model dims");
    } catch (const Error& e) {
      rethrow_with_context(e, "record \"" + data::record_id(r) + "\": ");
    }
    out.labels[i] = data::record_label(r);
    out.ids[i] = data::record_id(r);
  });
  return out;
}

/// In-process trace export: example ids are context_key(prompt).
inline TraceFile to_trace(const CognitiveModel& model, const std::vector<data::LabeledRecord>& records,
                          const LabeledActivations& acts) {
  TraceFile trace;
  trace.header = {model.dims().n_layers, model.dims().n_heads, model.dims().d_head, model.model_id()};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string prompt = data::render_prompt(records[i]);
    TraceRecord r;
    r.example_id = context_key(prompt);
    r.label = static_cast<std::uint8_t>(acts.labels[i]);
    r.prompt_token_count = static_cast<std::uint32_t>(model.tokenizer().encode(prompt).size());
    r.activations = to_f32(acts.tensors[i]);
    trace.records.push_back(std::move(r));
  }
  return trace;
}

/// Labeled records of a trace file; unlabeled records are rejected.
inline LabeledActivations from_trace(const TraceFile& trace) {
  LabeledActivations out;
  for (const auto& r : trace.records) {
    if (r.label == kUnlabeled) {
      throw ValidationError("trace record " + std::to_string(r.example_id) + " is unlabeled");
    }
    out.push_back(from_f32(trace.header, r.activations), r.label, std::to_string(r.example_id));
  }
  return out;
}

/// Per-coordinate standardisation statistics for one head.
struct HeadStats {
  std::vector<double> mean;
  std::vector<double> scale;
};

struct Probe {
  HeadCoord coord;
  std::vector<double> weights;
  double bias = 0.0;
  double val_accuracy = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  HeadStats stats;

  /// P(label = 1) for a raw (unstandardised) head activation.
  double probability(std::span<const double> activation) const {
    double z = bias;
    for (std::size_t d = 0; d < weights.size(); ++d) {
      z += weights[d] * (activation[d] - stats.mean[d]) / stats.scale[d];
    }
    return sigmoid(z);
  }
};

/// Row-major L x H matrix of reals.
struct HeadMatrix {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::vector<double> values;

  HeadMatrix() = default;
  HeadMatrix(std::size_t layers, std::size_t heads) : n_layers(layers), n_heads(heads), values(layers * heads, 0.0) {}

  double& at(std::size_t l, std::size_t h) { return values[l * n_heads + h]; }
  double at(std::size_t l, std::size_t h) const { return values[l * n_heads + h]; }
};

struct ProbeGrid {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_head = 0;
  std::vector<Probe> probes;  // row-major by (layer, head)

  const Probe& probe(std::size_t l, std::size_t h) const { return probes[l * n_heads + h]; }
  const Probe& probe(HeadCoord c) const { return probe(c.layer, c.head); }

  HeadMatrix accuracies() const {
    HeadMatrix m(n_layers, n_heads);
    for (std::size_t i = 0; i < probes.size(); ++i) m.values[i] = probes[i].val_accuracy;
    return m;
  }
};

struct ProbeHyper {
  double l2 = 1e-3;
  double learning_rate = 0.1;
  std::size_t max_iterations = 500;
  /// Converged once the gradient norm falls below this.
  double tolerance = 1e-6;
  std::size_t threads = 1;
};

namespace detail {

inline HeadStats head_stats(const Eigen::MatrixXd& x) {
  HeadStats s;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    const double mean = x.col(d).mean();
    const double var = (x.col(d).array() - mean).square().sum() / n;
    s.mean.push_back(mean);
    s.scale.push_back(var > 1e-24 ? std::sqrt(var) : 1.0);
  }
  return s;
}

inline Eigen::MatrixXd head_slice(const LabeledActivations& acts, HeadCoord c, std::size_t d_head) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(acts.size()), static_cast<Eigen::Index>(d_head));
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const auto v = acts.tensors[i].head(c);
    for (std::size_t d = 0; d < d_head; ++d) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[d];
  }
  return x;
}

inline void standardize(Eigen::MatrixXd& x, const HeadStats& s) {
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    x.col(d) = (x.col(d).array() - s.mean[static_cast<std::size_t>(d)]) / s.scale[static_cast<std::size_t>(d)];
  }
}

}  // namespace detail

/// Full-batch gradient descent on L2-penalised logistic loss over one head's
/// standardised activations.
inline Probe fit_probe(HeadCoord coord, const LabeledActivations& train, const LabeledActivations& val,
                       std::size_t d_head, const ProbeHyper& hyper) {
  Eigen::MatrixXd x = detail::head_slice(train, coord, d_head);
  Probe p;
  p.coord = coord;
  p.stats = detail::head_stats(x);
  detail::standardize(x, p.stats);
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = train.labels[static_cast<std::size_t>(i)];

  const double n = static_cast<double>(x.rows());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  for (p.iterations = 0; p.iterations < hyper.max_iterations; ++p.iterations) {
    const Eigen::VectorXd z = (x * w).array() + b;
    const Eigen::VectorXd prob = z.unaryExpr([](double v) { return sigmoid(v); });
    const Eigen::VectorXd r = prob - y;
    const Eigen::VectorXd gw = x.transpose() * r / n + hyper.l2 * w;
    const double gb = r.sum() / n;
    if (std::sqrt(gw.squaredNorm() + gb * gb) < hyper.tolerance) {
      p.converged = true;
      break;
    }
    w -= hyper.learning_rate * gw;
    b -= hyper.learning_rate * gb;
  }
  if (!w.allFinite() || !std::isfinite(b)) {
    throw NumericError("probe weights diverged", static_cast<int>(coord.layer), static_cast<int>(coord.head));
  }
  p.weights.assign(w.data(), w.data() + w.size());
  p.bias = b;

  std::size_t correct = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const int pred = p.probability(val.tensors[i].head(coord)) >= 0.5 ? 1 : 0;
    correct += pred == val.labels[i] ? 1 : 0;
  }
  p.val_accuracy = static_cast<double>(correct) / static_cast<double>(val.size());
  return p;
}

inline ProbeGrid fit_probe_grid(const LabeledActivations& train, const LabeledActivations& val,
                                const ProbeHyper& hyper = {}) {
  if (train.size() == 0) throw ValidationError("training activations are empty");
  if (val.size() == 0) throw ValidationError("validation activations are empty");
  const bool has_pos = std::find(train.labels.begin(), train.labels.end(), 1) != train.labels.end();
  const bool has_neg = std::find(train.labels.begin(), train.labels.end(), 0) != train.labels.end();
  if (!has_pos || !has_neg) throw ValidationError("training slice holds a single label class");
  const auto& first = train.tensors.front();
  for (const auto* set : {&train, &val}) {
    for (const auto& t : set->tensors) {
      if (t.n_layers() != first.n_layers() || t.n_heads() != first.n_heads() || t.d_head() != first.d_head()) {
        throw ConfigError("activation tensors differ in shape");
      }
    }
  }
  ProbeGrid grid;
  grid.n_layers = first.n_layers();
  grid.n_heads = first.n_heads();
  grid.d_head = first.d_head();
  grid.probes.resize(grid.n_layers * grid.n_heads);
  parallel_for(grid.probes.size(), hyper.threads, [&](std::size_t i) {
    grid.probes[i] = fit_probe({i / grid.n_heads, i % grid.n_heads}, train, val, grid.d_head, hyper);
  });
  return grid;
}

/// Top-k heads by validation accuracy; ties by (layer, head) ascending.
struct HeadSelection {
  std::vector<HeadCoord> coords;

  std::size_t size() const { return coords.size(); }
  friend bool operator==(const HeadSelection&, const HeadSelection&) = default;
};

inline HeadSelection select_top_k(const HeadMatrix& scores, std::size_t k) {
  const std::size_t total = scores.n_layers * scores.n_heads;
  if (k < 1 || k > total) {
    throw ValidationError("k must lie in [1, " + std::to_string(total) + "], got " + std::to_string(k));
  }
  std::vector<HeadCoord> all;
  for (std::size_t l = 0; l < scores.n_layers; ++l)
    for (std::size_t h = 0; h < scores.n_heads; ++h) all.push_back({l, h});
  std::stable_sort(all.begin(), all.end(), [&](HeadCoord a, HeadCoord b) {
    return scores.at(a.layer, a.head) > scores.at(b.layer, b.head);
  });
  all.resize(k);
  return {std::move(all)};
}

inline HeadSelection select_top_k(const ProbeGrid& grid, std::size_t k) {
  return select_top_k(grid.accuracies(), k);
}

inline std::string heatmap_csv(const HeadMatrix& m) {
  std::string out;
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    for (std::size_t h = 0; h < m.n_heads; ++h) {
      if (h > 0) out += ",";
      out += fixed(m.at(l, h));
    }
    out += "\n";
  }
  return out;
}

inline HeadMatrix parse_heatmap_csv(std::string_view text) {
  HeadMatrix m;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("bad heatmap cell \"" + cell + "\"", line_no);
      }
    }
    if (m.n_heads == 0) m.n_heads = row.size();
    if (row.size() != m.n_heads) throw FormatError("ragged heatmap row", line_no);
    m.values.insert(m.values.end(), row.begin(), row.end());
    ++m.n_layers;
  }
  return m;
}

inline void write_heatmap(const std::string& path, const HeadMatrix& m) { write_file(path, heatmap_csv(m)); }

/// Per-head difference between probe probabilities on (question, answer_a)
/// and (question, answer_b).
inline HeadMatrix answer_diff_map(const ProbeGrid& grid, const CognitiveModel& model, const std::string& question,
                                  const std::string& answer_a, const std::string& answer_b,
                                  bool chain_of_thought = false) {
  auto render = [&](const std::string& answer) {
    return chain_of_thought ? data::format_cot(question, {}, answer) : data::format_noncot(question, answer);
  };
  const auto& tok = model.tokenizer();
  const auto ta = model.activations(tok.encode(render(answer_a)));
  const auto tb = model.activations(tok.encode(render(answer_b)));
  if (ta.n_layers() != grid.n_layers || ta.n_heads() != grid.n_heads || ta.d_head() != grid.d_head) {
    throw ConfigError("probe grid and model dims differ");
  }
  HeadMatrix out(grid.n_layers, grid.n_heads);
  for (std::size_t l = 0; l < grid.n_layers; ++l) {
    for (std::size_t h = 0; h < grid.n_heads; ++h) {
      const auto& p = grid.probe(l, h);
      out.at(l, h) = p.probability(ta.head(l, h)) - p.probability(tb.head(l, h));
    }
  }
  return out;
}

// Probe bundle: {dims, probes:[{layer, head, weights, bias, mean, scale, val_accuracy, converged, iterations}]}

inline nlohmann::json to_json(const ProbeGrid& g) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : g.probes) {
    probes.push_back({{"layer", p.coord.layer},
                      {"head", p.coord.head},
                      {"weights", p.weights},
                      {"bias", p.bias},
                      {"mean", p.stats.mean},
                      {"scale", p.stats.scale},
                      {"val_accuracy", p.val_accuracy},
                      {"converged", p.converged},
                      {"iterations", p.iterations}});
  }
  return {{"dims", {{"n_layers", g.n_layers}, {"n_heads", g.n_heads}, {"d_head", g.d_head}}}, {"probes", probes}};
}

inline ProbeGrid grid_from_json(const nlohmann::json& j) {
  try {
    ProbeGrid g;
    g.n_layers = j.at("dims").at("n_layers").get<std::size_t>();
    g.n_heads = j.at("dims").at("n_heads").get<std::size_t>();
    g.d_head = j.at("dims").at("d_head").get<std::size_t>();
    for (const auto& jp : j.at("probes")) {
      Probe p;
      p.coord = {jp.at("layer").get<std::size_t>(), jp.at("head").get<std::size_t>()};
      p.weights = jp.at("weights").get<std::vector<double>>();
      p.bias = jp.at("bias").get<double>();
      p.stats.mean = jp.at("mean").get<std::vector<double>>();
      p.stats.scale = jp.at("scale").get<std::vector<double>>();
      p.val_accuracy = jp.at("val_accuracy").get<double>();
      p.converged = jp.value("converged", false);
      p.iterations = jp.value("iterations", std::size_t{0});
      if (p.weights.size() != g.d_head || p.stats.mean.size() != g.d_head || p.stats.scale.size() != g.d_head) {
        throw ValidationError("probe " + to_string(p.coord) + " has wrong width");
      }
      g.probes.push_back(std::move(p));
    }
    if (g.probes.size() != g.n_layers * g.n_heads) throw ValidationError("probe bundle is missing probes");
    for (std::size_t i = 0; i < g.probes.size(); ++i) {
      if (g.probes[i].coord.layer != i / g.n_heads || g.probes[i].coord.head != i % g.n_heads) {
        throw ValidationError("probe bundle is not in (layer, head) order");
      }
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad probe bundle: ") + e.what());
  }
}

inline nlohmann::json to_json(const HeadSelection& s) {
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& c : s.coords) coords.push_back({c.layer, c.head});
  return coords;
}

inline HeadSelection selection_from_json(const nlohmann::json& j) {
  HeadSelection s;
  try {
    for (const auto& c : j) s.coords.push_back({c.at(0).get<std::size_t>(), c.at(1).get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad head selection: ") + e.what());
  }
  return s;
}

}  // namespace veritas::probing
