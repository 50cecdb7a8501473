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
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "veritas/calibration.hpp"
#include "veritas/probing.hpp"
#include "veritas/util.hpp"

namespace veritas::predictor {

using probing::HeadSelection;

/// Per-feature standardisation; empty means raw features.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> scale;

  bool empty() const { return mean.empty(); }
  friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

struct FeatureVector {
  std::vector<double> values;
  HeadSelection selection;
};

/// Concatenates the selected heads' activations in selection order.
inline FeatureVector extract_features(const HeadActivationTensor& tensor, const HeadSelection& selection,
                                      const FeatureStats& stats = {}) {
  FeatureVector v;
  v.selection = selection;
  v.values.reserve(selection.size() * tensor.d_head());
  for (const auto& c : selection.coords) {
    if (c.layer >= tensor.n_layers() || c.head >= tensor.n_heads()) {
      throw ValidationError("selected head " + to_string(c) + " outside activation dims (" +
                            std::to_string(tensor.n_layers()) + " layers, " + std::to_string(tensor.n_heads()) +
                            " heads)");
    }
    const auto h = tensor.head(c);
    v.values.insert(v.values.end(), h.begin(), h.end());
  }
  if (!stats.empty()) {
    if (stats.mean.size() != v.values.size() || stats.scale.size() != v.values.size()) {
      throw ValidationError("feature stats cover " + std::to_string(stats.mean.size()) + " values, features have " +
                            std::to_string(v.values.size()));
    }
    for (std::size_t i = 0; i < v.values.size(); ++i) v.values[i] = (v.values[i] - stats.mean[i]) / stats.scale[i];
  }
  return v;
}

/// Stacks the probe module's per-head statistics in selection order.
inline FeatureStats stats_from_grid(const probing::ProbeGrid& grid, const HeadSelection& selection) {
  FeatureStats s;
  for (const auto& c : selection.coords) {
    if (c.layer >= grid.n_layers || c.head >= grid.n_heads) {
      throw ValidationError("selected head " + to_string(c) + " outside probe grid");
    }
    const auto& hs = grid.probe(c).stats;
    s.mean.insert(s.mean.end(), hs.mean.begin(), hs.mean.end());
    s.scale.insert(s.scale.end(), hs.scale.begin(), hs.scale.end());
  }
  return s;
}

struct TrainingInfo {
  std::string loss = "mse";
  std::size_t n_folds = 0;
  std::size_t n_bins = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double final_loss = 0.0;
  std::vector<double> loss_history;
};

struct ConfidencePredictor {
  std::vector<double> weights;
  double bias = 0.0;
  HeadSelection selection;
  FeatureStats stats;
  TrainingInfo info;

  double pre_activation(const FeatureVector& v) const {
    if (!(v.selection == selection)) throw ValidationError("feature selection does not match predictor selection");
    if (v.values.size() != weights.size()) {
      throw ValidationError("feature length " + std::to_string(v.values.size()) + " != predictor width " +
                            std::to_string(weights.size()));
    }
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * v.values[i];
    return z;
  }

  FeatureVector features(const HeadActivationTensor& t) const { return extract_features(t, selection, stats); }
};

inline double predict_confidence(const ConfidencePredictor& p, const FeatureVector& v) {
  return sigmoid(p.pre_activation(v));
}

inline double predict_confidence(const ConfidencePredictor& p, const HeadActivationTensor& t) {
  return predict_confidence(p, p.features(t));
}

/// Design matrix over a labeled activation set, one row per example.
struct LabeledFeatures {
  Eigen::MatrixXd x;
  std::vector<int> labels;
  HeadSelection selection;
  FeatureStats stats;

  std::size_t size() const { return labels.size(); }
};

inline LabeledFeatures build_features(const probing::LabeledActivations& acts, const HeadSelection& selection,
                                      const FeatureStats& stats = {}) {
  if (acts.size() == 0) throw ValidationError("no examples to build features from");
  LabeledFeatures f;
  f.selection = selection;
  f.stats = stats;
  f.labels = acts.labels;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const auto v = extract_features(acts.tensors[i], selection, stats);
    if (i == 0) f.x.resize(static_cast<Eigen::Index>(acts.size()), static_cast<Eigen::Index>(v.values.size()));
    f.x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.values.data(),
                                                                                  static_cast<Eigen::Index>(v.values.size()));
  }
  return f;
}

inline LabeledFeatures subset(const LabeledFeatures& f, const std::vector<std::size_t>& rows) {
  LabeledFeatures out;
  out.selection = f.selection;
  out.stats = f.stats;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), f.x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = f.x.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(f.labels[rows[i]]);
  }
  return out;
}

struct RegressionHyper {
  double learning_rate = 0.05;
  std::size_t max_iterations = 2000;
  /// Stop once one step improves the loss by less than this.
  double min_improvement = 1e-8;
  std::size_t threads = 1;
};

/// Full-batch gradient descent on mean (target - sigmoid(Xw + b))^2 from
/// w = 0, b = 0. A rising or non-finite loss aborts with NumericError.
inline ConfidencePredictor train_regression(const LabeledFeatures& f, const std::vector<double>& targets,
                                            const RegressionHyper& hyper) {
  if (f.size() == 0) throw ValidationError("training set is empty");
  if (targets.size() != f.size()) throw ValidationError("one target per example required");
  if (!(hyper.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  const Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(targets.size()));
  const double n = static_cast<double>(f.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(f.x.cols());
  double b = 0.0;

  ConfidencePredictor p;
  p.selection = f.selection;
  p.stats = f.stats;
  auto& info = p.info;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0;; ++it) {
    const Eigen::VectorXd prob = ((f.x * w).array() + b).unaryExpr([](double z) { return sigmoid(z); });
    const Eigen::VectorXd r = prob - y;
    const double loss = r.squaredNorm() / n;
    if (!std::isfinite(loss)) {
      throw NumericError("predictor loss became non-finite at iteration " + std::to_string(it) +
                         "; use a smaller learning_rate");
    }
    if (loss > prev + 1e-12) {
      throw NumericError("predictor loss rose at iteration " + std::to_string(it) + " (" + fixed(prev, 9) + " -> " +
                         fixed(loss, 9) + "); use a smaller learning_rate");
    }
    info.loss_history.push_back(loss);
    info.iterations = it;
    if (it == hyper.max_iterations || prev - loss < hyper.min_improvement) break;
    prev = loss;
    // d/dz (t - s(z))^2 = 2 (s - t) s (1 - s)
    const Eigen::VectorXd g = 2.0 * r.array() * prob.array() * (1.0 - prob.array());
    w -= hyper.learning_rate * (f.x.transpose() * g) / n;
    b -= hyper.learning_rate * g.sum() / n;
  }
  info.final_loss = info.loss_history.back();
  p.weights.assign(w.data(), w.data() + w.size());
  p.bias = b;
  return p;
}

inline void require_both_labels(const std::vector<int>& labels, const std::string& what) {
  const bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!pos || !neg) throw ValidationError(what + " holds a single label class");
}

inline ConfidencePredictor train_mse(const LabeledFeatures& f, const RegressionHyper& hyper = {}) {
  require_both_labels(f.labels, "training set");
  const std::vector<double> targets(f.labels.begin(), f.labels.end());
  auto p = train_regression(f, targets, hyper);
  p.info.loss = "mse";
  return p;
}

inline std::vector<double> predict_all(const ConfidencePredictor& p, const LabeledFeatures& f) {
  const Eigen::Map<const Eigen::VectorXd> w(p.weights.data(), static_cast<Eigen::Index>(p.weights.size()));
  const Eigen::VectorXd z = (f.x * w).array() + p.bias;
  std::vector<double> out(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(z(i));
  return out;
}

/// Cross-validated confidences binned into equal-width bins; each example's
/// target is the empirical accuracy of its bin.
struct SoftTargetTable {
  std::size_t n_folds = 0;
  std::size_t n_bins = 0;
  std::uint64_t seed = 0;
  std::vector<double> edges;  // n_bins + 1
  std::vector<double> bin_accuracy;  // 0 for empty bins
  std::vector<std::size_t> bin_count;
  std::vector<std::size_t> fold;  // per example
  std::vector<double> confidences;  // per example, out-of-fold
  std::vector<double> targets;  // per example
};

/// Binning step alone, for confidences obtained elsewhere.
inline SoftTargetTable soft_targets_from_confidences(const std::vector<double>& confidences,
                                                     const std::vector<int>& labels, std::size_t n_bins) {
  calibration::PredictionSet preds{confidences, labels};
  preds.validate();
  if (n_bins < 1) throw ValidationError("n_bins must be >= 1");
  SoftTargetTable t;
  t.n_bins = n_bins;
  for (std::size_t b = 0; b <= n_bins; ++b) t.edges.push_back(static_cast<double>(b) / static_cast<double>(n_bins));
  t.bin_accuracy.assign(n_bins, 0.0);
  t.bin_count.assign(n_bins, 0);
  t.confidences = confidences;
  for (const auto& bin : calibration::reliability_curve(preds, n_bins)) {
    t.bin_accuracy[bin.index] = bin.accuracy;
    t.bin_count[bin.index] = bin.count;
  }
  for (double c : confidences) t.targets.push_back(t.bin_accuracy[calibration::bin_index(c, n_bins)]);
  return t;
}

/// Label-stratified fold assignment: each class is shuffled and dealt
/// round-robin.
inline std::vector<std::size_t> stratified_folds(const std::vector<int>& labels, std::size_t n_folds,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> fold(labels.size());
  std::mt19937_64 rng(seed);
  std::size_t offset = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(idx[i - 1], idx[pick(rng)]);
    }
    for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = (offset + k) % n_folds;
    offset += idx.size();
  }
  return fold;
}

inline SoftTargetTable compute_soft_targets(const LabeledFeatures& f, std::size_t n_folds = 5,
                                            std::size_t n_bins = 10, const RegressionHyper& hyper = {},
                                            std::uint64_t seed = 0) {
  if (n_folds < 2) throw ValidationError("n_folds must be >= 2");
  if (f.size() < n_folds) throw ValidationError("fewer examples than folds");
  require_both_labels(f.labels, "training set");
  const auto fold = stratified_folds(f.labels, n_folds, seed);

  std::vector<double> conf(f.size());
  parallel_for(n_folds, hyper.threads, [&](std::size_t k) {
    std::vector<std::size_t> train_rows, held_rows;
    for (std::size_t i = 0; i < f.size(); ++i) (fold[i] == k ? held_rows : train_rows).push_back(i);
    const auto train = subset(f, train_rows);
    require_both_labels(train.labels, "fold " + std::to_string(k) + " training part");
    RegressionHyper h = hyper;
    h.threads = 1;
    const auto model = train_mse(train, h);
    const auto held = predict_all(model, subset(f, held_rows));
    for (std::size_t j = 0; j < held_rows.size(); ++j) conf[held_rows[j]] = held[j];
  });

  auto t = soft_targets_from_confidences(conf, f.labels, n_bins);
  t.n_folds = n_folds;
  t.seed = seed;
  t.fold = fold;
  return t;
}

inline ConfidencePredictor train_ece(const LabeledFeatures& f, const SoftTargetTable& table,
                                     const RegressionHyper& hyper = {}) {
  if (table.targets.size() != f.size()) {
    throw ValidationError("soft-target table covers " + std::to_string(table.targets.size()) +
                          " examples, training set has " + std::to_string(f.size()));
  }
  auto p = train_regression(f, table.targets, hyper);
  p.info.loss = "ece";
  p.info.n_folds = table.n_folds;
  p.info.n_bins = table.n_bins;
  p.info.seed = table.seed;
  return p;
}

inline nlohmann::json to_json(const ConfidencePredictor& p) {
  return {{"selection", probing::to_json(p.selection)},
          {"weights", p.weights},
          {"bias", p.bias},
          {"stats", {{"mean", p.stats.mean}, {"scale", p.stats.scale}}},
          {"training",
           {{"loss", p.info.loss},
            {"n_folds", p.info.n_folds},
            {"n_bins", p.info.n_bins},
            {"seed", p.info.seed},
            {"iterations", p.info.iterations},
            {"final_loss", p.info.final_loss}}}};
}

inline ConfidencePredictor predictor_from_json(const nlohmann::json& j) {
  try {
    ConfidencePredictor p;
    p.selection = probing::selection_from_json(j.at("selection"));
    p.weights = j.at("weights").get<std::vector<double>>();
    p.bias = j.at("bias").get<double>();
    p.stats.mean = j.at("stats").at("mean").get<std::vector<double>>();
    p.stats.scale = j.at("stats").at("scale").get<std::vector<double>>();
    const auto& t = j.at("training");
    p.info.loss = t.at("loss").get<std::string>();
    p.info.n_folds = t.value("n_folds", std::size_t{0});
    p.info.n_bins = t.value("n_bins", std::size_t{0});
    p.info.seed = t.value("seed", std::uint64_t{0});
    p.info.iterations = t.value("iterations", std::size_t{0});
    p.info.final_loss = t.value("final_loss", 0.0);
    if (p.selection.size() == 0 || p.weights.size() % p.selection.size() != 0) {
      throw ValidationError("predictor width is not a multiple of the selection size");
    }
    if (!p.stats.empty() && (p.stats.mean.size() != p.weights.size() || p.stats.scale.size() != p.weights.size())) {
      throw ValidationError("predictor stats width mismatch");
    }
    for (double w : p.weights)
      if (!std::isfinite(w)) throw ValidationError("predictor weights are not finite");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad predictor bundle: ") + e.what());
  }
}

}  // namespace veritas::predictor
