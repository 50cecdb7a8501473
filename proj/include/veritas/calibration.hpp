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
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "veritas/dataset.hpp"
#include "veritas/model/cognitive_model.hpp"
#include "veritas/util.hpp"

namespace veritas::calibration {

/// Confidences in [0, 1] paired with binary correctness labels.
struct PredictionSet {
  std::vector<double> confidences;
  std::vector<int> labels;

  std::size_t size() const { return confidences.size(); }

  void validate() const {
    if (confidences.empty()) throw ValidationError("prediction set is empty");
    if (confidences.size() != labels.size()) {
      throw ValidationError("prediction set has " + std::to_string(confidences.size()) + " confidences but " +
                            std::to_string(labels.size()) + " labels");
    }
    for (double c : confidences) {
      if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("confidence outside [0, 1]: " + std::to_string(c));
    }
    for (int y : labels) {
      if (y != 0 && y != 1) throw ValidationError("label must be 0 or 1");
    }
  }
};

/// Equal-width bins over [0, 1], right-closed: bin 0 is [0, 1/B], bin b > 0 is
/// (b/B, (b+1)/B]. Edges are b/B computed in double, so a literal like 0.3
/// lands in the bin it closes.
inline std::size_t bin_index(double confidence, std::size_t n_bins) {
  const double b = static_cast<double>(n_bins);
  std::size_t lo = 0;
  std::size_t hi = n_bins - 1;
  while (lo < hi) {  // smallest bin whose upper edge is >= confidence
    const std::size_t mid = (lo + hi) / 2;
    if (confidence <= static_cast<double>(mid + 1) / b) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

struct ReliabilityBin {
  std::size_t index = 0;
  double lower = 0.0;
  double upper = 0.0;
  double midpoint = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

/// Populated bins only, in increasing order.
inline std::vector<ReliabilityBin> reliability_curve(const PredictionSet& preds, std::size_t n_bins) {
  preds.validate();
  if (n_bins < 1) throw ValidationError("n_bins must be >= 1");
  std::vector<std::size_t> count(n_bins, 0);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<double> label_sum(n_bins, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t b = bin_index(preds.confidences[i], n_bins);
    ++count[b];
    conf_sum[b] += preds.confidences[i];
    label_sum[b] += preds.labels[i];
  }
  std::vector<ReliabilityBin> out;
  const double width = 1.0 / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    ReliabilityBin r;
    r.index = b;
    r.lower = static_cast<double>(b) / static_cast<double>(n_bins);
    r.upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    r.midpoint = (static_cast<double>(b) + 0.5) * width;
    r.count = count[b];
    r.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
    r.accuracy = label_sum[b] / static_cast<double>(count[b]);
    out.push_back(r);
  }
  return out;
}

inline double ece(const PredictionSet& preds, std::size_t n_bins = 10) {
  const auto bins = reliability_curve(preds, n_bins);
  const double n = static_cast<double>(preds.size());
  double total = 0.0;
  for (const auto& b : bins) total += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.mean_confidence);
  return total;
}

inline double brier(const PredictionSet& preds) {
  preds.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds.confidences[i] - preds.labels[i];
    total += d * d;
  }
  return total / static_cast<double>(preds.size());
}

/// Mann-Whitney AUC with mid-ranks for ties.
inline double auc(const PredictionSet& preds) {
  preds.validate();
  const std::size_t n = preds.size();
  std::size_t n_pos = 0;
  for (int y : preds.labels) n_pos += static_cast<std::size_t>(y);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("AUC is undefined with a single label class");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return preds.confidences[a] < preds.confidences[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && preds.confidences[order[j]] == preds.confidences[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (preds.labels[order[k]] == 1) pos_rank_sum += mid_rank;
    }
    i = j;
  }
  const double pos = static_cast<double>(n_pos);
  const double u = pos_rank_sum - pos * (pos + 1.0) / 2.0;
  return u / (pos * static_cast<double>(n_neg));
}

struct CalibrationReport {
  double ece = 0.0;
  double brier = 0.0;
  double auc = 0.0;
  std::size_t n_bins = 10;
  std::size_t n = 0;
  std::vector<ReliabilityBin> bins;
};

inline CalibrationReport report(const PredictionSet& preds, std::size_t n_bins = 10) {
  CalibrationReport r;
  r.n_bins = n_bins;
  r.n = preds.size();
  r.bins = reliability_curve(preds, n_bins);
  r.ece = ece(preds, n_bins);
  r.brier = brier(preds);
  r.auc = auc(preds);
  return r;
}

inline nlohmann::json to_json(const CalibrationReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"index", b.index},
                    {"midpoint", b.midpoint},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy}});
  }
  return {{"ece", r.ece}, {"brier", r.brier}, {"auc", r.auc}, {"n_bins", r.n_bins}, {"n", r.n}, {"bins", bins}};
}

inline std::string reliability_csv(const std::vector<ReliabilityBin>& bins) {
  std::string out = "midpoint,confidence,accuracy,count\n";
  for (const auto& b : bins) {
    out += fixed(b.midpoint) + "," + fixed(b.mean_confidence) + "," + fixed(b.accuracy) + "," +
           std::to_string(b.count) + "\n";
  }
  return out;
}

// Untrained baseline scorers.

struct LikelihoodScore {
  double value = 0.0;
  /// Set when some answer token had probability zero; value is then the
  /// smallest positive double.
  bool zero_probability = false;
};

/// Geometric mean of per-token probabilities of `answer_tokens` following
/// `context_tokens`.
inline LikelihoodScore sequence_likelihood_tokens(const CognitiveModel& model, const TokenSeq& context_tokens,
                                                  const TokenSeq& answer_tokens) {
  if (answer_tokens.empty()) throw ValidationError("answer must contain at least one token");
  TokenSeq seq = context_tokens;
  double log_sum = 0.0;
  for (TokenId t : answer_tokens) {
    const auto dist = forward_with_hooks(model, seq).distribution;
    const double p = dist[static_cast<std::size_t>(t)];
    if (p <= 0.0) return {std::numeric_limits<double>::denorm_min(), true};
    log_sum += std::log(p);
    seq.push_back(t);
  }
  return {std::exp(log_sum / static_cast<double>(answer_tokens.size())), false};
}

/// The answer is scored in the non-CoT probing frame "Question: q\nAnswer: a".
inline LikelihoodScore sequence_likelihood(const CognitiveModel& model, const std::string& question,
                                           const std::string& answer) {
  const std::string full = data::format_noncot(question, answer);
  const std::string prefix = full.substr(0, full.size() - answer.size());
  const auto& tok = model.tokenizer();
  return sequence_likelihood_tokens(model, tok.encode(prefix), tok.encode(answer));
}

struct VerificationTemplate {
  std::string text =
      "Question: {question}\nProposed Answer: {answer}\nIs the proposed answer:\n (A) True\n (B) False\n"
      "The proposed answer is: (";
  /// Token whose next-position probability is read out as P(True).
  std::string target = "A";
};

inline std::string render_verification(const VerificationTemplate& tmpl, const std::string& question,
                                       const std::string& answer) {
  const std::size_t q = tmpl.text.find("{question}");
  const std::size_t a = tmpl.text.find("{answer}");
  if (q == std::string::npos || a == std::string::npos) {
    throw ConfigError("verification template needs {question} and {answer} slots");
  }
  std::string out = tmpl.text;
  // Replace the later slot first so the earlier offset stays valid.
  if (a > q) {
    out.replace(a, 8, answer);
    out.replace(q, 10, question);
  } else {
    out.replace(q, 10, question);
    out.replace(a, 8, answer);
  }
  return out;
}

inline double is_true_probability(const CognitiveModel& model, const std::string& question,
                                  const std::string& answer, const VerificationTemplate& tmpl = {}) {
  const auto target = model.tokenizer().single_token(tmpl.target);
  if (!target) throw ConfigError("verification target \"" + tmpl.target + "\" is not a single vocabulary token");
  const auto tokens = model.tokenizer().encode(render_verification(tmpl, question, answer));
  const auto dist = forward_with_hooks(model, tokens).distribution;
  return dist[static_cast<std::size_t>(*target)];
}

}  // namespace veritas::calibration
