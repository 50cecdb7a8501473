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
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "veritas/util.hpp"

namespace veritas {

/// A candidate next step together with its surface (generation) probability.
struct Proposal {
  std::string text;
  double probability = 0.0;
};

/// Ground truth and surface behaviour for a synthetic task family. The truth
/// oracle is what a planted model "knows"; proposals are what it "says".
class SyntheticWorld {
 public:
  virtual ~SyntheticWorld() = default;
  /// Correctness of the answer or last step in `text`; nullopt when the text
  /// holds nothing gradable.
  virtual std::optional<bool> truth(std::string_view text) const = 0;
  /// Candidate next steps for a generation context; probabilities sum to 1.
  /// Empty when the chain in `context` is already complete.
  virtual std::vector<Proposal> propose(std::string_view context, std::uint64_t seed) const = 0;
};

struct ArithmeticWorldConfig {
  std::size_t n_operands = 4;
  int min_operand = 1;
  int max_operand = 9;
  std::size_t n_proposals = 5;
  /// Logit bonus of the correct value among proposals (unit-variance noise).
  double surface_bias = 1.0;
};

/// Chained addition: "Calculate 3 + 5 + 2 + 6." solved one partial sum per
/// step, "Step k: a + b = c", the last step closing with \boxed{c}.
class ArithmeticWorld final : public SyntheticWorld {
 public:
  static constexpr std::string_view kQuestionMarker = "Calculate ";

  struct ParsedStep {
    long a = 0, b = 0, c = 0;
    std::optional<long> boxed;
  };

  explicit ArithmeticWorld(ArithmeticWorldConfig cfg = {}) : cfg_(cfg) {}

  const ArithmeticWorldConfig& config() const { return cfg_; }

  static std::string question_text(const std::vector<int>& operands, bool chain) {
    std::string q(kQuestionMarker);
    for (std::size_t i = 0; i < operands.size(); ++i) {
      if (i > 0) q += " + ";
      q += std::to_string(operands[i]);
    }
    q += ".";
    if (chain) q += "\n";
    return q;
  }

  static std::string step_text(std::size_t index, long a, long b, long c, bool final_step) {
    std::string s = "Step " + std::to_string(index) + ": " + std::to_string(a) + " + " + std::to_string(b) +
                    " = " + std::to_string(c);
    if (final_step) s += ". The answer is \\boxed{" + std::to_string(c) + "}.";
    return s;
  }

  std::vector<int> sample_operands(std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> pick(cfg_.min_operand, cfg_.max_operand);
    std::vector<int> ops(cfg_.n_operands);
    for (int& v : ops) v = pick(rng);
    return ops;
  }

  /// The fully correct chain of step texts for `operands`.
  static std::vector<std::string> solution_steps(const std::vector<int>& operands) {
    std::vector<std::string> steps;
    long acc = operands.empty() ? 0 : operands[0];
    for (std::size_t i = 1; i < operands.size(); ++i) {
      const long next = acc + operands[i];
      steps.push_back(step_text(i, acc, operands[i], next, i + 1 == operands.size()));
      acc = next;
    }
    return steps;
  }

  /// Operands of the last question in `text` and the offset just past it.
  static std::optional<std::pair<std::vector<long>, std::size_t>> parse_question(std::string_view text) {
    const std::size_t start = text.rfind(kQuestionMarker);
    if (start == std::string_view::npos) return std::nullopt;
    std::size_t pos = start + kQuestionMarker.size();
    std::vector<long> ops;
    while (true) {
      const auto v = parse_int(text, pos);
      if (!v) return std::nullopt;
      ops.push_back(*v);
      if (text.substr(pos, 3) == " + ") {
        pos += 3;
        continue;
      }
      if (pos < text.size() && text[pos] == '.') {
        ++pos;
        break;
      }
      return std::nullopt;
    }
    if (ops.size() < 2) return std::nullopt;
    return std::make_pair(std::move(ops), pos);
  }

  static std::vector<ParsedStep> parse_steps(std::string_view text, std::size_t from) {
    std::vector<ParsedStep> steps;
    std::size_t pos = from;
    while ((pos = text.find("Step ", pos)) != std::string_view::npos) {
      std::size_t p = pos + 5;
      pos = p;
      if (!parse_int(text, p) || text.substr(p, 2) != ": ") continue;
      p += 2;
      ParsedStep s;
      const auto a = parse_int(text, p);
      if (!a || text.substr(p, 3) != " + ") continue;
      p += 3;
      const auto b = parse_int(text, p);
      if (!b || text.substr(p, 3) != " = ") continue;
      p += 3;
      const auto c = parse_int(text, p);
      if (!c) continue;
      s.a = *a;
      s.b = *b;
      s.c = *c;
      const std::size_t line_end = std::min(text.find('\n', p), text.size());
      const std::size_t box = text.substr(0, line_end).find("\\boxed{", p);
      if (box != std::string_view::npos) {
        std::size_t q = box + 7;
        s.boxed = parse_int(text, q);
        if (!s.boxed) s.boxed = -1;
      }
      steps.push_back(s);
      pos = p;
    }
    return steps;
  }

  static bool step_correct(const std::vector<long>& ops, const std::vector<ParsedStep>& steps, std::size_t i) {
    if (i + 1 >= ops.size()) return false;
    const long expected_a = i == 0 ? ops[0] : steps[i - 1].c;
    const ParsedStep& s = steps[i];
    if (s.a != expected_a || s.b != ops[i + 1] || s.c != s.a + s.b) return false;
    const bool final_step = i + 2 == ops.size();
    return final_step ? (s.boxed && *s.boxed == s.c) : !s.boxed.has_value();
  }

  std::optional<bool> truth(std::string_view text) const override {
    const auto q = parse_question(text);
    if (!q) return std::nullopt;
    const auto& [ops, end] = *q;
    const std::size_t answer = text.find("Answer: ", end);
    if (answer != std::string_view::npos) {
      std::size_t p = answer + 8;
      const auto v = parse_int(text, p);
      if (!v) return false;
      long sum = 0;
      for (long o : ops) sum += o;
      return *v == sum;
    }
    const auto steps = parse_steps(text, end);
    if (steps.empty()) return std::nullopt;
    return step_correct(ops, steps, steps.size() - 1);
  }

  std::vector<Proposal> propose(std::string_view context, std::uint64_t seed) const override {
    const auto q = parse_question(context);
    if (!q) return {};
    const auto& [ops, end] = *q;
    const auto steps = parse_steps(context, end);
    const std::size_t i = steps.size();
    if (i + 1 >= ops.size()) return {};
    const long a = i == 0 ? ops[0] : steps.back().c;
    const long b = ops[i + 1];
    const long correct = a + b;
    const bool final_step = i + 2 == ops.size();

    std::vector<long> values{correct};
    for (long delta = 1; values.size() < cfg_.n_proposals; ++delta) {
      values.push_back(correct + delta);
      if (values.size() < cfg_.n_proposals && correct - delta >= 0) values.push_back(correct - delta);
    }
    const std::uint64_t ctx = fnv1a(context);
    std::vector<double> logits;
    for (long v : values) {
      std::mt19937_64 rng(mix_seed(seed, ctx, static_cast<std::uint64_t>(v)));
      std::normal_distribution<double> normal(0.0, 1.0);
      logits.push_back(normal(rng) + (v == correct ? cfg_.surface_bias : 0.0));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    std::vector<Proposal> out;
    for (std::size_t k = 0; k < values.size(); ++k) {
      out.push_back({step_text(i + 1, a, b, values[k], final_step), logits[k] / z});
    }
    return out;
  }

 private:
  static std::optional<long> parse_int(std::string_view text, std::size_t& pos) {
    std::size_t p = pos;
    bool neg = false;
    if (p < text.size() && text[p] == '-') {
      neg = true;
      ++p;
    }
    const std::size_t digits = p;
    long v = 0;
    while (p < text.size() && text[p] >= '0' && text[p] <= '9' && p - digits < 12) {
      v = v * 10 + (text[p] - '0');
      ++p;
    }
    if (p == digits) return std::nullopt;
    pos = p;
    return neg ? -v : v;
  }

  ArithmeticWorldConfig cfg_;
};

}  // namespace veritas
