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

#include <random>
#include <string>
#include <vector>

#include "veritas/dataset.hpp"
#include "veritas/model/world.hpp"

// Labeled datasets and decoding benchmarks drawn from the chained-addition
// world, for end-to-end runs against planted models.

namespace veritas::data {

inline long wrong_value(long correct, std::mt19937_64& rng) {
  static constexpr long kDeltas[] = {-2, -1, 1, 2, 3};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kDeltas) - 1);
  long v = correct + kDeltas[pick(rng)];
  if (v < 0) v = correct + 1;
  return v;
}

/// One correct and one incorrect answer per question.
inline std::vector<LabeledRecord> synthetic_answers(const ArithmeticWorld& world, std::size_t n_questions,
                                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledRecord> out;
  for (std::size_t i = 0; i < n_questions; ++i) {
    const auto ops = world.sample_operands(rng);
    long sum = 0;
    for (int o : ops) sum += o;
    const std::string q = ArithmeticWorld::question_text(ops, false);
    const std::string base = "a" + std::to_string(i);
    out.push_back(LabeledAnswer{base + "-pos", q, std::to_string(sum), 1});
    out.push_back(LabeledAnswer{base + "-neg", q, std::to_string(wrong_value(sum, rng)), 0});
  }
  return out;
}

/// Per task, a random step position with the correct prefix before it, and
/// both a correct and a corrupted version of that step.
inline std::vector<LabeledRecord> synthetic_steps(const ArithmeticWorld& world, std::size_t n_tasks,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledRecord> out;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    const auto ops = world.sample_operands(rng);
    const auto solution = ArithmeticWorld::solution_steps(ops);
    std::uniform_int_distribution<std::size_t> pick_pos(0, solution.size() - 1);
    const std::size_t k = pick_pos(rng);
    long a = ops[0];
    for (std::size_t s = 0; s < k; ++s) a += ops[s + 1];
    const long b = ops[k + 1];
    const bool final_step = k + 1 == solution.size();
    const std::string q = ArithmeticWorld::question_text(ops, true);
    std::vector<std::string> prev(solution.begin(), solution.begin() + static_cast<std::ptrdiff_t>(k));
    const std::string bad = ArithmeticWorld::step_text(k + 1, a, b, wrong_value(a + b, rng), final_step);
    const std::string base = "s" + std::to_string(i);
    out.push_back(LabeledStep{base + "-pos", q, prev, solution[k], 1});
    out.push_back(LabeledStep{base + "-neg", q, prev, bad, 0});
  }
  return out;
}

inline std::vector<ReasoningTask> synthetic_tasks(const ArithmeticWorld& world, std::size_t n_tasks,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ReasoningTask> out;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    const auto ops = world.sample_operands(rng);
    long sum = 0;
    for (int o : ops) sum += o;
    out.push_back({"t" + std::to_string(i), ArithmeticWorld::question_text(ops, true), std::to_string(sum)});
  }
  return out;
}

/// Fully worked example chains in the decoding format.
inline std::vector<std::string> synthetic_exemplars(const ArithmeticWorld& world, std::size_t n,
                                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ops = world.sample_operands(rng);
    std::string text = ArithmeticWorld::question_text(ops, true);
    const auto steps = ArithmeticWorld::solution_steps(ops);
    for (std::size_t s = 0; s < steps.size(); ++s) {
      if (s > 0) text += "\n";
      text += steps[s];
    }
    out.push_back(std::move(text));
  }
  return out;
}

}  // namespace veritas::data
