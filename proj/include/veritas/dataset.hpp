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

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "veritas/error.hpp"
#include "veritas/model/trace_io.hpp"

namespace veritas::data {

inline constexpr std::string_view kNextStepQuestion = "\n\nWhat is the next step of reasoning?\n";

/// A question paired with one candidate answer; label 1 means correct.
struct LabeledAnswer {
  std::string id;
  std::string question;
  std::string answer;
  int label = 0;
};

/// A reasoning prefix plus one candidate next step; label 1 means correct.
struct LabeledStep {
  std::string id;
  std::string question;
  std::vector<std::string> previous_steps;
  std::string step;
  int label = 0;
};

using LabeledRecord = std::variant<LabeledAnswer, LabeledStep>;

inline const std::string& record_id(const LabeledRecord& r) {
  return std::visit([](const auto& x) -> const std::string& { return x.id; }, r);
}
inline int record_label(const LabeledRecord& r) {
  return std::visit([](const auto& x) { return x.label; }, r);
}
inline const std::string& record_question(const LabeledRecord& r) {
  return std::visit([](const auto& x) -> const std::string& { return x.question; }, r);
}

inline std::string format_noncot(std::string_view question, std::string_view answer) {
  if (question.empty()) throw ValidationError("question must not be empty");
  if (answer.empty()) throw ValidationError("answer must not be empty");
  std::string out = "Question: ";
  out += question;
  out += "\nAnswer: ";
  out += answer;
  return out;
}

/// Inverse of format_noncot for strings it produced.
inline std::pair<std::string, std::string> parse_noncot(std::string_view prompt) {
  constexpr std::string_view kQ = "Question: ";
  constexpr std::string_view kA = "\nAnswer: ";
  if (prompt.substr(0, kQ.size()) != kQ) throw ValidationError("prompt does not start with \"Question: \"");
  const std::size_t split = prompt.rfind(kA);
  if (split == std::string_view::npos || split < kQ.size()) {
    throw ValidationError("prompt has no \"\\nAnswer: \" marker");
  }
  return {std::string(prompt.substr(kQ.size(), split - kQ.size())), std::string(prompt.substr(split + kA.size()))};
}

/// Everything before the step itself; shared by probing prompts and decoding
/// contexts so both see the same framing.
inline std::string cot_prefix(std::string_view question, const std::vector<std::string>& previous_steps) {
  std::string out(question);
  for (std::size_t i = 0; i < previous_steps.size(); ++i) {
    if (i > 0) out += "\n";
    out += previous_steps[i];
  }
  out += kNextStepQuestion;
  return out;
}

inline std::string format_cot(std::string_view question, const std::vector<std::string>& previous_steps,
                              std::string_view step) {
  if (step.empty()) throw ValidationError("step must not be empty");
  return cot_prefix(question, previous_steps) + std::string(step);
}

inline std::string render_prompt(const LabeledRecord& r) {
  if (const auto* a = std::get_if<LabeledAnswer>(&r)) return format_noncot(a->question, a->answer);
  const auto& s = std::get<LabeledStep>(r);
  return format_cot(s.question, s.previous_steps, s.step);
}

inline void validate_record(const LabeledRecord& r) {
  const int label = record_label(r);
  if (label != 0 && label != 1) throw ValidationError("label must be 0 or 1, got " + std::to_string(label));
  if (const auto* a = std::get_if<LabeledAnswer>(&r)) {
    if (a->question.empty()) throw ValidationError("question must not be empty");
    if (a->answer.empty()) throw ValidationError("answer must not be empty");
  } else if (std::get<LabeledStep>(r).step.empty()) {
    throw ValidationError("step must not be empty");
  }
}

inline nlohmann::json to_json(const LabeledRecord& r) {
  if (const auto* a = std::get_if<LabeledAnswer>(&r)) {
    return {{"id", a->id}, {"question", a->question}, {"answer", a->answer}, {"label", a->label}};
  }
  const auto& s = std::get<LabeledStep>(r);
  return {{"id", s.id},
          {"question", s.question},
          {"previous_steps", s.previous_steps},
          {"step", s.step},
          {"label", s.label}};
}

/// Parses and validates one record. Exactly one of "answer" / "step" must be
/// present; "previous_steps" only accompanies "step".
inline LabeledRecord record_from_json(const nlohmann::json& j, const std::string& fallback_id) {
  static const std::set<std::string> kKnown{"id", "question", "answer", "step", "previous_steps", "label"};
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.count(key)) throw ValidationError("unknown field \"" + key + "\"");
  }
  if (j.contains("answer") == j.contains("step")) {
    throw ValidationError("record needs exactly one of \"answer\" or \"step\"");
  }
  if (!j.contains("question") || !j.contains("label")) throw ValidationError("record needs \"question\" and \"label\"");
  const auto& jl = j.at("label");
  if (!jl.is_number_integer()) throw ValidationError("label must be an integer 0 or 1");
  std::string id = fallback_id;
  if (j.contains("id")) {
    const auto& jid = j.at("id");
    id = jid.is_string() ? jid.get<std::string>() : jid.dump();
  }
  LabeledRecord r;
  try {
    if (j.contains("answer")) {
      if (j.contains("previous_steps")) throw ValidationError("\"previous_steps\" requires \"step\"");
      r = LabeledAnswer{id, j.at("question").get<std::string>(), j.at("answer").get<std::string>(), jl.get<int>()};
    } else {
      LabeledStep s{id, j.at("question").get<std::string>(), {}, j.at("step").get<std::string>(), jl.get<int>()};
      if (j.contains("previous_steps")) s.previous_steps = j.at("previous_steps").get<std::vector<std::string>>();
      r = std::move(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("wrong field type: ") + e.what());
  }
  validate_record(r);
  return r;
}

struct LoadOptions {
  /// Require every question to contribute both a positive and a negative.
  bool balanced = true;
};

/// Parses JSON-lines text; `source` names the input in error messages.
inline std::vector<LabeledRecord> parse_jsonl(std::string_view text, const std::string& source,
                                              const LoadOptions& options = {}) {
  std::vector<LabeledRecord> out;
  std::map<std::string, std::size_t> id_line;
  std::map<std::string, std::pair<int, int>> per_question;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ": malformed JSON on line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    LabeledRecord r;
    try {
      r = record_from_json(j, "line-" + std::to_string(line_no));
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const auto [it, inserted] = id_line.emplace(record_id(r), line_no);
    if (!inserted) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": duplicate example id \"" + record_id(r) +
                            "\" (first seen on line " + std::to_string(it->second) + ")");
    }
    auto& counts = per_question[record_question(r)];
    (record_label(r) == 1 ? counts.first : counts.second)++;
    out.push_back(std::move(r));
  }
  if (options.balanced) {
    for (const auto& [q, c] : per_question) {
      if (c.first == 0 || c.second == 0) {
        throw ValidationError(source + ": question \"" + q.substr(0, 60) + "\" lacks a " +
                              (c.first == 0 ? "positive" : "negative") + " example");
      }
    }
  }
  return out;
}

inline std::vector<LabeledRecord> load_jsonl(const std::string& path, const LoadOptions& options = {}) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    throw ValidationError("dataset path does not exist or is unreadable: " + path);
  }
  return parse_jsonl(text, path, options);
}

inline std::string to_jsonl(const std::vector<LabeledRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

struct SplitRatios {
  double train = 1.0;
  double validation = 0.0;
  double test = 0.0;
};

struct LabelCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct DatasetSplit {
  std::vector<LabeledRecord> train, validation, test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

inline LabelCounts count_labels(const std::vector<LabeledRecord>& records) {
  LabelCounts c;
  for (const auto& r : records) (record_label(r) == 1 ? c.positive : c.negative)++;
  return c;
}

/// Seeded shuffle, then floor(ratio * n) records to train and validation and
/// the remainder to test.
inline DatasetSplit split_records(std::vector<LabeledRecord> records, SplitRatios ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.validation, ratios.test}) {
    if (!(r >= 0.0)) throw ValidationError("split ratios must be non-negative");
  }
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n) + 1e-9));
  auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * static_cast<double>(n) + 1e-9));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  // Rounding leftovers never create a split whose ratio is zero.
  if (ratios.test == 0.0) {
    if (ratios.validation == 0.0) {
      n_train = n;
    } else {
      n_val = n - n_train;
    }
  }

  DatasetSplit out;
  out.ratios = ratios;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dest = i < n_train ? out.train : (i < n_train + n_val ? out.validation : out.test);
    dest.push_back(std::move(records[order[i]]));
  }
  return out;
}

inline DatasetSplit load_and_split(const std::string& path, SplitRatios ratios, std::uint64_t seed,
                                   const LoadOptions& options = {}) {
  return split_records(load_jsonl(path, options), ratios, seed);
}

inline nlohmann::json split_manifest(const DatasetSplit& s) {
  auto labels = [](const std::vector<LabeledRecord>& r) {
    const auto c = count_labels(r);
    return nlohmann::json{{"positive", c.positive}, {"negative", c.negative}};
  };
  return {{"seed", s.seed},
          {"ratios", {s.ratios.train, s.ratios.validation, s.ratios.test}},
          {"counts", {{"train", s.train.size()}, {"validation", s.validation.size()}, {"test", s.test.size()}}},
          {"label_counts",
           {{"train", labels(s.train)}, {"validation", labels(s.validation)}, {"test", labels(s.test)}}}};
}

/// A question to be answered by decoding, with its gold final answer.
struct ReasoningTask {
  std::string id;
  std::string question;
  std::string answer;
};

inline std::vector<ReasoningTask> parse_tasks(std::string_view text, const std::string& source) {
  std::vector<ReasoningTask> out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ReasoningTask t{j.at("id").get<std::string>(), j.at("question").get<std::string>(),
                      j.at("answer").get<std::string>()};
      if (t.question.empty()) throw ValidationError("empty question");
      if (!ids.insert(t.id).second) throw ValidationError("duplicate task id \"" + t.id + "\"");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ": bad task on line " + std::to_string(line_no) + ": " + e.what(), line_no);
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::string tasks_to_jsonl(const std::vector<ReasoningTask>& tasks) {
  std::string out;
  for (const auto& t : tasks) {
    out += nlohmann::json{{"id", t.id}, {"question", t.question}, {"answer", t.answer}}.dump() + "\n";
  }
  return out;
}

}  // namespace veritas::data
