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
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "veritas/calibration.hpp"
#include "veritas/dataset.hpp"
#include "veritas/model/cognitive_model.hpp"
#include "veritas/predictor.hpp"
#include "veritas/util.hpp"

namespace veritas::decoding {

enum class Strategy { kGuided, kGreedyFewshot, kSelfConsistency, kRandomSelect, kSelfEval };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kGuided: return "guided";
    case Strategy::kGreedyFewshot: return "greedy_fewshot";
    case Strategy::kSelfConsistency: return "self_consistency";
    case Strategy::kRandomSelect: return "random_select";
    case Strategy::kSelfEval: return "self_eval";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::kGuided, Strategy::kGreedyFewshot, Strategy::kSelfConsistency, Strategy::kRandomSelect,
                 Strategy::kSelfEval}) {
    if (to_string(s) == name) return s;
  }
  if (name == "greedy") return Strategy::kGreedyFewshot;
  if (name == "random") return Strategy::kRandomSelect;
  throw ConfigError("unknown strategy \"" + std::string(name) + "\"");
}

inline constexpr std::size_t kUnimodalMaxSteps = 8;
inline constexpr std::size_t kMultimodalMaxSteps = 15;
inline constexpr double kDefaultCorrectionThreshold = 0.5;

struct DecodeParams {
  Strategy strategy = Strategy::kGuided;
  std::size_t m = 3;
  double lambda = 0.5;
  std::size_t max_steps = kUnimodalMaxSteps;
  std::size_t max_new_tokens = 1024;
  /// Set to enable self-correction.
  std::optional<double> correction_threshold;
  std::string correction_prompt =
      "Please review the reasoning above carefully and without bias, and correct any mistake when continuing.";
  std::size_t sc_paths = 3;
  double sc_temperature = 0.7;
  /// Temperatures tried in turn when self-eval candidates collapse to duplicates.
  std::vector<double> temperature_schedule{0.5, 0.7, 0.9, 1.1, 1.3};
  calibration::VerificationTemplate verification;
  std::string step_delimiter = "\nStep ";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool record_timing = false;

  void validate() const {
    if (m < 1) throw ValidationError("m must be >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
    if (max_steps < 1) throw ValidationError("max_steps must be >= 1");
    if (max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
    if (correction_threshold && !(*correction_threshold >= 0.0 && *correction_threshold <= 1.0)) {
      throw ValidationError("correction_threshold must lie in [0, 1]");
    }
    if (sc_paths < 1) throw ValidationError("sc_paths must be >= 1");
    if (!(sc_temperature > 0.0)) throw ValidationError("sc_temperature must be > 0");
    if (temperature_schedule.empty()) throw ValidationError("temperature_schedule must not be empty");
    for (double t : temperature_schedule)
      if (!(t > 0.0)) throw ValidationError("temperature_schedule entries must be > 0");
  }
};

struct ScoredCandidate {
  StepCandidate candidate;
  double beta = 0.0;
  double pbar = 0.0;
  double score = 0.0;
};

/// Geometric mean of the candidate's token probabilities.
inline double mean_logprob_score(const StepCandidate& c) {
  if (c.token_logprobs.empty()) throw ValidationError("candidate has no tokens");
  for (double lp : c.token_logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) throw ValidationError("candidate token logprob is not a finite value <= 0");
  }
  return std::exp(c.mean_logprob());
}

inline double combined_score(double beta, double pbar, double lambda) { return lambda * beta + (1.0 - lambda) * pbar; }

inline ScoredCandidate score_with_beta(StepCandidate c, double beta, double lambda) {
  ScoredCandidate s;
  s.pbar = mean_logprob_score(c);
  s.beta = beta;
  s.score = combined_score(s.beta, s.pbar, lambda);
  s.candidate = std::move(c);
  return s;
}

inline ScoredCandidate score_candidate(StepCandidate c, const predictor::ConfidencePredictor& p, double lambda) {
  const double beta = predictor::predict_confidence(p, c.activations);
  return score_with_beta(std::move(c), beta, lambda);
}

/// Highest score; equal scores go to the lexicographically smallest text.
inline std::size_t best_index(const std::vector<ScoredCandidate>& scored) {
  if (scored.empty()) throw EmptyCandidatesError("no candidates to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scored.size(); ++i) {
    const auto& a = scored[i];
    const auto& b = scored[best];
    if (a.score > b.score || (a.score == b.score && a.candidate.text < b.candidate.text)) best = i;
  }
  return best;
}

/// Contents of the last \boxed{...}; FormatError with the offset of an
/// unclosed one.
inline std::optional<std::string> extract_boxed_answer(std::string_view text) {
  static constexpr std::string_view kTag = "\\boxed{";
  const std::size_t start = text.rfind(kTag);
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 1;
  for (std::size_t i = start + kTag.size(); i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) {
      return std::string(text.substr(start + kTag.size(), i - start - kTag.size()));
    }
  }
  throw FormatError("unbalanced braces in \\boxed{ answer", start);
}

/// Most frequent non-empty answer; ties go to the lexicographically smallest.
inline std::string majority_vote(const std::vector<std::string>& answers) {
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers)
    if (!a.empty()) ++counts[a];
  std::string best;
  std::size_t best_n = 0;
  for (const auto& [a, n] : counts) {
    if (n > best_n) {
      best = a;
      best_n = n;
    }
  }
  return best;
}

enum class Termination { kRunning, kAnswer, kStepLimit, kNoCandidates };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::kRunning: return "running";
    case Termination::kAnswer: return "answer";
    case Termination::kStepLimit: return "step_limit";
    case Termination::kNoCandidates: return "no_candidates";
  }
  return "?";
}

struct ChainStep {
  ScoredCandidate chosen;
  std::string text;  // chosen text without trailing newline
  std::size_t n_candidates = 0;
  bool correction_fired = false;
  bool correction_failed = false;
  bool corrected = false;  // the appended step came from the correction pass
};

struct ReasoningChain {
  std::string question;
  std::vector<std::string> exemplars;
  std::vector<ChainStep> steps;
  bool finished = false;
  std::optional<std::string> final_answer;
  Termination termination = Termination::kRunning;
  std::string failure;

  std::vector<std::string> step_texts() const {
    std::vector<std::string> out;
    for (const auto& s : steps) out.push_back(s.text);
    return out;
  }
};

/// Exemplars (each followed by a blank line), then the question and steps
/// in the CoT probing frame.
inline std::string render_context(const std::vector<std::string>& exemplars, const std::string& question,
                                  const std::vector<std::string>& steps) {
  std::string out;
  for (const auto& e : exemplars) out += e + "\n\n";
  return out + data::cot_prefix(question, steps);
}

/// As render_context, with the correction prompt placed before the closing
/// next-step question.
inline std::string render_correction_context(const std::vector<std::string>& exemplars, const std::string& question,
                                             const std::vector<std::string>& steps, const std::string& prompt) {
  std::string out = render_context(exemplars, question, steps);
  out.resize(out.size() - data::kNextStepQuestion.size());
  return out + "\n\n" + prompt + std::string(data::kNextStepQuestion);
}

inline std::string render_context(const ReasoningChain& chain) {
  return render_context(chain.exemplars, chain.question, chain.step_texts());
}

inline GenerationParams generation_params(const DecodeParams& p, std::uint64_t seed) {
  GenerationParams g;
  g.max_new_tokens = p.max_new_tokens;
  g.step_delimiter = p.step_delimiter;
  g.seed = seed;
  return g;
}

inline std::string trim_step(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

/// Appends one chosen candidate and updates termination.
inline void append_step(ReasoningChain& chain, ChainStep step, std::size_t max_steps) {
  step.text = trim_step(step.chosen.candidate.text);
  std::optional<std::string> answer;
  try {
    answer = extract_boxed_answer(step.text);
  } catch (const FormatError&) {
    answer.reset();
  }
  chain.steps.push_back(std::move(step));
  if (answer) {
    chain.finished = true;
    chain.final_answer = answer;
    chain.termination = Termination::kAnswer;
  } else if (chain.steps.size() >= max_steps) {
    chain.finished = true;
    chain.termination = Termination::kStepLimit;
  }
}

inline void fail_chain(ReasoningChain& chain, const std::string& why) {
  chain.finished = true;
  chain.termination = Termination::kNoCandidates;
  chain.failure = why;
}

inline std::vector<ScoredCandidate> score_all(const CandidateSet& set, const predictor::ConfidencePredictor& p,
                                              double lambda) {
  std::vector<ScoredCandidate> out;
  for (const auto& c : set.candidates) out.push_back(score_candidate(c, p, lambda));
  return out;
}

struct CorrectionOutcome {
  bool fired = false;
  bool failed = false;
  /// Original candidates followed by regenerated ones.
  std::vector<ScoredCandidate> pool;
  std::size_t chosen = 0;
  bool chosen_regenerated = false;
};

/// One regeneration pass under the correction prompt when every candidate
/// scores below the threshold; the best of both sets wins.
inline CorrectionOutcome self_correct(const CognitiveModel& model, const predictor::ConfidencePredictor& p,
                                      const ReasoningChain& chain, std::vector<ScoredCandidate> scored,
                                      const DecodeParams& params) {
  if (!params.correction_threshold) throw ConfigError("self-correction needs a correction threshold");
  CorrectionOutcome out;
  out.pool = std::move(scored);
  out.chosen = best_index(out.pool);
  if (out.pool[out.chosen].score >= *params.correction_threshold) return out;
  out.fired = true;
  const std::size_t n_original = out.pool.size();
  try {
    const std::string ctx =
        render_correction_context(chain.exemplars, chain.question, chain.step_texts(), params.correction_prompt);
    const auto tokens = model.tokenizer().encode(ctx);
    const auto set = generate_candidates(model, tokens, params.m,
                                         generation_params(params, mix_seed(params.seed, chain.steps.size(), 0xC0u)));
    for (auto& s : score_all(set, p, params.lambda)) out.pool.push_back(std::move(s));
  } catch (const Error&) {
    out.failed = true;
    return out;
  }
  out.chosen = best_index(out.pool);
  out.chosen_regenerated = out.chosen >= n_original;
  return out;
}

/// One confidence-guided step: M candidates, scored, argmax appended.
inline void guided_step(const CognitiveModel& model, const predictor::ConfidencePredictor& p, ReasoningChain& chain,
                        const DecodeParams& params) {
  if (chain.finished) throw RuntimeError("chain is already finished");
  const auto tokens = model.tokenizer().encode(render_context(chain));
  CandidateSet set;
  try {
    set = generate_candidates(model, tokens, params.m, generation_params(params, mix_seed(params.seed, chain.steps.size())));
  } catch (const EmptyCandidatesError& e) {
    fail_chain(chain, e.what());
    return;
  }
  auto scored = score_all(set, p, params.lambda);
  ChainStep step;
  step.n_candidates = scored.size();
  if (params.correction_threshold) {
    auto outcome = self_correct(model, p, chain, std::move(scored), params);
    step.correction_fired = outcome.fired;
    step.correction_failed = outcome.failed;
    step.corrected = outcome.chosen_regenerated;
    step.chosen = std::move(outcome.pool[outcome.chosen]);
  } else {
    step.chosen = std::move(scored[best_index(scored)]);
  }
  append_step(chain, std::move(step), params.max_steps);
}

struct Diagnostics {
  Strategy strategy = Strategy::kGuided;
  std::size_t corrections_fired = 0;
  std::size_t corrections_failed = 0;
  std::vector<std::string> path_answers;  // self-consistency only
  double wall_time = 0.0;  // seconds, when timing is recorded
};

struct DecodeResult {
  std::string answer;  // empty when no answer was produced
  ReasoningChain chain;
  Diagnostics diagnostics;
};

namespace detail {

using Chooser = std::function<ChainStep(const CandidateSet&, const ReasoningChain&)>;

// Stepwise loop shared by the non-guided strategies.
inline ReasoningChain run_chain(const CognitiveModel& model, ReasoningChain chain, const DecodeParams& params,
                                std::size_t m, bool sample, double temperature, std::uint64_t seed,
                                const Chooser& choose) {
  while (!chain.finished) {
    const auto tokens = model.tokenizer().encode(render_context(chain));
    GenerationParams g = generation_params(params, mix_seed(seed, chain.steps.size()));
    g.do_sample = sample;
    g.temperature = temperature;
    CandidateSet set;
    try {
      set = generate_candidates(model, tokens, m, g);
    } catch (const EmptyCandidatesError& e) {
      fail_chain(chain, e.what());
      break;
    }
    append_step(chain, choose(set, chain), params.max_steps);
  }
  return chain;
}

inline ChainStep take(ScoredCandidate s, std::size_t n) {
  ChainStep step;
  step.chosen = std::move(s);
  step.n_candidates = n;
  return step;
}

}  // namespace detail

inline DecodeResult decode(const CognitiveModel& model, const predictor::ConfidencePredictor* p,
                           const std::string& question, const std::vector<std::string>& exemplars,
                           const DecodeParams& params) {
  params.validate();
  const auto started = std::chrono::steady_clock::now();
  DecodeResult out;
  out.diagnostics.strategy = params.strategy;
  ReasoningChain chain;
  chain.question = question;
  chain.exemplars = exemplars;

  // β where a predictor is available, 0 otherwise (reported only).
  auto beta_of = [&](const StepCandidate& c) { return p ? predictor::predict_confidence(*p, c.activations) : 0.0; };

  switch (params.strategy) {
    case Strategy::kGuided: {
      if (!p) throw ConfigError("guided decoding needs a confidence predictor");
      while (!chain.finished) guided_step(model, *p, chain, params);
      out.chain = std::move(chain);
      break;
    }
    case Strategy::kGreedyFewshot: {
      out.chain = detail::run_chain(model, std::move(chain), params, 1, false, 1.0, params.seed,
                                    [&](const CandidateSet& set, const ReasoningChain&) {
                                      const auto& c = set.candidates.front();
                                      return detail::take(score_with_beta(c, beta_of(c), params.lambda), 1);
                                    });
      break;
    }
    case Strategy::kRandomSelect: {
      const std::uint64_t qhash = fnv1a(question);
      out.chain = detail::run_chain(
          model, std::move(chain), params, params.m, false, 1.0, params.seed,
          [&](const CandidateSet& set, const ReasoningChain& ch) {
            std::mt19937_64 rng(mix_seed(params.seed, qhash, ch.steps.size(), 0x4A4Du));
            std::uniform_int_distribution<std::size_t> pick(0, set.candidates.size() - 1);
            const auto& c = set.candidates[pick(rng)];
            return detail::take(score_with_beta(c, beta_of(c), params.lambda), set.candidates.size());
          });
      break;
    }
    case Strategy::kSelfEval: {
      while (!chain.finished) {
        const auto tokens = model.tokenizer().encode(render_context(chain));
        std::vector<StepCandidate> pool;
        try {
          for (std::size_t t = 0; t < params.temperature_schedule.size() && pool.size() < params.m; ++t) {
            GenerationParams g = generation_params(params, mix_seed(params.seed, chain.steps.size(), t));
            g.do_sample = true;
            g.temperature = params.temperature_schedule[t];
            for (auto& c : generate_candidates(model, tokens, params.m, g).candidates) {
              const bool dup = std::any_of(pool.begin(), pool.end(),
                                           [&](const StepCandidate& q) { return q.text == c.text; });
              if (!dup && pool.size() < params.m) pool.push_back(std::move(c));
            }
          }
        } catch (const EmptyCandidatesError& e) {
          fail_chain(chain, e.what());
          break;
        }
        std::vector<ScoredCandidate> scored;
        const std::string partial = data::cot_prefix(question, chain.step_texts());
        for (auto& c : pool) {
          const double beta = calibration::is_true_probability(model, partial, trim_step(c.text), params.verification);
          scored.push_back(score_with_beta(std::move(c), beta, params.lambda));
        }
        const std::size_t n = scored.size();
        append_step(chain, detail::take(std::move(scored[best_index(scored)]), n), params.max_steps);
      }
      out.chain = std::move(chain);
      break;
    }
    case Strategy::kSelfConsistency: {
      std::vector<ReasoningChain> paths;
      for (std::size_t k = 0; k < params.sc_paths; ++k) {
        paths.push_back(detail::run_chain(model, chain, params, 1, true, params.sc_temperature,
                                          mix_seed(params.seed, k, 0x5C5Cu),
                                          [&](const CandidateSet& set, const ReasoningChain&) {
                                            const auto& c = set.candidates.front();
                                            return detail::take(score_with_beta(c, beta_of(c), params.lambda), 1);
                                          }));
        out.diagnostics.path_answers.push_back(paths.back().final_answer.value_or(""));
      }
      const std::string voted = majority_vote(out.diagnostics.path_answers);
      std::size_t pick = 0;
      for (std::size_t k = 0; k < paths.size(); ++k) {
        if (!voted.empty() && out.diagnostics.path_answers[k] == voted) {
          pick = k;
          break;
        }
      }
      out.chain = std::move(paths[pick]);
      out.answer = voted;
      break;
    }
  }
  if (params.strategy != Strategy::kSelfConsistency) out.answer = out.chain.final_answer.value_or("");
  for (const auto& s : out.chain.steps) {
    out.diagnostics.corrections_fired += s.correction_fired ? 1 : 0;
    out.diagnostics.corrections_failed += s.correction_failed ? 1 : 0;
  }
  if (params.record_timing) {
    out.diagnostics.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  return out;
}

inline nlohmann::json params_json(const DecodeParams& p) {
  nlohmann::json j{{"strategy", to_string(p.strategy)},
                   {"m", p.m},
                   {"lambda", p.lambda},
                   {"max_steps", p.max_steps},
                   {"max_new_tokens", p.max_new_tokens},
                   {"correction_threshold", nullptr},
                   {"sc_paths", p.sc_paths},
                   {"sc_temperature", p.sc_temperature},
                   {"temperature_schedule", p.temperature_schedule},
                   {"seed", p.seed}};
  if (p.correction_threshold) j["correction_threshold"] = *p.correction_threshold;
  return j;
}

/// Per-question run manifest.
inline nlohmann::json manifest_json(const DecodeResult& r, const DecodeParams& p) {
  nlohmann::json chain = nlohmann::json::array();
  for (const auto& s : r.chain.steps) {
    chain.push_back({{"text", s.text},
                     {"beta", s.chosen.beta},
                     {"pbar", s.chosen.pbar},
                     {"score", s.chosen.score},
                     {"candidates", s.n_candidates},
                     {"correction_fired", s.correction_fired},
                     {"corrected", s.corrected}});
  }
  nlohmann::json j{{"strategy", to_string(p.strategy)},
                   {"params", params_json(p)},
                   {"chain", chain},
                   {"answer", r.answer},
                   {"termination", to_string(r.chain.termination)}};
  if (!r.chain.failure.empty()) j["failure"] = r.chain.failure;
  if (p.strategy == Strategy::kSelfConsistency) j["path_answers"] = r.diagnostics.path_answers;
  return j;
}

struct TaskOutcome {
  std::string question_id;
  Strategy strategy = Strategy::kGuided;
  bool correct = false;
  std::size_t steps = 0;
  DecodeResult result;
};

struct BenchmarkResult {
  Strategy strategy = Strategy::kGuided;
  std::vector<TaskOutcome> tasks;
  double accuracy = 0.0;
};

/// Decodes every task (in parallel across tasks); an empty answer counts as
/// incorrect.
inline BenchmarkResult evaluate(const CognitiveModel& model, const predictor::ConfidencePredictor* p,
                                const std::vector<data::ReasoningTask>& tasks,
                                const std::vector<std::string>& exemplars, const DecodeParams& params) {
  params.validate();
  if (tasks.empty()) throw ValidationError("benchmark has no tasks");
  BenchmarkResult out;
  out.strategy = params.strategy;
  out.tasks.resize(tasks.size());
  parallel_for(tasks.size(), params.threads, [&](std::size_t i) {
    DecodeParams local = params;
    local.seed = mix_seed(params.seed, fnv1a(tasks[i].id));
    auto& t = out.tasks[i];
    t.question_id = tasks[i].id;
    t.strategy = params.strategy;
    t.result = decode(model, p, tasks[i].question, exemplars, local);
    t.correct = !t.result.answer.empty() && t.result.answer == tasks[i].answer;
    t.steps = t.result.chain.steps.size();
  });
  std::size_t correct = 0;
  for (const auto& t : out.tasks) correct += t.correct ? 1 : 0;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(tasks.size());
  return out;
}

/// Rows: question_id,strategy,correct,steps,wall_time (wall_time blank
/// unless timing was recorded).
inline std::string results_csv(const std::vector<BenchmarkResult>& runs, bool with_timing) {
  std::string out = "question_id,strategy,correct,steps,wall_time\n";
  for (const auto& run : runs) {
    for (const auto& t : run.tasks) {
      out += t.question_id + "," + to_string(t.strategy) + "," + (t.correct ? "1" : "0") + "," +
             std::to_string(t.steps) + "," + (with_timing ? fixed(t.result.diagnostics.wall_time) : "") + "\n";
    }
  }
  return out;
}

}  // namespace veritas::decoding
