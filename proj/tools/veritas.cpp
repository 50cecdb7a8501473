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

// veritas command-line tool.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "veritas/plot.hpp"
#include "veritas/veritas.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace veritas;

namespace {

/// View over one JSON object that records every key read (with its effective
/// value) and rejects keys nobody read.
class Section {
 public:
  Section(const json* j, std::string path, json* resolved) : j_(j), path_(std::move(path)), resolved_(resolved) {
    if (j_ && !j_->is_object()) throw ConfigError(label() + " must be an object");
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key) && !(*j_)[key].is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    T v = fallback;
    if (has(key)) v = convert<T>(key);
    (*resolved_)[key] = v;
    return v;
  }

  template <typename T>
  T need(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) throw ValidationError("missing required config key " + name(key));
    T v = convert<T>(key);
    (*resolved_)[key] = v;
    return v;
  }

  template <typename T>
  std::optional<T> maybe(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    T v = convert<T>(key);
    (*resolved_)[key] = v;
    return v;
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    if (!resolved_->contains(key)) (*resolved_)[key] = json::object();
    return Section(has(key) ? &(*j_)[key] : nullptr, name(key), &(*resolved_)[key]);
  }

  /// Raw value, echoed as given.
  std::optional<json> raw(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    (*resolved_)[key] = (*j_)[key];
    return (*j_)[key];
  }

  void mark(const std::string& key) { seen_.insert(key); }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, _] : j_->items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key " + name(k));
    }
  }

  std::string name(const std::string& key) const { return path_.empty() ? "\"" + key + "\"" : "\"" + path_ + "." + key + "\""; }

 private:
  std::string label() const { return path_.empty() ? "config" : "\"" + path_ + "\""; }

  template <typename T>
  T convert(const std::string& key) const {
    try {
      return (*j_)[key].get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + name(key) + " has the wrong type");
    }
  }

  const json* j_;
  std::string path_;
  json* resolved_;
  std::set<std::string> seen_;
};

struct Run {
  json config = json::object();
  json resolved = json::object();
  fs::path base;  // directory that relative config paths resolve against
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool plot = false;

  Section root() {
    Section s(&config, "", &resolved);
    s.mark("seed");
    return s;
  }

  /// Resolves an input path; a missing file is a validation error.
  fs::path input(const std::string& p) const {
    const fs::path path = fs::path(p).is_absolute() ? fs::path(p) : base / p;
    if (!fs::exists(path)) throw ValidationError("input file not found: " + path.string());
    return path;
  }

  void write(const std::string& name, const std::string& text) const {
    const fs::path p = out_dir / name;
    fs::create_directories(p.parent_path());
    write_file(p.string(), text);
  }

  void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }
};

// Models.

std::vector<HeadCoord> parse_coords(const json& j, const std::string& what) {
  std::vector<HeadCoord> out;
  try {
    for (const auto& c : j) {
      if (!c.is_array() || c.size() != 2) throw ConfigError(what + " entries must be [layer, head] pairs");
      out.push_back({c.at(0).get<std::size_t>(), c.at(1).get<std::size_t>()});
    }
  } catch (const json::exception&) {
    throw ConfigError(what + " entries must be [layer, head] pairs of non-negative integers");
  }
  return out;
}

std::unique_ptr<CognitiveModel> make_model(Run& run, Section s) {
  const auto kind = s.get<std::string>("kind", "planted");
  std::unique_ptr<CognitiveModel> model;
  if (kind == "planted") {
    PlantedConfig cfg;
    cfg.dims = ModelDims::make(s.get<std::size_t>("n_layers", 4), s.get<std::size_t>("n_heads", 4),
                               s.get<std::size_t>("d_head", 8), 257);
    cfg.dims.validate();
    cfg.seed = s.get<std::uint64_t>("seed", run.seed);
    cfg.strength = s.get<double>("strength", 1.0);
    cfg.fidelity = s.get<double>("fidelity", 1.0);
    if (auto planted = s.raw("planted")) {
      cfg.planted = parse_coords(*planted, "model.planted");
      s.maybe<std::size_t>("n_planted");
    } else {
      const std::size_t total = cfg.dims.heads_total();
      const auto n = s.get<std::size_t>("n_planted", std::max<std::size_t>(1, total / 5));
      if (n < 1 || n > total) throw ConfigError("model.n_planted must lie in [1, " + std::to_string(total) + "]");
      std::vector<HeadCoord> all;
      for (std::size_t l = 0; l < cfg.dims.n_layers; ++l)
        for (std::size_t h = 0; h < cfg.dims.n_heads; ++h) all.push_back({l, h});
      std::mt19937_64 rng(mix_seed(cfg.seed, 0x91A7u));
      for (std::size_t i = all.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(all[i - 1], all[pick(rng)]);
      }
      cfg.planted.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
      std::sort(cfg.planted.begin(), cfg.planted.end());
      json coords = json::array();
      for (auto c : cfg.planted) coords.push_back({c.layer, c.head});
      run.resolved["model"]["planted_heads"] = coords;
    }
    model = std::make_unique<PlantedSignalModel>(std::move(cfg));
  } else if (kind == "tiny") {
    TinyTransformerConfig cfg;
    cfg.dims = ModelDims::make(s.get<std::size_t>("n_layers", 2), s.get<std::size_t>("n_heads", 2),
                               s.get<std::size_t>("d_head", 4), s.get<std::size_t>("vocab_size", 257));
    cfg.max_positions = s.get<std::size_t>("max_positions", 1024);
    cfg.d_mlp = s.get<std::size_t>("d_mlp", 0);
    cfg.seed = s.get<std::uint64_t>("seed", run.seed);
    model = std::make_unique<TinyTransformer>(cfg);
  } else if (kind == "replay") {
    const auto trace = s.need<std::string>("trace");
    const auto replay = s.get<std::string>("replay", "");
    model = std::make_unique<ReplayModel>(
        replay_model(run.input(trace).string(), replay.empty() ? "" : run.input(replay).string()));
  } else {
    throw ConfigError("model.kind must be planted, tiny or replay, got \"" + kind + "\"");
  }
  s.finish();
  return model;
}

data::SplitRatios read_split(Section s) {
  data::SplitRatios r;
  r.train = s.get<double>("train", 0.6);
  r.validation = s.get<double>("validation", 0.2);
  r.test = s.get<double>("test", 0.2);
  s.finish();
  return r;
}

data::DatasetSplit load_split(Run& run, Section& root) {
  const auto path = root.need<std::string>("dataset");
  data::LoadOptions opts;
  opts.balanced = root.get<bool>("balanced", true);
  const auto ratios = read_split(root.sub("split"));
  return data::load_and_split(run.input(path).string(), ratios, run.seed, opts);
}

const std::vector<data::LabeledRecord>& split_part(const data::DatasetSplit& s, const std::string& part) {
  if (part == "train") return s.train;
  if (part == "validation") return s.validation;
  if (part == "test") return s.test;
  throw ConfigError("split part must be train, validation or test, got \"" + part + "\"");
}

probing::ProbeGrid load_probes(const fs::path& p) {
  try {
    return probing::grid_from_json(json::parse(read_file(p.string())));
  } catch (const json::parse_error& e) {
    throw ValidationError("probe bundle " + p.string() + " is not valid JSON: " + e.what());
  }
}

json parse_json_file(const fs::path& p, const std::string& what) {
  try {
    return json::parse(read_file(p.string()));
  } catch (const json::parse_error& e) {
    throw ValidationError(what + " " + p.string() + " is not valid JSON: " + e.what());
  }
}

std::string ratio_csv(const probing::HeadMatrix& m) { return probing::heatmap_csv(m); }

// Subcommands.

void cmd_probe(Run& run) {
  auto root = run.root();
  auto model = make_model(run, root.sub("model"));
  const auto split = load_split(run, root);
  auto ps = root.sub("probe");
  probing::ProbeHyper hyper;
  hyper.l2 = ps.get<double>("l2", hyper.l2);
  hyper.learning_rate = ps.get<double>("learning_rate", hyper.learning_rate);
  hyper.max_iterations = ps.get<std::size_t>("max_iterations", hyper.max_iterations);
  hyper.tolerance = ps.get<double>("tolerance", hyper.tolerance);
  hyper.threads = run.threads;
  ps.finish();
  const bool export_trace = root.get<bool>("export_trace", false);
  root.finish();
  if (!(hyper.learning_rate > 0.0)) throw ValidationError("probe.learning_rate must be > 0");
  if (!(hyper.l2 >= 0.0)) throw ValidationError("probe.l2 must be >= 0");

  const auto train = probing::collect_activations(*model, split.train, run.threads);
  const auto val = probing::collect_activations(*model, split.validation, run.threads);
  const auto grid = probing::fit_probe_grid(train, val, hyper);
  const auto acc = grid.accuracies();
  run.write("heatmap.csv", ratio_csv(acc));
  run.write_json("probes.json", probing::to_json(grid));
  run.write_json("split.json", data::split_manifest(split));
  if (export_trace) {
    write_trace((run.out_dir / "train.vtrc").string(), probing::to_trace(*model, split.train, train));
  }
  if (run.plot) run.write("heatmap.svg", plot::heatmap_svg(acc, 0.5, 1.0, "probe validation accuracy"));
  const auto top = probing::select_top_k(grid, 1).coords.front();
  std::cout << "probed " << grid.probes.size() << " heads on " << train.size() << " train / " << val.size()
            << " validation examples; best head " << to_string(top) << " at "
            << fixed(grid.probe(top).val_accuracy, 4) << "\n";
}

void cmd_select_heads(Run& run) {
  auto root = run.root();
  const auto grid = load_probes(run.input(root.need<std::string>("probes")));
  const auto k = root.get<std::size_t>("k", grid.n_heads);
  root.finish();
  const auto sel = probing::select_top_k(grid, k);
  json acc = json::array();
  for (const auto& c : sel.coords) acc.push_back(grid.probe(c).val_accuracy);
  run.write_json("selection.json", {{"heads", probing::to_json(sel)}, {"val_accuracy", acc}});
  std::cout << "selected " << sel.size() << " heads\n";
}

probing::HeadSelection read_selection(Run& run, Section& root, const probing::ProbeGrid& grid) {
  if (const auto path = root.maybe<std::string>("selection")) {
    const auto j = parse_json_file(run.input(*path), "selection");
    if (!j.contains("heads")) throw ValidationError("selection file has no \"heads\"");
    root.maybe<std::size_t>("k");
    return probing::selection_from_json(j["heads"]);
  }
  return probing::select_top_k(grid, root.get<std::size_t>("k", grid.n_heads));
}

predictor::RegressionHyper read_regression(Section s, std::size_t threads) {
  predictor::RegressionHyper h;
  h.learning_rate = s.get<double>("learning_rate", h.learning_rate);
  h.max_iterations = s.get<std::size_t>("max_iterations", h.max_iterations);
  h.min_improvement = s.get<double>("min_improvement", h.min_improvement);
  h.threads = threads;
  s.finish();
  if (!(h.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  return h;
}

void cmd_train_predictor(Run& run) {
  auto root = run.root();
  auto model = make_model(run, root.sub("model"));
  const auto split = load_split(run, root);
  const auto grid = load_probes(run.input(root.need<std::string>("probes")));
  const auto selection = read_selection(run, root, grid);
  const auto loss = root.get<std::string>("loss", "ece");
  const auto n_folds = root.get<std::size_t>("n_folds", 5);
  const auto n_bins = root.get<std::size_t>("n_bins", 10);
  const auto hyper = read_regression(root.sub("optimizer"), run.threads);
  root.finish();
  if (loss != "mse" && loss != "ece") throw ValidationError("loss must be mse or ece, got \"" + loss + "\"");
  if (n_bins < 1) throw ValidationError("n_bins must be >= 1");

  const auto stats = predictor::stats_from_grid(grid, selection);
  const auto train = predictor::build_features(probing::collect_activations(*model, split.train, run.threads),
                                               selection, stats);
  predictor::ConfidencePredictor p;
  if (loss == "mse") {
    p = predictor::train_mse(train, hyper);
  } else {
    const auto table = predictor::compute_soft_targets(train, n_folds, n_bins, hyper, run.seed);
    std::string csv = "index,fold,confidence,target\n";
    for (std::size_t i = 0; i < table.targets.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(table.fold[i]) + "," + fixed(table.confidences[i]) + "," +
             fixed(table.targets[i]) + "\n";
    }
    run.write("soft_targets.csv", csv);
    p = predictor::train_ece(train, table, hyper);
  }
  run.write_json("predictor.json", predictor::to_json(p));
  std::string hist = "iteration,loss\n";
  for (std::size_t i = 0; i < p.info.loss_history.size(); ++i) {
    hist += std::to_string(i) + "," + fixed(p.info.loss_history[i], 9) + "\n";
  }
  run.write("loss_history.csv", hist);

  if (!split.test.empty()) {
    const auto test = predictor::build_features(probing::collect_activations(*model, split.test, run.threads),
                                                selection, stats);
    const calibration::PredictionSet preds{predictor::predict_all(p, test), test.labels};
    const auto rep = calibration::report(preds, n_bins);
    run.write_json("heldout.json", calibration::to_json(rep));
    std::cout << "loss=" << loss << " held-out ECE " << fixed(rep.ece, 4) << " Brier " << fixed(rep.brier, 4)
              << " AUC " << fixed(rep.auc, 4) << "\n";
  } else {
    std::cout << "loss=" << loss << " trained in " << p.info.iterations << " iterations\n";
  }
}

calibration::PredictionSet read_predictions_csv(const fs::path& path) {
  const std::string text = read_file(path.string());
  calibration::PredictionSet preds;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("confidence", 0) == 0)) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      std::size_t used = 0;
      preds.confidences.push_back(std::stod(line.substr(0, comma), &used));
      preds.labels.push_back(std::stoi(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected \"confidence,label\"");
    }
  }
  return preds;
}

void cmd_eval_calibration(Run& run) {
  auto root = run.root();
  const auto n_bins = root.get<std::size_t>("n_bins", 10);
  calibration::PredictionSet preds;
  std::string scorer = "file";
  if (const auto path = root.maybe<std::string>("predictions")) {
    preds = read_predictions_csv(run.input(*path));
  } else {
    auto model = make_model(run, root.sub("model"));
    const auto split = load_split(run, root);
    const auto part = root.get<std::string>("part", "test");
    scorer = root.get<std::string>("scorer", "predictor");
    const auto& records = split_part(split, part);
    if (records.empty()) throw ValidationError("split part \"" + part + "\" is empty");
    if (scorer == "predictor") {
      const auto p = predictor::predictor_from_json(
          parse_json_file(run.input(root.need<std::string>("predictor")), "predictor bundle"));
      const auto acts = probing::collect_activations(*model, records, run.threads);
      for (std::size_t i = 0; i < acts.size(); ++i) {
        preds.confidences.push_back(predictor::predict_confidence(p, acts.tensors[i]));
        preds.labels.push_back(acts.labels[i]);
      }
    } else if (scorer == "sequence_likelihood" || scorer == "is_true") {
      calibration::VerificationTemplate tmpl;
      tmpl.text = root.get<std::string>("verification_template", tmpl.text);
      tmpl.target = root.get<std::string>("verification_target", tmpl.target);
      preds.confidences.resize(records.size());
      preds.labels.resize(records.size());
      parallel_for(records.size(), run.threads, [&](std::size_t i) {
        const auto& r = records[i];
        std::string question, answer;
        if (const auto* a = std::get_if<data::LabeledAnswer>(&r)) {
          question = a->question;
          answer = a->answer;
        } else {
          const auto& s = std::get<data::LabeledStep>(r);
          question = data::cot_prefix(s.question, s.previous_steps);
          answer = s.step;
        }
        if (scorer == "is_true") {
          preds.confidences[i] = calibration::is_true_probability(*model, question, answer, tmpl);
        } else if (std::holds_alternative<data::LabeledAnswer>(r)) {
          preds.confidences[i] = calibration::sequence_likelihood(*model, question, answer).value;
        } else {
          const auto& tok = model->tokenizer();
          preds.confidences[i] =
              calibration::sequence_likelihood_tokens(*model, tok.encode(question), tok.encode(answer)).value;
        }
        preds.labels[i] = data::record_label(r);
      });
    } else {
      throw ValidationError("scorer must be predictor, sequence_likelihood or is_true, got \"" + scorer + "\"");
    }
  }
  root.finish();
  if (n_bins < 1) throw ValidationError("n_bins must be >= 1");
  const auto rep = calibration::report(preds, n_bins);
  run.write_json("report.json", calibration::to_json(rep));
  run.write("reliability.csv", calibration::reliability_csv(rep.bins));
  run.write("metrics.csv", "metric,value,better\nece," + fixed(rep.ece) + ",lower\nbrier," + fixed(rep.brier) +
                               ",lower\nauc," + fixed(rep.auc) + ",higher\n");
  if (run.plot) run.write("reliability.svg", plot::reliability_svg(rep.bins, "reliability (" + scorer + ")"));
  std::cout << "scorer   ECE(lower)  Brier(lower)  AUC(higher)\n"
            << scorer << "   " << fixed(rep.ece, 4) << "      " << fixed(rep.brier, 4) << "        "
            << fixed(rep.auc, 4) << "\n";
}

decoding::DecodeParams read_decode_params(Section s, const Run& run) {
  decoding::DecodeParams p;
  p.m = s.get<std::size_t>("m", p.m);
  p.lambda = s.get<double>("lambda", p.lambda);
  const bool multimodal = s.get<bool>("multimodal", false);
  p.max_steps = s.get<std::size_t>("max_steps", multimodal ? decoding::kMultimodalMaxSteps : p.max_steps);
  p.max_new_tokens = s.get<std::size_t>("max_new_tokens", p.max_new_tokens);
  const bool correction = s.get<bool>("self_correction", false);
  if (correction) p.correction_threshold = s.get<double>("correction_threshold", decoding::kDefaultCorrectionThreshold);
  else s.maybe<double>("correction_threshold");
  p.correction_prompt = s.get<std::string>("correction_prompt", p.correction_prompt);
  p.sc_paths = s.get<std::size_t>("sc_paths", p.sc_paths);
  p.sc_temperature = s.get<double>("sc_temperature", p.sc_temperature);
  p.temperature_schedule = s.get<std::vector<double>>("temperature_schedule", p.temperature_schedule);
  p.step_delimiter = s.get<std::string>("step_delimiter", p.step_delimiter);
  p.verification.text = s.get<std::string>("verification_template", p.verification.text);
  p.verification.target = s.get<std::string>("verification_target", p.verification.target);
  p.record_timing = s.get<bool>("record_timing", false);
  s.finish();
  p.seed = run.seed;
  p.threads = run.threads;
  p.validate();
  return p;
}

void cmd_decode(Run& run) {
  auto root = run.root();
  auto model = make_model(run, root.sub("model"));
  ArithmeticWorld world;
  std::vector<data::ReasoningTask> tasks;
  if (const auto path = root.maybe<std::string>("tasks")) {
    tasks = data::parse_tasks(read_file(run.input(*path).string()), run.input(*path).string());
    root.maybe<std::size_t>("n_tasks");
  } else {
    tasks = data::synthetic_tasks(world, root.get<std::size_t>("n_tasks", 50), mix_seed(run.seed, 0x7A5Cu));
  }
  std::vector<std::string> exemplars;
  if (const auto path = root.maybe<std::string>("exemplars")) {
    const auto j = parse_json_file(run.input(*path), "exemplars");
    try {
      exemplars = j.get<std::vector<std::string>>();
    } catch (const json::exception&) {
      throw ValidationError("exemplars file must hold a JSON array of strings");
    }
    root.maybe<std::size_t>("n_exemplars");
  } else {
    exemplars = data::synthetic_exemplars(world, root.get<std::size_t>("n_exemplars", 2), mix_seed(run.seed, 0xE8u));
  }
  const auto names = root.get<std::vector<std::string>>(
      "strategies", {"guided", "greedy_fewshot", "self_consistency", "random_select"});
  std::optional<predictor::ConfidencePredictor> pred;
  if (const auto path = root.maybe<std::string>("predictor")) {
    pred = predictor::predictor_from_json(parse_json_file(run.input(*path), "predictor bundle"));
  }
  const auto base = read_decode_params(root.sub("params"), run);
  root.finish();
  if (names.empty()) throw ValidationError("strategies must not be empty");

  std::vector<decoding::BenchmarkResult> runs;
  for (const auto& name : names) {
    auto params = base;
    params.strategy = decoding::parse_strategy(name);
    if (params.strategy == decoding::Strategy::kGuided && !pred) {
      throw ValidationError("strategy guided needs a \"predictor\" bundle");
    }
    runs.push_back(decoding::evaluate(*model, pred ? &*pred : nullptr, tasks, exemplars, params));
    std::string lines;
    for (const auto& t : runs.back().tasks) {
      auto m = decoding::manifest_json(t.result, params);
      m["question_id"] = t.question_id;
      m["correct"] = t.correct;
      lines += m.dump() + "\n";
    }
    run.write("manifests/" + decoding::to_string(params.strategy) + ".jsonl", lines);
  }
  run.write("results.csv", decoding::results_csv(runs, base.record_timing));

  std::optional<double> greedy;
  for (const auto& r : runs)
    if (r.strategy == decoding::Strategy::kGreedyFewshot) greedy = r.accuracy;
  std::string summary = "strategy,accuracy,delta_vs_greedy\n";
  json sj = json::array();
  std::cout << "strategy            accuracy  delta\n";
  for (const auto& r : runs) {
    const std::string delta = greedy ? fixed(r.accuracy - *greedy, 4) : "";
    summary += decoding::to_string(r.strategy) + "," + fixed(r.accuracy, 4) + "," + delta + "\n";
    json e{{"strategy", decoding::to_string(r.strategy)}, {"accuracy", r.accuracy}, {"n_tasks", r.tasks.size()}};
    if (greedy) e["delta_vs_greedy"] = r.accuracy - *greedy;
    sj.push_back(e);
    std::string label = decoding::to_string(r.strategy);
    label.resize(20, ' ');
    std::cout << label << fixed(100.0 * r.accuracy, 1) << "      "
              << (greedy ? (r.accuracy >= *greedy ? "+" : "") + fixed(100.0 * (r.accuracy - *greedy), 1) : "")
              << "\n";
  }
  run.write("summary.csv", summary);
  run.write_json("summary.json", sj);
}

void cmd_heatmap(Run& run) {
  auto root = run.root();
  const auto grid = load_probes(run.input(root.need<std::string>("probes")));
  root.finish();
  const auto acc = grid.accuracies();
  run.write("heatmap.csv", ratio_csv(acc));
  if (run.plot) run.write("heatmap.svg", plot::heatmap_svg(acc, 0.5, 1.0, "probe validation accuracy"));
  std::cout << "wrote " << grid.n_layers << "x" << grid.n_heads << " heatmap\n";
}

void cmd_answer_diff(Run& run) {
  auto root = run.root();
  auto model = make_model(run, root.sub("model"));
  const auto grid = load_probes(run.input(root.need<std::string>("probes")));
  const auto question = root.need<std::string>("question");
  const auto a = root.need<std::string>("answer_a");
  const auto b = root.need<std::string>("answer_b");
  const auto cot = root.get<bool>("chain_of_thought", false);
  root.finish();
  const auto diff = probing::answer_diff_map(grid, *model, question, a, b, cot);
  run.write("answer_diff.csv", probing::heatmap_csv(diff));
  if (run.plot) run.write("answer_diff.svg", plot::heatmap_svg(diff, -1.0, 1.0, "P(a) - P(b) per head"));
  double best = 0.0;
  for (double v : diff.values) best = std::max(best, std::abs(v));
  std::cout << "largest absolute difference " << fixed(best, 4) << "\n";
}

void cmd_dataset_validate(Run& run) {
  auto root = run.root();
  const auto path = root.need<std::string>("dataset");
  data::LoadOptions opts;
  opts.balanced = root.get<bool>("balanced", true);
  root.finish();
  const auto records = data::load_jsonl(run.input(path).string(), opts);
  const auto counts = data::count_labels(records);
  std::size_t steps = 0;
  for (const auto& r : records) steps += std::holds_alternative<data::LabeledStep>(r) ? 1 : 0;
  run.write_json("validation.json", {{"records", records.size()},
                                     {"positive", counts.positive},
                                     {"negative", counts.negative},
                                     {"answer_records", records.size() - steps},
                                     {"step_records", steps}});
  std::cout << "valid: " << records.size() << " records (" << counts.positive << " positive, " << counts.negative
            << " negative)\n";
}

void cmd_synth_data(Run& run) {
  auto root = run.root();
  const auto kind = root.get<std::string>("kind", "steps");
  const auto n = root.get<std::size_t>("n", 200);
  const auto n_exemplars = root.get<std::size_t>("n_exemplars", 2);
  root.finish();
  ArithmeticWorld world;
  if (kind == "answers") {
    run.write("dataset.jsonl", data::to_jsonl(data::synthetic_answers(world, n, run.seed)));
  } else if (kind == "steps") {
    run.write("dataset.jsonl", data::to_jsonl(data::synthetic_steps(world, n, run.seed)));
  } else if (kind == "tasks") {
    run.write("tasks.jsonl", data::tasks_to_jsonl(data::synthetic_tasks(world, n, run.seed)));
    run.write_json("exemplars.json", data::synthetic_exemplars(world, n_exemplars, mix_seed(run.seed, 0xE8u)));
  } else {
    throw ValidationError("kind must be answers, steps or tasks, got \"" + kind + "\"");
  }
  std::cout << "wrote " << n << " " << kind << "\n";
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
    case ErrorKind::kValidation:
    case ErrorKind::kFormat:
      return 2;
    default:
      return 1;
  }
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truth-sensitive head probing, confidence calibration and guided step decoding."};
  app.require_subcommand(1);
  std::string config_path, out_dir = "veritas-out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool plot = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed; overrides the config's \"seed\"");
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads (VERITAS_THREADS overrides)")->check(CLI::PositiveNumber);
  app.add_flag("--plot", plot, "Also write SVG plots");

  using Handler = void (*)(Run&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"probe", "Fit per-head probes and write the accuracy heatmap", cmd_probe},
      {"select-heads", "Pick the top-K heads from a probe bundle", cmd_select_heads},
      {"train-predictor", "Train the confidence predictor (mse or ece loss)", cmd_train_predictor},
      {"eval-calibration", "ECE, Brier, AUC and reliability curve", cmd_eval_calibration},
      {"decode", "Run decoding strategies over a task set", cmd_decode},
      {"heatmap", "Render a probe bundle as a heatmap", cmd_heatmap},
      {"answer-diff", "Per-head probe difference between two answers", cmd_answer_diff},
      {"dataset-validate", "Check a labeled JSONL dataset", cmd_dataset_validate},
      {"synth-data", "Write synthetic labeled data or tasks", cmd_synth_data},
  };
  for (const auto& [name, help, _] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  try {
    Run run;
    run.plot = plot;
    run.threads = resolve_threads(threads);
    run.out_dir = out_dir;
    run.base = fs::current_path();
    if (!config_path.empty()) {
      run.base = fs::absolute(config_path).parent_path();
      try {
        run.config = json::parse(read_file(config_path));
      } catch (const json::parse_error& e) {
        throw ConfigError("config " + config_path + " is not valid JSON: " + e.what());
      }
      if (!run.config.is_object()) throw ConfigError("config must be a JSON object");
    }
    {
      auto root = run.root();
      run.seed = root.get<std::uint64_t>("seed", 0);
      if (seed_opt->count() > 0) run.seed = seed;
      run.resolved["seed"] = run.seed;
    }
    for (const auto& [name, _, handler] : commands) {
      if (app.got_subcommand(name)) {
        run.resolved["command"] = name;
        fs::create_directories(run.out_dir);
        handler(run);
        run.write_json("config.resolved.json", run.resolved);
      }
    }
    return 0;
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
}
