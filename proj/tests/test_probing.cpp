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

#include <gtest/gtest.h>

#include "support.hpp"

using namespace veritas;
using namespace veritas::probing;

namespace {

struct PlantedData {
  PlantedSignalModel model;
  LabeledActivations train, val;
};

PlantedData planted_data(std::size_t n_train_tasks, std::size_t n_val_tasks, double strength = 1.0) {
  const ArithmeticWorld world;
  PlantedData d{planted_signal_model(ModelDims::make(3, 3, 4, 257), {{1, 1}, {2, 0}}, strength, 21), {}, {}};
  d.train = collect_activations(d.model, data::synthetic_steps(world, n_train_tasks, 1));
  d.val = collect_activations(d.model, data::synthetic_steps(world, n_val_tasks, 2));
  return d;
}

HeadMatrix grid_of(std::size_t l, std::size_t h, std::vector<double> v) {
  HeadMatrix m(l, h);
  m.values = std::move(v);
  return m;
}

}  // namespace

TEST(Collect, CardinalityDeterminismAndErrors) {
  const ArithmeticWorld world;
  const auto model = planted_signal_model(ModelDims::make(2, 2, 3, 257), {{0, 1}}, 1.0, 4);
  auto records = data::synthetic_answers(world, 5, 3);
  records.push_back(records.front());
  const auto acts = collect_activations(model, records, 3);
  ASSERT_EQ(acts.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(acts.labels[i], data::record_label(records[i]));
  EXPECT_EQ(acts.tensors.front().flat(), acts.tensors.back().flat());

  records.push_back(data::LabeledAnswer{"broken", "q", "", 1});
  try {
    collect_activations(model, records);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
  }
}

TEST(Probes, PlantedHeadsSeparateOthersNear50) {
  const auto d = planted_data(300, 150);
  const auto grid = fit_probe_grid(d.train, d.val);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t h = 0; h < 3; ++h) {
      const double acc = grid.probe(l, h).val_accuracy;
      if (d.model.is_planted({l, h})) {
        EXPECT_GE(acc, 0.95);
      } else {
        EXPECT_LT(acc, 0.65);
      }
    }
  const auto top = select_top_k(grid, 2);
  EXPECT_TRUE(d.model.is_planted(top.coords[0]) && d.model.is_planted(top.coords[1]));
}

TEST(Probes, PermutedLabelsStayAtChance) {
  auto d = planted_data(250, 250);
  std::mt19937_64 rng(77);
  std::shuffle(d.train.labels.begin(), d.train.labels.end(), rng);
  std::shuffle(d.val.labels.begin(), d.val.labels.end(), rng);
  const auto grid = fit_probe_grid(d.train, d.val);
  for (const auto& p : grid.probes) {
    EXPECT_GE(p.val_accuracy, 0.43) << to_string(p.coord);
    EXPECT_LE(p.val_accuracy, 0.57) << to_string(p.coord);
  }
}

TEST(Probes, NonConvergenceIsFlaggedNotFatal) {
  const auto d = planted_data(40, 20);
  ProbeHyper hyper;
  hyper.max_iterations = 3;
  const auto grid = fit_probe_grid(d.train, d.val, hyper);
  for (const auto& p : grid.probes) {
    EXPECT_FALSE(p.converged);
    EXPECT_EQ(p.iterations, 3u);
    EXPECT_GE(p.val_accuracy, 0.0);
  }
}

TEST(Probes, InputValidation) {
  auto d = planted_data(10, 10);
  LabeledActivations empty;
  EXPECT_THROW(fit_probe_grid(empty, d.val), ValidationError);
  auto single = d.train;
  std::fill(single.labels.begin(), single.labels.end(), 1);
  EXPECT_THROW(fit_probe_grid(single, d.val), ValidationError);
  auto odd = d.val;
  odd.tensors[0] = HeadActivationTensor(1, 1, 1);
  EXPECT_THROW(fit_probe_grid(d.train, odd), ConfigError);
}

TEST(Probes, IndependentAndOrderFree) {
  auto d = planted_data(60, 30);
  ProbeHyper serial, parallel;
  parallel.threads = 4;
  const auto a = fit_probe_grid(d.train, d.val, serial);
  const auto b = fit_probe_grid(d.train, d.val, parallel);
  for (std::size_t i = 0; i < a.probes.size(); ++i) {
    EXPECT_EQ(a.probes[i].weights, b.probes[i].weights);
    EXPECT_EQ(a.probes[i].bias, b.probes[i].bias);
  }
  // Scrambling every other head leaves probe (1,1) untouched.
  auto scrambled = d.train;
  for (auto& t : scrambled.tensors)
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t h = 0; h < 3; ++h)
        if (!(l == 1 && h == 1))
          for (double& v : t.head(l, h)) v = -3.0 * v + 1.0;
  const auto c = fit_probe(HeadCoord{1, 1}, scrambled, d.val, 4, {});
  EXPECT_EQ(c.weights, a.probe(1, 1).weights);
}

TEST(Selection, Fixtures) {
  std::vector<double> v(16, 0.5);
  v[2 * 4 + 3] = 0.9;
  EXPECT_EQ(select_top_k(grid_of(4, 4, v), 1).coords, (std::vector<HeadCoord>{{2, 3}}));
  EXPECT_EQ(select_top_k(grid_of(2, 2, {0.7, 0.7, 0.7, 0.7}), 2).coords,
            (std::vector<HeadCoord>{{0, 0}, {0, 1}}));
  EXPECT_THROW(select_top_k(grid_of(2, 2, {0, 0, 0, 0}), 0), ValidationError);
  EXPECT_THROW(select_top_k(grid_of(2, 2, {0, 0, 0, 0}), 5), ValidationError);
}

TEST(Selection, MatchesFullSortReferenceAndMonotoneTransforms) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    HeadMatrix m(4, 5);
    for (double& x : m.values) x = coarse(rng) / 10.0;  // many ties
    std::vector<std::pair<double, std::size_t>> ref;
    for (std::size_t i = 0; i < m.values.size(); ++i) ref.push_back({-m.values[i], i});
    std::sort(ref.begin(), ref.end());
    const auto got = select_top_k(m, 5);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(got.coords[k].layer * 5 + got.coords[k].head, ref[k].second);
    }
    HeadMatrix t = m;
    for (double& x : t.values) x = std::exp(3.0 * x) - 7.0;
    EXPECT_EQ(select_top_k(t, 5), got);
  }
}

TEST(Heatmap, ShapeRoundTripAndErrors) {
  const auto m = grid_of(2, 2, {0.1234567, 0.5, 1.0, 0.0});
  const auto csv = heatmap_csv(m);
  EXPECT_EQ(csv, "0.123457,0.500000\n1.000000,0.000000\n");
  const auto back = parse_heatmap_csv(csv);
  ASSERT_EQ(back.n_layers, 2u);
  ASSERT_EQ(back.n_heads, 2u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back.values[i], m.values[i], 1e-6);
  try {
    parse_heatmap_csv("0.1,0.2\n0.3\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
  EXPECT_THROW(parse_heatmap_csv("0.1,abc\n"), FormatError);
  EXPECT_THROW(write_heatmap("/nonexistent-dir/x/heatmap.csv", m), Error);
}

TEST(Heatmap, GoldenPlantedRun) {
  const auto d = planted_data(100, 50);
  const auto grid = fit_probe_grid(d.train, d.val);
  const auto golden = vt::slurp(std::filesystem::path(VERITAS_SOURCE_DIR) / "tests/golden/heatmap_planted.csv");
  EXPECT_EQ(heatmap_csv(grid.accuracies()), golden);
}

TEST(AnswerDiff, IdentityAntisymmetryAndPlantedContrast) {
  const ArithmeticWorld world;
  const auto model = planted_signal_model(ModelDims::make(3, 4, 4, 257), {{0, 2}, {2, 1}}, 1.0, 9);
  const auto train = collect_activations(model, data::synthetic_answers(world, 150, 1));
  const auto val = collect_activations(model, data::synthetic_answers(world, 50, 2));
  const auto grid = fit_probe_grid(train, val);
  const std::string q = ArithmeticWorld::question_text({3, 5, 2, 6}, false);

  const auto same = answer_diff_map(grid, model, q, "16", "16");
  for (double v : same.values) EXPECT_EQ(v, 0.0);

  const auto ab = answer_diff_map(grid, model, q, "16", "17");
  const auto ba = answer_diff_map(grid, model, q, "17", "16");
  for (std::size_t i = 0; i < ab.values.size(); ++i) EXPECT_DOUBLE_EQ(ab.values[i], -ba.values[i]);

  std::vector<double> noise;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t h = 0; h < 4; ++h)
      if (!model.is_planted({l, h})) noise.push_back(std::abs(ab.at(l, h)));
  std::sort(noise.begin(), noise.end());
  const double p95 = noise[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(noise.size()))) - 1];
  EXPECT_GT(std::abs(ab.at(0, 2)), p95);
  EXPECT_GT(std::abs(ab.at(2, 1)), p95);
}

TEST(Bundles, JsonRoundTrip) {
  const auto d = planted_data(30, 10);
  const auto grid = fit_probe_grid(d.train, d.val);
  const auto back = grid_from_json(nlohmann::json::parse(to_json(grid).dump()));
  ASSERT_EQ(back.probes.size(), grid.probes.size());
  for (std::size_t i = 0; i < grid.probes.size(); ++i) {
    EXPECT_EQ(back.probes[i].weights, grid.probes[i].weights);
    EXPECT_EQ(back.probes[i].stats.scale, grid.probes[i].stats.scale);
    EXPECT_EQ(back.probes[i].val_accuracy, grid.probes[i].val_accuracy);
  }
  const HeadSelection sel{{{2, 0}, {1, 1}}};
  EXPECT_EQ(to_json(sel).dump(), "[[2,0],[1,1]]");
  EXPECT_EQ(selection_from_json(to_json(sel)), sel);
  auto broken = to_json(grid);
  broken["probes"].erase(0);
  EXPECT_THROW(grid_from_json(broken), ValidationError);
}
