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
using namespace veritas::calibration;

TEST(Ece, SingleBinFixture) {
  const PredictionSet p{{0.8, 0.8}, {1, 0}};
  EXPECT_NEAR(ece(p, 1), 0.3, 1e-15);
}

TEST(Ece, PerfectCalibrationIsZero) {
  // Bin (0.2, 0.3] holds 0.25 x4 with one positive; bin (0.7, 0.8] holds 0.75 x4 with three.
  const PredictionSet p{{0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75}, {1, 0, 0, 0, 1, 1, 1, 0}};
  EXPECT_NEAR(ece(p, 10), 0.0, 1e-15);
}

TEST(Ece, RightClosedEdges) {
  EXPECT_EQ(bin_index(0.0, 10), 0u);
  EXPECT_EQ(bin_index(0.1, 10), 0u);
  EXPECT_EQ(bin_index(0.3, 10), 2u);
  EXPECT_EQ(bin_index(std::nextafter(0.3, 1.0), 10), 3u);
  EXPECT_EQ(bin_index(1.0, 10), 9u);
}

TEST(Ece, MatchesOracleOnRandomSets) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto p = vt::random_predictions(1000, s);
    for (std::size_t b : {1u, 7u, 10u, 15u}) {
      EXPECT_NEAR(ece(p, b), vt::oracle_ece(p.confidences, p.labels, b), 1e-12);
    }
  }
}

TEST(Ece, SingleBinEqualsGlobalGap) {
  const auto p = vt::random_predictions(300, 4);
  double acc = 0, conf = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p.labels[i];
    conf += p.confidences[i];
  }
  EXPECT_NEAR(ece(p, 1), std::abs(acc - conf) / 300.0, 1e-12);
}

TEST(Ece, RejectsBadInput) {
  EXPECT_THROW(ece(PredictionSet{}, 10), ValidationError);
  EXPECT_THROW(ece(PredictionSet{{0.5}, {1, 0}}, 10), ValidationError);
  EXPECT_THROW(ece(PredictionSet{{1.5}, {1}}, 10), ValidationError);
  EXPECT_THROW(ece(PredictionSet{{0.5}, {1}}, 0), ValidationError);
}

TEST(Brier, Fixtures) {
  EXPECT_DOUBLE_EQ(brier({{1.0, 0.0}, {1, 0}}), 0.0);
  EXPECT_DOUBLE_EQ(brier({{0.5}, {1}}), 0.25);
  EXPECT_DOUBLE_EQ(brier({{0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}}), 0.25);
  const auto p = vt::random_predictions(500, 8);
  EXPECT_NEAR(brier(p), vt::oracle_brier(p.confidences, p.labels), 1e-12);
  double mp = 0, my = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mp += p.confidences[i] / 500.0;
    my += p.labels[i] / 500.0;
  }
  EXPECT_GE(brier(p), (mp - my) * (mp - my));
}

TEST(Auc, Fixtures) {
  EXPECT_DOUBLE_EQ(auc({{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}}), 1.0);
  EXPECT_DOUBLE_EQ(auc({{0.4, 0.4, 0.4}, {1, 0, 1}}), 0.5);
  EXPECT_THROW(auc({{0.4, 0.3}, {1, 1}}), ValidationError);
}

TEST(Auc, MatchesPairCountingAndIsRankInvariant) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto p = vt::random_predictions(60, 1000 + s);
    EXPECT_NEAR(auc(p), vt::oracle_auc(p.confidences, p.labels), 1e-12);
  }
  auto p = vt::random_predictions(200, 5);
  const double base = auc(p);
  for (double& c : p.confidences) c = c * c * 0.5;
  EXPECT_NEAR(auc(p), base, 1e-12);
}

TEST(Metrics, PermutationInvariant) {
  auto p = vt::random_predictions(400, 12);
  const auto r1 = report(p);
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(3));
  PredictionSet q;
  for (auto i : idx) {
    q.confidences.push_back(p.confidences[i]);
    q.labels.push_back(p.labels[i]);
  }
  const auto r2 = report(q);
  EXPECT_NEAR(r1.ece, r2.ece, 1e-12);
  EXPECT_NEAR(r1.brier, r2.brier, 1e-12);
  EXPECT_NEAR(r1.auc, r2.auc, 1e-12);
}

TEST(Reliability, CalibratedDataHugsDiagonal) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  PredictionSet p;
  for (int i = 0; i < 20000; ++i) {
    const double c = u(rng);
    p.confidences.push_back(c);
    p.labels.push_back(u(rng) < c ? 1 : 0);
  }
  for (const auto& b : reliability_curve(p, 10)) {
    EXPECT_LE(std::abs(b.mean_confidence - b.midpoint), 0.05 + 1e-12);
    EXPECT_LE(std::abs(b.accuracy - b.mean_confidence), 0.05);
  }
}

TEST(Reliability, OverconfidenceLiesBelowDiagonal) {
  PredictionSet p;
  for (int i = 0; i < 100; ++i) {
    p.confidences.push_back(0.9);
    p.labels.push_back(i % 2);
  }
  const auto curve = reliability_curve(p, 10);
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_LT(curve[0].accuracy, curve[0].mean_confidence);
  const auto csv = reliability_csv(curve);
  EXPECT_EQ(csv, "midpoint,confidence,accuracy,count\n0.850000,0.900000,0.500000,100\n");
  const auto j = to_json(report({{0.9, 0.1}, {1, 0}}));
  EXPECT_EQ(j["bins"].size(), 2u);
}

TEST(Baselines, SequenceLikelihoodGeometricMean) {
  vt::ScriptedModel m;
  const std::string prefix = "Question: q\nAnswer: ";
  std::vector<double> d1(257, 0.1 / 255.0), d2(257, 0.6 / 256.0);
  d1['a'] = 0.9;
  d1['z'] = 0.0;
  d2['b'] = 0.4;
  m.distributions[prefix] = d1;
  m.distributions[prefix + "a"] = d2;
  const auto s = sequence_likelihood(m, "q", "ab");
  EXPECT_NEAR(s.value, 0.6, 1e-12);
  EXPECT_FALSE(s.zero_probability);
  EXPECT_NEAR(sequence_likelihood(m, "q", "a").value, 0.9, 1e-12);
  const auto zero = sequence_likelihood(m, "q", "z");
  EXPECT_TRUE(zero.zero_probability);
  EXPECT_EQ(zero.value, std::numeric_limits<double>::denorm_min());
}

TEST(Baselines, IsTrueProbability) {
  vt::ScriptedModel m;
  const VerificationTemplate tmpl;
  EXPECT_NEAR(is_true_probability(m, "q", "a", tmpl), 1.0 / 257.0, 1e-15);
  std::vector<double> rigged(257, 0.0);
  rigged['A'] = 1.0;
  m.distributions[render_verification(tmpl, "q", "a")] = rigged;
  EXPECT_DOUBLE_EQ(is_true_probability(m, "q", "a", tmpl), 1.0);
  VerificationTemplate bad = tmpl;
  bad.target = "True";
  EXPECT_THROW(is_true_probability(m, "q", "a", bad), ConfigError);
  bad = tmpl;
  bad.text = "no slots";
  EXPECT_THROW(is_true_probability(m, "q", "a", bad), ConfigError);
}

TEST(Baselines, IsTrueMatchesDirectReadout) {
  TinyTransformerConfig cfg;
  cfg.dims = ModelDims::make(1, 2, 4, 257);
  cfg.max_positions = 256;
  const TinyTransformer model(cfg);
  const VerificationTemplate tmpl;
  const auto tokens = model.tokenizer().encode(render_verification(tmpl, "1+1?", "2"));
  EXPECT_DOUBLE_EQ(is_true_probability(model, "1+1?", "2", tmpl), model.forward(tokens).distribution['A']);
}
