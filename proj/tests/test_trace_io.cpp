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

namespace {

TraceFile sample_trace() {
  TraceFile t;
  t.header = {2, 2, 3, "unit"};
  for (std::uint64_t i = 0; i < 4; ++i) {
    TraceRecord r;
    r.example_id = 0x1122334455667788ULL + i;
    r.label = i == 3 ? kUnlabeled : static_cast<std::uint8_t>(i % 2);
    r.prompt_token_count = static_cast<std::uint32_t>(10 + i);
    for (std::size_t k = 0; k < 12; ++k) r.activations.push_back(static_cast<float>(k) * 0.25f - static_cast<float>(i));
    t.records.push_back(r);
  }
  return t;
}

std::size_t format_offset(const std::string& bytes) {
  try {
    decode_trace(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "expected FormatError";
  return 0;
}

}  // namespace

TEST(TraceFormat, RoundTripIsExact) {
  const auto t = sample_trace();
  const auto bytes = encode_trace(t);
  EXPECT_EQ(bytes.substr(0, 4), "VTRC");
  const auto back = decode_trace(bytes);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.records, t.records);
  EXPECT_EQ(encode_trace(back), bytes);
}

TEST(TraceFormat, LittleEndianLayout) {
  TraceFile t;
  t.header = {1, 1, 1, ""};
  t.records.push_back({0x0102030405060708ULL, 1, 7, {1.0f}});
  const auto bytes = encode_trace(t);
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]);
  const std::size_t rec = 12 + header_len;
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);  // version
  EXPECT_EQ(static_cast<unsigned char>(bytes[rec]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(bytes[rec + 7]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[rec + 8]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[rec + 9]), 7);
  // 1.0f is 0x3f800000.
  EXPECT_EQ(static_cast<unsigned char>(bytes[rec + 16]), 0x3f);
  EXPECT_EQ(bytes.size(), rec + 8 + 1 + 4 + 4);
}

TEST(TraceFormat, ErrorsCarryOffsets) {
  const auto bytes = encode_trace(sample_trace());
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(format_offset(bad), 0u);

  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(format_offset(bad), 4u);

  const std::string truncated = bytes.substr(0, bytes.size() - 3);
  EXPECT_EQ(format_offset(truncated), truncated.size());

  bad = bytes;
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]);
  const std::size_t label_at = 12 + header_len + 8;
  bad[label_at] = 7;
  EXPECT_EQ(format_offset(bad), label_at);
}

TEST(TraceFormat, WrongRecordWidthRejectedOnWrite) {
  auto t = sample_trace();
  t.records[1].activations.pop_back();
  EXPECT_THROW(encode_trace(t), ConfigError);
}

TEST(ReplayFormat, RoundTrip) {
  ReplayEntry e;
  e.context_sha256 = sha256_hex("ctx");
  e.candidates.push_back({"Step 1: a\n", {-0.5, -0.25}, {1.0f, 2.0f}, {65, 66}});
  e.candidates.push_back({"Step 1: b\n", {-1.0}, {0.5f, -2.0f}, {}});
  const auto text = encode_replay_line(e) + "\n\n" + encode_replay_line(e) + "\n";
  const auto back = decode_replay(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].context_sha256, e.context_sha256);
  EXPECT_EQ(back[0].candidates[0].token_ids, (TokenSeq{65, 66}));
  EXPECT_EQ(back[0].candidates[1].activations, (std::vector<float>{0.5f, -2.0f}));
}

TEST(ReplayFormat, ErrorsCarryLineNumbers) {
  const std::string good = R"({"context_sha256":"aa","candidates":[{"text":"x","token_logprobs":[-1],"activations":[0]}]})";
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      decode_replay(text);
    } catch (const FormatError& e) {
      return e.offset();
    }
    return 0;
  };
  EXPECT_EQ(line_of(good + "\n" + R"({"context_sha256":"bb","candidates":[{"text":"x","token_logprobs":[0.5],"activations":[0]}]})"), 2u);
  EXPECT_EQ(line_of(good + "\n" + good + "\n{not json"), 3u);
  EXPECT_EQ(line_of(R"({"context_sha256":"aa","candidates":[{"text":"x","token_logprobs":[],"activations":[0]}]})"), 1u);
  EXPECT_EQ(line_of(R"({"context_sha256":"aa","candidates":[{"text":"x","token_logprobs":[-1],"token_ids":[1,2],"activations":[0]}]})"), 1u);
}

TEST(ReplayModel, MissesRaiseWithContextHash) {
  TraceFile t;
  t.header = {1, 1, 2, "m"};
  t.records.push_back({context_key("known"), 1, 5, {1.0f, 2.0f}});
  const ReplayModel model(t, {});
  const auto& tok = model.tokenizer();
  const auto a = model.activations(tok.encode("known"));
  EXPECT_DOUBLE_EQ(a.at(0, 0, 1), 2.0);
  try {
    model.activations(tok.encode("unknown"));
    FAIL();
  } catch (const ReplayMissError& e) {
    EXPECT_EQ(e.context_hash(), sha256_hex("unknown"));
  }
  EXPECT_THROW(generate_candidates(model, tok.encode("known"), 2, {}), ReplayMissError);
  EXPECT_THROW(model.next_token_distribution(tok.encode("known")), ReplayMissError);
}

TEST(ReplayModel, RejectsMismatchedDims) {
  TraceFile t;
  t.header = {1, 1, 2, "m"};
  t.records.push_back({1, 1, 5, {1.0f}});
  EXPECT_THROW(ReplayModel(t, {}), FormatError);
  t.records.clear();
  ReplayEntry e{"abc", {{"x", {-1.0}, {1.0f}, {}}}};
  EXPECT_THROW(ReplayModel(t, {e}), FormatError);
}

TEST(ReplayModel, ReplaysRecordedCandidates) {
  const auto live = planted_signal_model(ModelDims::make(2, 2, 4, 257), {{1, 0}}, 1.0, 8);
  const std::string q = ArithmeticWorld::question_text({1, 2, 3}, true);
  const std::string ctx = data::cot_prefix(q, {});
  const auto set = generate_candidates(live, live.tokenizer().encode(ctx), 3, {});
  TraceFile trace;
  trace.header = {2, 2, 4, live.model_id()};
  const ReplayModel replay(trace, {record_candidates(ctx, set)});
  const auto again = generate_candidates(replay, replay.tokenizer().encode(ctx), 3, {});
  ASSERT_EQ(again.candidates.size(), set.candidates.size());
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    EXPECT_EQ(again.candidates[i].text, set.candidates[i].text);
    EXPECT_EQ(again.candidates[i].token_logprobs, set.candidates[i].token_logprobs);
    EXPECT_EQ(again.candidates[i].activations.flat(), from_f32(trace.header, to_f32(set.candidates[i].activations)).flat());
  }
}

TEST(ReplayModel, ProbesMatchInProcessOnRoundedData) {
  const ArithmeticWorld world;
  const auto model = planted_signal_model(ModelDims::make(2, 3, 4, 257), {{1, 1}}, 0.5, 4);
  const auto records = data::synthetic_steps(world, 60, 17);
  const auto acts = probing::collect_activations(model, records);
  const auto trace = decode_trace(encode_trace(probing::to_trace(model, records, acts)));
  const ReplayModel replay(trace, {});

  const auto replayed = probing::collect_activations(replay, records);
  probing::LabeledActivations rounded;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    rounded.push_back(from_f32(trace.header, to_f32(acts.tensors[i])), acts.labels[i], acts.ids[i]);
    ASSERT_EQ(replayed.tensors[i].flat(), rounded.tensors[i].flat());
  }
  const auto from_file = probing::from_trace(trace);
  EXPECT_EQ(from_file.labels, acts.labels);

  const auto g1 = probing::fit_probe_grid(replayed, replayed);
  const auto g2 = probing::fit_probe_grid(rounded, rounded);
  EXPECT_EQ(g1.accuracies().values, g2.accuracies().values);
  for (std::size_t i = 0; i < g1.probes.size(); ++i) EXPECT_EQ(g1.probes[i].weights, g2.probes[i].weights);
}

TEST(ReplayModel, UnlabeledTraceRecordsRejectedForTraining) {
  EXPECT_THROW(probing::from_trace(sample_trace()), ValidationError);
}
