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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "veritas/model/types.hpp"

namespace veritas {

// .vtrc layout (all integers little-endian):
//   "VTRC" | u32 version | u32 header_len | header_len bytes of UTF-8 JSON
//   then per record: u64 example_id | u8 label | u32 prompt_token_count |
//                    L*H*d_head f32 activations, [layer][head][dim] order.

inline constexpr std::uint32_t kTraceVersion = 1;
inline constexpr std::uint8_t kUnlabeled = 255;

struct TraceHeader {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_head = 0;
  std::string model_id;

  std::size_t record_floats() const { return n_layers * n_heads * d_head; }
  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct TraceRecord {
  std::uint64_t example_id = 0;
  std::uint8_t label = kUnlabeled;
  std::uint32_t prompt_token_count = 0;
  std::vector<float> activations;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TraceFile {
  TraceHeader header;
  std::vector<TraceRecord> records;
};

inline std::vector<float> to_f32(const HeadActivationTensor& t) {
  std::vector<float> out;
  out.reserve(t.flat().size());
  for (double v : t.flat()) out.push_back(static_cast<float>(v));
  return out;
}

inline HeadActivationTensor from_f32(const TraceHeader& h, const std::vector<float>& values) {
  std::vector<double> wide(values.begin(), values.end());
  return HeadActivationTensor(h.n_layers, h.n_heads, h.d_head, std::move(wide));
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  std::string_view take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("truncated trace: ") + what + " needs " + std::to_string(n) +
                            " bytes, " + std::to_string(data_.size() - pos_) + " remain",
                        data_.size());
    }
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(std::size_t bytes, const char* what) {
    auto s = take(bytes, what);
    std::uint64_t v = 0;
    for (std::size_t i = bytes; i-- > 0;) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_trace(const TraceFile& trace) {
  const auto& h = trace.header;
  nlohmann::json header = {{"n_layers", h.n_layers},
                           {"n_heads", h.n_heads},
                           {"d_head", h.d_head},
                           {"model_id", h.model_id},
                           {"dtype", "f32"}};
  const std::string header_text = header.dump();
  std::string out = "VTRC";
  detail::put_u32(out, kTraceVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (const auto& r : trace.records) {
    if (r.activations.size() != h.record_floats()) {
      throw ConfigError("trace record " + std::to_string(r.example_id) + " has " +
                        std::to_string(r.activations.size()) + " activations, header expects " +
                        std::to_string(h.record_floats()));
    }
    detail::put_u64(out, r.example_id);
    out.push_back(static_cast<char>(r.label));
    detail::put_u32(out, r.prompt_token_count);
    for (float f : r.activations) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline TraceFile decode_trace(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (in.take(4, "magic") != "VTRC") throw FormatError("bad magic, expected VTRC", 0);
  const auto version_at = in.offset();
  const auto version = in.uint(4, "version");
  if (version != kTraceVersion) {
    throw FormatError("unsupported trace version " + std::to_string(version), version_at);
  }
  const auto header_len = in.uint(4, "header length");
  const auto header_at = in.offset();
  const auto header_text = in.take(header_len, "header");

  TraceFile trace;
  try {
    const auto j = nlohmann::json::parse(header_text);
    trace.header.n_layers = j.at("n_layers").get<std::size_t>();
    trace.header.n_heads = j.at("n_heads").get<std::size_t>();
    trace.header.d_head = j.at("d_head").get<std::size_t>();
    trace.header.model_id = j.value("model_id", std::string());
    if (j.at("dtype").get<std::string>() != "f32") throw FormatError("dtype must be f32", header_at);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad trace header: ") + e.what(), header_at);
  }
  if (trace.header.record_floats() == 0) throw FormatError("trace header has a zero dimension", header_at);

  while (!in.at_end()) {
    TraceRecord r;
    r.example_id = in.uint(8, "example_id");
    const auto label_at = in.offset();
    r.label = static_cast<std::uint8_t>(in.uint(1, "label"));
    if (r.label != 0 && r.label != 1 && r.label != kUnlabeled) {
      throw FormatError("label must be 0, 1 or 255, got " + std::to_string(r.label), label_at);
    }
    r.prompt_token_count = static_cast<std::uint32_t>(in.uint(4, "prompt_token_count"));
    const auto floats = trace.header.record_floats();
    const auto raw = in.take(floats * 4, "activations");
    r.activations.resize(floats);
    for (std::size_t i = 0; i < floats; ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(raw[i * 4 + static_cast<std::size_t>(b)]);
      r.activations[i] = std::bit_cast<float>(bits);
    }
    trace.records.push_back(std::move(r));
  }
  return trace;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path);
}

inline TraceFile read_trace(const std::string& path) { return decode_trace(read_file(path)); }
inline void write_trace(const std::string& path, const TraceFile& trace) { write_file(path, encode_trace(trace)); }

// Replay JSON-lines: one object per context,
//   {"context_sha256": hex, "candidates": [{"text", "token_logprobs", "activations", "token_ids"?}]}

struct ReplayCandidate {
  std::string text;
  std::vector<double> token_logprobs;
  std::vector<float> activations;
  TokenSeq token_ids;
};

struct ReplayEntry {
  std::string context_sha256;
  std::vector<ReplayCandidate> candidates;
};

inline std::string encode_replay_line(const ReplayEntry& e) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : e.candidates) {
    nlohmann::json jc = {{"text", c.text}, {"token_logprobs", c.token_logprobs}, {"activations", c.activations}};
    if (!c.token_ids.empty()) jc["token_ids"] = c.token_ids;
    cands.push_back(std::move(jc));
  }
  return nlohmann::json{{"context_sha256", e.context_sha256}, {"candidates", cands}}.dump();
}

inline std::vector<ReplayEntry> decode_replay(std::string_view text) {
  std::vector<ReplayEntry> out;
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
      ReplayEntry e;
      e.context_sha256 = j.at("context_sha256").get<std::string>();
      for (const auto& jc : j.at("candidates")) {
        ReplayCandidate c;
        c.text = jc.at("text").get<std::string>();
        c.token_logprobs = jc.at("token_logprobs").get<std::vector<double>>();
        c.activations = jc.at("activations").get<std::vector<float>>();
        if (jc.contains("token_ids")) c.token_ids = jc.at("token_ids").get<TokenSeq>();
        for (double lp : c.token_logprobs) {
          if (!std::isfinite(lp) || lp > 0.0) throw FormatError("token logprob must be finite and <= 0", line_no);
        }
        if (c.token_logprobs.empty()) throw FormatError("candidate without token logprobs", line_no);
        if (!c.token_ids.empty() && c.token_ids.size() != c.token_logprobs.size()) {
          throw FormatError("token_ids and token_logprobs differ in length", line_no);
        }
        e.candidates.push_back(std::move(c));
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("bad replay line: ") + ex.what(), line_no);
    }
  }
  return out;
}

inline void write_replay(const std::string& path, const std::vector<ReplayEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += encode_replay_line(e) + "\n";
  write_file(path, out);
}

inline std::vector<ReplayEntry> read_replay(const std::string& path) { return decode_replay(read_file(path)); }

}  // namespace veritas
