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
#include <string>
#include <vector>

#include "veritas/calibration.hpp"
#include "veritas/probing.hpp"
#include "veritas/util.hpp"

// Minimal SVG renderers. CSV outputs remain the data of record.

namespace veritas::plot {

namespace detail {

inline std::string color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(255.0 * t);
  const int b = static_cast<int>(255.0 * (1.0 - t));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x40%02x", r, b);
  return buf;
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle") {
  return "<text x=\"" + fixed(x, 1) + "\" y=\"" + fixed(y, 1) + "\" font-size=\"10\" text-anchor=\"" + anchor +
         "\">" + s + "</text>\n";
}

}  // namespace detail

/// Layers as rows, heads as columns; colour scaled between lo and hi.
inline std::string heatmap_svg(const probing::HeadMatrix& m, double lo, double hi, const std::string& title) {
  const double cell = 24.0, left = 40.0, top = 30.0;
  const double w = left + cell * static_cast<double>(m.n_heads) + 10.0;
  const double h = top + cell * static_cast<double>(m.n_layers) + 30.0;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(w, 0) + "\" height=\"" +
                    fixed(h, 0) + "\">\n";
  out += detail::text(w / 2, 15, title);
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    out += detail::text(left - 5, top + cell * (static_cast<double>(l) + 0.65), std::to_string(l), "end");
    for (std::size_t hd = 0; hd < m.n_heads; ++hd) {
      const double t = hi > lo ? (m.at(l, hd) - lo) / (hi - lo) : 0.5;
      out += "<rect x=\"" + fixed(left + cell * static_cast<double>(hd), 1) + "\" y=\"" +
             fixed(top + cell * static_cast<double>(l), 1) + "\" width=\"" + fixed(cell, 1) + "\" height=\"" +
             fixed(cell, 1) + "\" fill=\"" + detail::color(t) + "\"><title>(" + std::to_string(l) + "," +
             std::to_string(hd) + ") " + fixed(m.at(l, hd), 4) + "</title></rect>\n";
    }
  }
  for (std::size_t hd = 0; hd < m.n_heads; ++hd) {
    out += detail::text(left + cell * (static_cast<double>(hd) + 0.5), top + cell * static_cast<double>(m.n_layers) + 14,
                        std::to_string(hd));
  }
  return out + "</svg>\n";
}

/// Reliability diagram: accuracy against mean confidence per populated bin,
/// with the diagonal for reference.
inline std::string reliability_svg(const std::vector<calibration::ReliabilityBin>& bins, const std::string& title) {
  const double size = 240.0, pad = 40.0;
  auto px = [&](double v) { return fixed(pad + v * size, 1); };
  auto py = [&](double v) { return fixed(pad + (1.0 - v) * size, 1); };
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(size + 2 * pad, 0) +
                    "\" height=\"" + fixed(size + 2 * pad, 0) + "\">\n";
  out += detail::text(pad + size / 2, 20, title);
  out += "<rect x=\"" + px(0) + "\" y=\"" + py(1) + "\" width=\"" + fixed(size, 1) + "\" height=\"" + fixed(size, 1) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + px(0) + "\" y1=\"" + py(0) + "\" x2=\"" + px(1) + "\" y2=\"" + py(1) +
         "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
  std::string points;
  for (const auto& b : bins) {
    points += px(b.mean_confidence) + "," + py(b.accuracy) + " ";
    out += "<circle cx=\"" + px(b.mean_confidence) + "\" cy=\"" + py(b.accuracy) + "\" r=\"3\" fill=\"#c03030\"/>\n";
  }
  out += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"#c03030\"/>\n";
  out += detail::text(pad + size / 2, pad + size + 28, "confidence");
  out += detail::text(12, pad + size / 2, "accuracy", "start");
  return out + "</svg>\n";
}

}  // namespace veritas::plot
