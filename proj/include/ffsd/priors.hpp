// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffsd/box.hpp"

namespace ffsd {

// One prediction tap of the pyramid: a feature map of fmap x fmap cells with
// a prior scale and aspect ratio set. Besides one box per ratio, every cell
// gets an extra ratio-1 box at scale sqrt(s_k * s_next).
struct PriorTapSpec {
  std::string source;           // feature map the head reads from
  int fmap = 0;                 // spatial size (square)
  double scale = 0;             // s_k, fraction of image side
  double scale_next = 0;        // s_{k+1} (the next tap's scale, or the boundary)
  std::vector<double> ratios;   // aspect ratios, ratio 1 included explicitly

  int shapes_per_cell() const { return static_cast<int>(ratios.size()) + 1; }
};

struct PriorSet {
  std::vector<CenterBox> boxes;  // (tap, row, col, shape) lexicographic
  Variances variances;
  std::vector<int> tap_offsets;  // start index per tap, plus total at the end

  int count() const { return static_cast<int>(boxes.size()); }
};

inline PriorSet generate_priors(const std::vector<PriorTapSpec>& taps, Variances var) {
  PriorSet out;
  out.variances = var;
  double prev_scale = 0;
  for (const auto& tap : taps) {
    if (tap.fmap < 1 || tap.scale <= 0 || tap.scale_next <= 0 || tap.ratios.empty())
      throw std::invalid_argument("generate_priors: illegal tap spec for " + tap.source);
    if (tap.scale <= prev_scale)
      throw std::invalid_argument("generate_priors: prior scales must strictly increase");
    prev_scale = tap.scale;
    out.tap_offsets.push_back(out.count());
    const double f = tap.fmap;
    const double extra = std::sqrt(tap.scale * tap.scale_next);
    for (int i = 0; i < tap.fmap; ++i) {
      for (int j = 0; j < tap.fmap; ++j) {
        const double cx = (j + 0.5) / f;
        const double cy = (i + 0.5) / f;
        for (double a : tap.ratios) {
          const double r = std::sqrt(a);
          out.boxes.push_back({cx, cy, tap.scale * r, tap.scale / r});
        }
        out.boxes.push_back({cx, cy, extra, extra});
      }
    }
  }
  out.tap_offsets.push_back(out.count());
  return out;
}

}  // namespace ffsd
