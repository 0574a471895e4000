// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ffsd {

// Axis-aligned box in corner form, normalized image coordinates.
struct Box {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
};

// Center form (cx, cy, w, h); priors live in this representation.
struct CenterBox {
  double cx = 0, cy = 0, w = 0, h = 0;
};

inline Box to_corner(const CenterBox& b) {
  return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2};
}

inline CenterBox to_center(const Box& b) {
  return {(b.xmin + b.xmax) / 2, (b.ymin + b.ymax) / 2, b.width(), b.height()};
}

// Intersection over union; 0 for disjoint boxes.
inline double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const double iy = std::max(0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const double inter = ix * iy;
  if (inter <= 0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

struct Variances {
  double center = 0.1;
  double size = 0.2;
};

// SSD box parameterization: scaled center deltas and log size ratios.
inline std::array<double, 4> encode_box(const Box& gt, const CenterBox& prior,
                                        const Variances& var) {
  const CenterBox g = to_center(gt);
  if (g.w <= 0 || g.h <= 0)
    throw std::invalid_argument("encode_box: ground truth has non-positive extent");
  return {(g.cx - prior.cx) / (prior.w * var.center), (g.cy - prior.cy) / (prior.h * var.center),
          std::log(g.w / prior.w) / var.size, std::log(g.h / prior.h) / var.size};
}

inline Box decode_box(const std::array<double, 4>& off, const CenterBox& prior,
                      const Variances& var) {
  CenterBox g;
  g.cx = off[0] * var.center * prior.w + prior.cx;
  g.cy = off[1] * var.center * prior.h + prior.cy;
  g.w = prior.w * std::exp(off[2] * var.size);
  g.h = prior.h * std::exp(off[3] * var.size);
  return to_corner(g);
}

struct Detection {
  int category = 0;       // foreground category id
  double score = 0;       // softmax probability
  Box box;                // corner form, normalized, clipped to [0,1]
};

inline Box clip_unit(const Box& b) {
  return {std::clamp(b.xmin, 0.0, 1.0), std::clamp(b.ymin, 0.0, 1.0),
          std::clamp(b.xmax, 0.0, 1.0), std::clamp(b.ymax, 0.0, 1.0)};
}

}  // namespace ffsd
