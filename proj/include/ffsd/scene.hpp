// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffsd/box.hpp"
#include "ffsd/rng.hpp"
#include "ffsd/tensor.hpp"

namespace ffsd {

// 8-bit RGB canvas; the on-disk unit (PPM P6) and the bit-exactness anchor.
struct SceneImage {
  int w = 0, h = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

  void set(int y, int x, int v) {
    const std::size_t k = 3 * (static_cast<std::size_t>(y) * w + x);
    const std::uint8_t b = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    rgb[k] = rgb[k + 1] = rgb[k + 2] = b;
  }
  int get(int y, int x) const { return rgb[3 * (static_cast<std::size_t>(y) * w + x)]; }
};

template <typename T>
Tensor<T> to_tensor(const SceneImage& im) {
  Tensor<T> t(1, 3, im.h, im.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < im.h; ++y)
      for (int x = 0; x < im.w; ++x)
        t.at(0, c, y, x) =
            static_cast<T>(im.rgb[3 * (static_cast<std::size_t>(y) * im.w + x) + c]) / T(255);
  return t;
}

struct Annotation {
  int category = 0;
  int xmin = 0, ymin = 0, xmax = 0, ymax = 0;  // pixel corners, max exclusive
  bool small_size = false;

  int width() const { return xmax - xmin; }
  int height() const { return ymax - ymin; }
};

// Contextual small-object scenes: the background texture statistically
// predicts object identity. Two category pairs (boat/car as bars, plane/lamp
// as discs) are drawn identically at small sizes, so the background is the
// only disambiguating signal for them; large instances carry distinguishing
// decorations.
struct SceneSpec {
  int canvas = 96;
  std::vector<std::string> background_names = {"sea", "sky", "road", "indoor"};
  std::vector<std::string> category_names = {"boat", "car", "plane", "lamp"};
  // P(category | background), rows sum to 1.
  std::vector<std::vector<double>> affinity = {
      {0.7, 0.1, 0.1, 0.1},   // sea -> boat
      {0.1, 0.1, 0.7, 0.1},   // sky -> plane
      {0.1, 0.7, 0.1, 0.1},   // road -> car
      {0.1, 0.1, 0.1, 0.7}};  // indoor -> lamp
  int min_objects = 1, max_objects = 4;
  double p_small = 0.7;
  int small_min = 6, small_max = 14;
  int large_min = 24, large_max = 48;
  double max_overlap = 0.3;  // pairwise IoU cap between planted objects
  int clutter_max = 4;       // distractor marks per scene
  int noise_amplitude = 6;   // +- on 0..255

  bool operator==(const SceneSpec&) const = default;

  int small_side_limit() const { return canvas / 6; }

  void validate() const {
    if (canvas < 32) throw std::invalid_argument("SceneSpec: canvas too small");
    if (category_names.empty() || background_names.empty())
      throw std::invalid_argument("SceneSpec: need categories and backgrounds");
    if (affinity.size() != background_names.size())
      throw std::invalid_argument("SceneSpec: affinity must have one row per background");
    for (const auto& row : affinity) {
      if (row.size() != category_names.size())
        throw std::invalid_argument("SceneSpec: affinity row length mismatch");
      double s = 0;
      for (double v : row) {
        if (v < 0) throw std::invalid_argument("SceneSpec: negative affinity");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument("SceneSpec: affinity rows must sum to 1");
    }
    if (min_objects < 0 || max_objects < min_objects)
      throw std::invalid_argument("SceneSpec: bad object count range");
    if (small_min < 4 || small_max < small_min || large_min <= small_side_limit() ||
        large_max < large_min || small_max > small_side_limit())
      throw std::invalid_argument("SceneSpec: size ranges inconsistent with the small/large split");
    if (p_small < 0 || p_small > 1) throw std::invalid_argument("SceneSpec: bad p_small");
  }
};

struct Scene {
  SceneImage image;
  std::vector<Annotation> anns;
  int background = 0;
};

namespace detail {

inline void draw_rect(SceneImage& im, int x0, int y0, int x1, int y1, int v) {
  for (int y = std::max(0, y0); y < std::min(im.h, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(im.w, x1); ++x) im.set(y, x, v);
}

inline void draw_disc(SceneImage& im, double cx, double cy, double r, int v) {
  for (int y = std::max(0, static_cast<int>(cy - r)); y < std::min(im.h, static_cast<int>(cy + r) + 1); ++y)
    for (int x = std::max(0, static_cast<int>(cx - r)); x < std::min(im.w, static_cast<int>(cx + r) + 1); ++x)
      if ((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy) <= r * r)
        im.set(y, x, v);
}

inline void draw_triangle_up(SceneImage& im, int x0, int y0, int x1, int y1, int v) {
  // apex at top-center, base at the bottom edge of the box
  const double cx = (x0 + x1) / 2.0;
  const int hgt = y1 - y0;
  for (int y = std::max(0, y0); y < std::min(im.h, y1); ++y) {
    const double frac = hgt <= 1 ? 1.0 : static_cast<double>(y - y0) / (hgt - 1);
    const double half = frac * (x1 - x0) / 2.0;
    for (int x = std::max(0, static_cast<int>(std::ceil(cx - half)));
         x < std::min(im.w, static_cast<int>(std::floor(cx + half)) + 1); ++x)
      if (x >= x0 && x < x1) im.set(y, x, v);
  }
}

// Object footprint in pixels for a sampled size; small instances of a pair
// are identical primitives, large ones carry the distinguishing decoration.
inline Annotation place_box(int category, bool small, int size, int x0, int y0) {
  int bw, bh;
  if (small) {
    if (category == 0 || category == 1) {  // bar
      bw = size;
      bh = std::max(4, size / 2);
    } else {  // disc
      bw = bh = size;
    }
  } else {
    switch (category) {
      case 0: bw = size; bh = std::max(4, (3 * size) / 4); break;  // boat: hull + sail
      case 1: bw = size; bh = std::max(4, size / 2); break;        // car: body + wheels
      case 2: bw = size; bh = std::max(4, size / 2); break;        // plane: disc + wings
      default: bw = std::max(4, (3 * size) / 5); bh = size; break; // lamp: shade + stem
    }
  }
  return {category, x0, y0, x0 + bw, y0 + bh, false};
}

inline void draw_object(SceneImage& im, const Annotation& a, bool small) {
  const int x0 = a.xmin, y0 = a.ymin, x1 = a.xmax, y1 = a.ymax;
  if (small) {
    // low contrast, identical within each confusable pair
    if (a.category == 0 || a.category == 1)
      draw_rect(im, x0, y0, x1, y1, 170);
    else
      draw_disc(im, (x0 + x1) / 2.0, (y0 + y1) / 2.0, (x1 - x0) / 2.0, 170);
    return;
  }
  switch (a.category) {
    case 0: {  // boat: sail above a hull bar
      const int hull_top = y1 - std::max(4, (y1 - y0) / 3);
      draw_rect(im, x0, hull_top, x1, y1, 200);
      draw_triangle_up(im, x0 + (x1 - x0) / 4, y0, x1 - (x1 - x0) / 4, hull_top, 230);
      break;
    }
    case 1: {  // car: body bar with two dark wheels
      const int wheel_r = std::max(2, (x1 - x0) / 8);
      draw_rect(im, x0, y0, x1, y1 - wheel_r, 200);
      draw_disc(im, x0 + wheel_r + 0.5, y1 - wheel_r - 0.5, wheel_r, 40);
      draw_disc(im, x1 - wheel_r - 1.5, y1 - wheel_r - 0.5, wheel_r, 40);
      break;
    }
    case 2: {  // plane: fuselage disc with a wing bar
      const int wing_h = std::max(3, (y1 - y0) / 4);
      const double cy = (y0 + y1) / 2.0;
      draw_rect(im, x0, static_cast<int>(cy) - wing_h / 2, x1,
                static_cast<int>(cy) - wing_h / 2 + wing_h, 230);
      draw_disc(im, (x0 + x1) / 2.0, cy, (y1 - y0) / 3.0, 210);
      break;
    }
    default: {  // lamp: shade disc over a stem
      const double r = (x1 - x0) / 2.0;
      draw_disc(im, (x0 + x1) / 2.0, y0 + r, r, 210);
      const int stem_w = std::max(2, (x1 - x0) / 5);
      draw_rect(im, (x0 + x1) / 2 - stem_w / 2, y0 + static_cast<int>(r), (x0 + x1) / 2 - stem_w / 2 + stem_w,
                y1, 180);
      break;
    }
  }
}

inline void draw_background(SceneImage& im, int bg, Rng& rng) {
  const int H = im.h, W = im.w;
  switch (bg) {
    case 0: {  // sea: vertical intensity ramp, jittered endpoints
      const int top = 140 + rng.uniform_int(-8, 8);
      const int bot = 88 + rng.uniform_int(-8, 8);
      for (int y = 0; y < H; ++y) {
        const int v = top + (bot - top) * y / std::max(1, H - 1);
        for (int x = 0; x < W; ++x) im.set(y, x, v);
      }
      break;
    }
    case 1: {  // sky: flat
      const int v = 126 + rng.uniform_int(-6, 6);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) im.set(y, x, v);
      break;
    }
    case 2: {  // road: vertical stripes, random phase
      const int period = 32;
      const int phase = rng.uniform_int(0, period - 1);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          im.set(y, x, ((x + phase) / (period / 2)) % 2 ? 142 : 112);
      break;
    }
    default: {  // indoor: checkerboard, random phase
      const int cell = 24;
      const int py = rng.uniform_int(0, cell - 1), px = rng.uniform_int(0, cell - 1);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          im.set(y, x, (((y + py) / cell) + ((x + px) / cell)) % 2 ? 142 : 112);
      break;
    }
  }
}

inline double pixel_iou(const Annotation& a, const Annotation& b) {
  return iou({static_cast<double>(a.xmin), static_cast<double>(a.ymin),
              static_cast<double>(a.xmax), static_cast<double>(a.ymax)},
             {static_cast<double>(b.xmin), static_cast<double>(b.ymin),
              static_cast<double>(b.xmax), static_cast<double>(b.ymax)});
}

}  // namespace detail

// Deterministic scene synthesis: same (seed, spec) gives a bit-identical
// image and annotation list. Placement failures after bounded retries just
// drop the object; the first object always fits.
inline Scene gen_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  Rng rng(seed);
  Scene scene;
  scene.image.w = scene.image.h = spec.canvas;
  scene.image.rgb.assign(static_cast<std::size_t>(spec.canvas) * spec.canvas * 3, 0);
  scene.background = static_cast<int>(rng.uniform_u64(spec.affinity.size()));
  detail::draw_background(scene.image, scene.background, rng);

  const int n_objects = rng.uniform_int(spec.min_objects, spec.max_objects);
  for (int o = 0; o < n_objects; ++o) {
    // category from the background's affinity row
    const double u = rng.uniform_real();
    double acc = 0;
    int category = static_cast<int>(spec.category_names.size()) - 1;
    for (std::size_t c = 0; c < spec.category_names.size(); ++c) {
      acc += spec.affinity[scene.background][c];
      if (u < acc) {
        category = static_cast<int>(c);
        break;
      }
    }
    const bool small = rng.uniform_real() < spec.p_small;
    const int size = small ? rng.uniform_int(spec.small_min, spec.small_max)
                           : rng.uniform_int(spec.large_min, spec.large_max);
    for (int attempt = 0; attempt < 20; ++attempt) {
      Annotation probe = detail::place_box(category, small, size, 0, 0);
      const int max_x = spec.canvas - probe.width(), max_y = spec.canvas - probe.height();
      if (max_x < 0 || max_y < 0) break;
      const int x0 = rng.uniform_int(0, max_x), y0 = rng.uniform_int(0, max_y);
      probe.xmin += x0; probe.xmax += x0;
      probe.ymin += y0; probe.ymax += y0;
      bool ok = true;
      for (const auto& prev : scene.anns)
        if (detail::pixel_iou(probe, prev) > spec.max_overlap) {
          ok = false;
          break;
        }
      if (!ok) continue;
      probe.small_size = std::max(probe.width(), probe.height()) <= spec.small_side_limit();
      detail::draw_object(scene.image, probe, small);
      scene.anns.push_back(probe);
      break;
    }
  }

  const int n_clutter = rng.uniform_int(0, spec.clutter_max);
  for (int i = 0; i < n_clutter; ++i) {
    const int s = rng.uniform_int(2, 3);
    const int x0 = rng.uniform_int(0, spec.canvas - s), y0 = rng.uniform_int(0, spec.canvas - s);
    const Annotation mark{0, x0, y0, x0 + s, y0 + s, false};
    bool clear = true;
    for (const auto& a : scene.anns)
      if (detail::pixel_iou(mark, a) > 0) {
        clear = false;
        break;
      }
    if (clear) detail::draw_rect(scene.image, x0, y0, x0 + s, y0 + s,
                                 rng.uniform_int(0, 1) ? 190 : 60);
  }

  if (spec.noise_amplitude > 0) {
    for (int y = 0; y < spec.canvas; ++y)
      for (int x = 0; x < spec.canvas; ++x)
        scene.image.set(y, x, scene.image.get(y, x) +
                                  rng.uniform_int(-spec.noise_amplitude, spec.noise_amplitude));
  }
  return scene;
}

}  // namespace ffsd
