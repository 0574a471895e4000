// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ffsd/model.hpp"
#include "ffsd/scene.hpp"

namespace ffsd {

template <typename T>
struct ErfResult {
  Tensor<T> heatmap;  // (1,1,H,W), max-normalized absolute input gradient
  int area = 0;       // pixels above threshold * max
  double peak = 0;    // unnormalized peak magnitude, 0 for a dead tap
};

// Backpropagates a unit gradient from the channel-summed activation at one
// tap position down to the input image. ReLU masks come from the forward pass
// on the given probe image, so the result is a deterministic function of
// (model, probe, tap, position).
template <typename T>
ErfResult<T> erf_probe(SsdModel<T>& model, const std::string& tap_name, int y, int x,
                       const Tensor<T>& probe_image, double area_threshold = 0.05) {
  Tape<T> tape;
  auto fwd = model.forward(tape, probe_image);
  auto it = fwd.taps.find(tap_name);
  if (it == fwd.taps.end())
    throw std::invalid_argument("erf_probe: unknown tap '" + tap_name + "'");
  Node<T>* tap = it->second;
  if (y < 0 || y >= tap->value.h || x < 0 || x >= tap->value.w)
    throw std::invalid_argument("erf_probe: position (" + std::to_string(y) + "," +
                                std::to_string(x) + ") outside tap extent " +
                                tap->value.shape_str());
  Tensor<T> seed = Tensor<T>::zeros_like(tap->value);
  for (int j = 0; j < tap->value.c; ++j) seed.at(0, j, y, x) = T(1);
  tape.backward(tap, seed);

  const Tensor<T>& g = fwd.input->grad;
  ErfResult<T> res;
  res.heatmap = Tensor<T>(1, 1, g.h, g.w);
  T peak{};
  for (int yy = 0; yy < g.h; ++yy)
    for (int xx = 0; xx < g.w; ++xx) {
      T v{};
      for (int c = 0; c < g.c; ++c) v += std::abs(g.at(0, c, yy, xx));
      res.heatmap.at(0, 0, yy, xx) = v;
      peak = std::max(peak, v);
    }
  res.peak = static_cast<double>(peak);
  if (peak > T{}) {
    const T cut = static_cast<T>(area_threshold) * peak;
    for (auto& v : res.heatmap.data) {
      if (v > cut) ++res.area;
      v /= peak;
    }
  }
  return res;
}

// Deterministic probe image: mid-gray plus the generator's mean texture
// (average over a fixed block of scenes, recentered around 0.5).
template <typename T>
Tensor<T> default_probe_image(const SceneSpec& spec, int scenes = 32,
                              std::uint64_t base_seed = 90210) {
  Tensor<double> mean(1, 3, spec.canvas, spec.canvas);
  for (int i = 0; i < scenes; ++i) {
    const Scene s = gen_scene(base_seed + static_cast<std::uint64_t>(i), spec);
    const Tensor<double> t = to_tensor<double>(s.image);
    for (int k = 0; k < mean.count(); ++k) mean.data[k] += t.data[k] / scenes;
  }
  double overall = 0;
  for (double v : mean.data) overall += v;
  overall /= mean.count();
  Tensor<T> probe(1, 3, spec.canvas, spec.canvas);
  for (int k = 0; k < mean.count(); ++k)
    probe.data[k] = static_cast<T>(std::clamp(0.5 + mean.data[k] - overall, 0.0, 1.0));
  return probe;
}

// Closed-form receptive field of a tap position on the input, from the
// backbone's kernel/stride/pad/dilation chain. Used to bound the probe.
struct PixelInterval {
  int lo = 0, hi = 0;  // inclusive
};

inline PixelInterval theoretical_receptive_field(const ModelConfig& cfg,
                                                 const std::string& tap, int u) {
  struct Layer {
    int k, s, p;
  };
  std::vector<Layer> chain = {{3, 1, 1}, {2, 2, 0}, {3, 1, 1}, {2, 2, 0}, {3, 1, 1}};
  if (tap != "conv3a") {
    chain.push_back({2, 2, 0});
    chain.push_back({3, 1, 1});
  }
  if (tap == "conv5a" || tap == "fc6a" || tap == "conv7a") {
    chain.push_back({2, 2, 0});
    chain.push_back({3, 1, 1});
  }
  if (tap == "fc6a" || tap == "conv7a") chain.push_back({5, 1, 2});  // dilation-2 3x3
  if (tap == "conv7a") chain.push_back({3, 2, 1});
  if (tap != "conv3a" && tap != "conv4a" && tap != "conv5a" && tap != "fc6a" &&
      tap != "conv7a")
    throw std::invalid_argument("theoretical_receptive_field: unknown tap '" + tap + "'");
  int lo = u, hi = u;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    lo = lo * it->s - it->p;
    hi = hi * it->s - it->p + it->k - 1;
  }
  return {std::max(0, lo), std::min(cfg.input_size - 1, hi)};
}

// 8-bit PGM (P5) of a max-normalized heatmap.
template <typename T>
std::string encode_pgm(const Tensor<T>& heatmap) {
  std::string out =
      "P5\n" + std::to_string(heatmap.w) + " " + std::to_string(heatmap.h) + "\n255\n";
  for (int y = 0; y < heatmap.h; ++y)
    for (int x = 0; x < heatmap.w; ++x) {
      const double v = std::clamp(static_cast<double>(heatmap.at(0, 0, y, x)), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255))));
    }
  return out;
}

}  // namespace ffsd
