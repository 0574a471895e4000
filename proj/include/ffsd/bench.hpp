// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>

#include "ffsd/model.hpp"
#include "ffsd/scene.hpp"

namespace ffsd {

struct ModelCost {
  std::int64_t param_count = 0;
  std::int64_t mult_adds = 0;
};

// Closed-form single-image inference cost: backbone convs, fusion module,
// prediction heads. Norm layers are counted at c mults per location inside
// fusion_cost; pools/ReLU/softmax are not multiply-adds.
inline ModelCost model_cost(const ModelConfig& cfg) {
  cfg.validate();
  ModelCost cost;
  auto conv = [&](std::int64_t out_hw, std::int64_t cin, std::int64_t cout, std::int64_t k2) {
    cost.param_count += cout * cin * k2 + cout;
    cost.mult_adds += out_hw * cout * cin * k2;
  };
  const std::int64_t s = cfg.input_size;
  const auto& sc = cfg.stage_channels;
  conv(s * s, 3, sc[0], 9);
  conv((s / 2) * (s / 2), sc[0], sc[1], 9);
  conv((s / 4) * (s / 4), sc[1], sc[2], 9);
  conv((s / 8) * (s / 8), sc[2], sc[3], 9);
  conv((s / 16) * (s / 16), sc[3], cfg.conv5_channels, 9);
  conv((s / 16) * (s / 16), cfg.conv5_channels, cfg.fc6_channels, 9);
  conv((s / 32) * (s / 32), cfg.fc6_channels, cfg.conv7_channels, 9);

  if (cfg.fusion.mode != FusionMode::none) {
    auto tap_ch = [&](const std::string& n) {
      if (n == "conv3a") return sc[2];
      if (n == "conv4a") return sc[3];
      if (n == "conv5a") return cfg.conv5_channels;
      if (n == "fc6a") return cfg.fc6_channels;
      if (n == "conv7a") return cfg.conv7_channels;
      throw std::invalid_argument("model_cost: unknown fusion tap '" + n + "'");
    };
    // the fused output always takes conv4a's resolution
    const int anchor_fmap = cfg.tap_fmap("conv4a");
    std::vector<TapShape> shapes;
    std::vector<int> octaves;
    for (const auto& tap : cfg.fusion.taps) {
      const int f = cfg.tap_fmap(tap);
      shapes.push_back({tap_ch(tap), f, f});
      octaves.push_back(fusion_octave(anchor_fmap, anchor_fmap, f, f));
    }
    const FusionCost fc = fusion_cost(cfg.fusion, shapes, octaves);
    cost.param_count += fc.param_count;
    cost.mult_adds += fc.mult_add_count;
  }

  const int K = cfg.num_categories + 1;
  for (std::size_t t = 0; t < cfg.pred_sources.size(); ++t) {
    const std::string src = cfg.resolve_source(cfg.pred_sources[t]);
    const std::int64_t f = cfg.tap_fmap(src);
    const std::int64_t S = static_cast<std::int64_t>(cfg.tap_ratios[t].size()) + 1;
    std::int64_t ch;
    if (src == "fused")
      ch = cfg.fusion.mode == FusionMode::concat ? cfg.fusion.effective_reduce_kernels()
                                                 : cfg.fusion.effective_branch_kernels();
    else if (src == "conv4a")
      ch = sc[3];
    else if (src == "fc6a")
      ch = cfg.fc6_channels;
    else if (src == "conv7a")
      ch = cfg.conv7_channels;
    else if (src == "conv5a")
      ch = cfg.conv5_channels;
    else if (src == "conv3a")
      ch = sc[2];
    else
      throw std::invalid_argument("model_cost: unknown head source '" + src + "'");
    conv(f * f, ch, S * K, 9);
    conv(f * f, ch, S * 4, 9);
  }
  return cost;
}

struct BenchResult {
  double images_per_sec = 0;
  std::int64_t param_count = 0;
  std::int64_t mult_adds = 0;
};

// Wall-clock inference throughput on generated scenes, pinned to a single
// worker so modes stay comparable, plus the closed-form cost.
inline BenchResult bench(const ModelConfig& cfg, int n_images, int warmup,
                         std::uint64_t seed = 42) {
  if (n_images < 1) throw std::invalid_argument("bench: need n_images >= 1");
  SsdModel<float> model(cfg, seed);
  SceneSpec scene_spec;
  scene_spec.canvas = cfg.input_size;
  std::vector<Tensor<float>> images;
  const int distinct = std::min(n_images, 16);
  for (int i = 0; i < distinct; ++i)
    images.push_back(to_tensor<float>(gen_scene(seed + 1000 + i, scene_spec).image));

  for (int i = 0; i < warmup; ++i) (void)model.detect(images[i % distinct]);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n_images; ++i) (void)model.detect(images[i % distinct]);
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();

  const ModelCost cost = model_cost(cfg);
  return {n_images / std::max(secs, 1e-9), cost.param_count, cost.mult_adds};
}

}  // namespace ffsd
