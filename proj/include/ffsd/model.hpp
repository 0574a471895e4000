// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ffsd/fusion.hpp"
#include "ffsd/layers.hpp"
#include "ffsd/multibox_loss.hpp"
#include "ffsd/nms.hpp"
#include "ffsd/priors.hpp"
#include "ffsd/rng.hpp"
#include "ffsd/tape.hpp"

namespace ffsd {

// Desk-scale stand-in for the usual VGG trunk: four 3x3 stages with 2x2
// pools, a wider conv5 stage, a dilated fc6 stage at the same resolution, and
// one strided stage for the largest prior scale. Taps (input 96):
//   conv3a 24x24, conv4a 12x12, conv5a 6x6, fc6a 6x6 (dilation 2), conv7a 3x3.
struct ModelConfig {
  int input_size = 96;
  int num_categories = 4;
  std::vector<int> stage_channels = {16, 32, 64, 64};
  int conv5_channels = 128;
  int fc6_channels = 128;
  int conv7_channels = 128;
  FusionConfig fusion;

  // Prediction taps. "auto" resolves to the fused map when fusion is on and
  // to raw conv4a otherwise, which is the baseline-vs-fused A/B switch.
  std::vector<std::string> pred_sources = {"auto", "fc6a", "conv7a"};
  std::vector<double> tap_scales = {0.1, 0.35, 0.65};
  double scale_boundary = 0.95;
  std::vector<std::vector<double>> tap_ratios = {
      {1.0, 2.0, 0.5}, {1.0, 2.0, 0.5, 3.0, 1.0 / 3.0}, {1.0, 2.0, 0.5, 3.0, 1.0 / 3.0}};

  Variances variances;
  double match_threshold = 0.5;
  int neg_pos_ratio = 3;
  double score_threshold = 0.01;
  double nms_iou_threshold = 0.45;
  int nms_top_k = 200;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (input_size < 32 || input_size % 32 != 0)
      throw std::invalid_argument("ModelConfig: input_size must be a positive multiple of 32");
    if (num_categories < 1) throw std::invalid_argument("ModelConfig: need >= 1 category");
    if (stage_channels.size() != 4)
      throw std::invalid_argument("ModelConfig: expected 4 stage channel counts");
    for (int c : stage_channels)
      if (c < 1) throw std::invalid_argument("ModelConfig: stage channels must be >= 1");
    if (pred_sources.empty() || pred_sources.size() != tap_scales.size() ||
        pred_sources.size() != tap_ratios.size())
      throw std::invalid_argument("ModelConfig: pred tap lists must have equal length");
    for (std::size_t i = 0; i < tap_ratios.size(); ++i)
      if (tap_ratios[i].empty())
        throw std::invalid_argument("ModelConfig: every prediction tap needs >= 1 prior shape");
    for (std::size_t i = 1; i < tap_scales.size(); ++i)
      if (tap_scales[i] <= tap_scales[i - 1])
        throw std::invalid_argument("ModelConfig: prior scales must strictly increase");
  }

  int tap_fmap(const std::string& name) const {
    if (name == "conv3a") return input_size / 4;
    if (name == "conv4a" || name == "fused") return input_size / 8;
    if (name == "conv5a" || name == "fc6a") return input_size / 16;
    if (name == "conv7a") return input_size / 32;
    throw std::invalid_argument("unknown tap '" + name + "'");
  }

  std::string resolve_source(const std::string& src) const {
    if (src != "auto") return src;
    return fusion.mode == FusionMode::none ? std::string("conv4a") : std::string("fused");
  }
};

template <typename T>
class SsdModel {
 public:
  SsdModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(init_seed);
    build(rng);
    priors_ = generate_priors(prior_taps(), cfg_.variances);
  }

  const ModelConfig& config() const { return cfg_; }
  const PriorSet& priors() const { return priors_; }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& p : owned_) out.push_back(p.get());
    if (fusion_) {
      auto fps = fusion_->params();
      out.insert(out.end(), fps.begin(), fps.end());
    }
    for (auto& p : head_owned_) out.push_back(p.get());
    return out;
  }

  Param<T>* find_param(const std::string& name) {
    for (Param<T>* p : params())
      if (p->name == name) return p;
    return nullptr;
  }

  struct Forward {
    Node<T>* input = nullptr;
    std::map<std::string, Node<T>*> taps;
    FusionOut<T> fusion;
    std::vector<Node<T>*> conf_nodes, loc_nodes;
  };

  Forward forward(Tape<T>& tape, const Tensor<T>& image) {
    if (image.c != 3 || image.h != cfg_.input_size || image.w != cfg_.input_size)
      throw std::invalid_argument("forward: image shape " + image.shape_str() +
                                  " does not match input size " +
                                  std::to_string(cfg_.input_size));
    Forward f;
    f.input = tape.leaf(image);
    Node<T>* x = stage(tape, f.input, 0);
    x = maxpool2(tape, x);
    x = stage(tape, x, 1);
    x = maxpool2(tape, x);
    x = stage(tape, x, 2);
    f.taps["conv3a"] = x;
    x = maxpool2(tape, x);
    x = stage(tape, x, 3);
    f.taps["conv4a"] = x;
    x = maxpool2(tape, x);
    x = stage(tape, x, 4);
    f.taps["conv5a"] = x;
    x = stage(tape, x, 5);
    f.taps["fc6a"] = x;
    x = stage(tape, x, 6);
    f.taps["conv7a"] = x;

    if (fusion_) {
      std::vector<Node<T>*> inputs;
      for (const auto& tap : cfg_.fusion.taps) inputs.push_back(f.taps.at(tap));
      f.fusion = cfg_.fusion.mode == FusionMode::concat
                     ? concat_fusion_forward(tape, inputs, *fusion_)
                     : eltsum_fusion_forward(tape, inputs, *fusion_);
      f.taps["fused"] = f.fusion.out;
    }

    for (std::size_t t = 0; t < cfg_.pred_sources.size(); ++t) {
      Node<T>* src = f.taps.at(cfg_.resolve_source(cfg_.pred_sources[t]));
      f.conf_nodes.push_back(
          conv2d(tape, src, head_specs_[t].first, *head_owned_[4 * t + 0], head_owned_[4 * t + 1].get()));
      f.loc_nodes.push_back(
          conv2d(tape, src, head_specs_[t].second, *head_owned_[4 * t + 2], head_owned_[4 * t + 3].get()));
    }
    return f;
  }

  // Head outputs in PriorSet order: conf (1,1,P,C+1), loc (1,1,P,4). The cell
  // layout within a head tensor is channel = shape * K + k.
  void flatten_heads(const Forward& f, Tensor<T>* conf, Tensor<T>* loc) const {
    const int K = cfg_.num_categories + 1;
    const int P = priors_.count();
    *conf = Tensor<T>(1, 1, P, K);
    *loc = Tensor<T>(1, 1, P, 4);
    for (std::size_t t = 0; t < f.conf_nodes.size(); ++t) {
      const Tensor<T>& cv = f.conf_nodes[t]->value;
      const Tensor<T>& lv = f.loc_nodes[t]->value;
      const int S = shapes_per_tap_[t];
      int row = priors_.tap_offsets[t];
      for (int y = 0; y < cv.h; ++y)
        for (int x = 0; x < cv.w; ++x)
          for (int s = 0; s < S; ++s, ++row) {
            for (int k = 0; k < K; ++k) conf->data[row * K + k] = cv.at(0, s * K + k, y, x);
            for (int k = 0; k < 4; ++k) loc->data[row * 4 + k] = lv.at(0, s * 4 + k, y, x);
          }
    }
  }

  // Routes flat per-prior gradients back onto the head output nodes.
  void seed_head_grads(Tape<T>& tape, Forward& f, const Tensor<T>& dconf,
                       const Tensor<T>& dloc) const {
    const int K = cfg_.num_categories + 1;
    for (std::size_t t = 0; t < f.conf_nodes.size(); ++t) {
      Tensor<T> gc = Tensor<T>::zeros_like(f.conf_nodes[t]->value);
      Tensor<T> gl = Tensor<T>::zeros_like(f.loc_nodes[t]->value);
      const int S = shapes_per_tap_[t];
      int row = priors_.tap_offsets[t];
      for (int y = 0; y < gc.h; ++y)
        for (int x = 0; x < gc.w; ++x)
          for (int s = 0; s < S; ++s, ++row) {
            for (int k = 0; k < K; ++k) gc.at(0, s * K + k, y, x) = dconf.data[row * K + k];
            for (int k = 0; k < 4; ++k) gl.at(0, s * 4 + k, y, x) = dloc.data[row * 4 + k];
          }
      tape.seed(f.conf_nodes[t], gc);
      tape.seed(f.loc_nodes[t], gl);
    }
  }

  // Full inference path: forward, per-prior softmax, decode against priors,
  // score threshold, per-category NMS, global top_k. Deterministic.
  std::vector<Detection> detect(const Tensor<T>& image) {
    Tape<T> tape;
    Forward f = forward(tape, image);
    Tensor<T> conf, loc;
    flatten_heads(f, &conf, &loc);
    return decode_detections(conf, loc);
  }

  std::vector<Detection> decode_detections(const Tensor<T>& conf, const Tensor<T>& loc) const {
    const int K = cfg_.num_categories + 1;
    const int P = priors_.count();
    std::vector<std::vector<Detection>> per_cat(cfg_.num_categories);
    std::vector<T> prob(K);
    for (int p = 0; p < P; ++p) {
      const T* row = conf.ptr() + static_cast<std::size_t>(p) * K;
      T mx = row[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
      T sum{};
      for (int k = 0; k < K; ++k) {
        prob[k] = std::exp(row[k] - mx);
        sum += prob[k];
      }
      for (int k = 0; k < K; ++k) prob[k] /= sum;
      Box decoded;
      bool have_box = false;
      for (int c = 0; c < cfg_.num_categories; ++c) {
        if (prob[c] <= static_cast<T>(cfg_.score_threshold)) continue;
        if (!have_box) {
          const T* lrow = loc.ptr() + static_cast<std::size_t>(p) * 4;
          decoded = clip_unit(decode_box({static_cast<double>(lrow[0]), static_cast<double>(lrow[1]),
                                          static_cast<double>(lrow[2]), static_cast<double>(lrow[3])},
                                         priors_.boxes[p], priors_.variances));
          have_box = true;
        }
        if (decoded.width() <= 0 || decoded.height() <= 0) continue;
        per_cat[c].push_back({c, static_cast<double>(prob[c]), decoded});
      }
    }
    std::vector<Detection> all;
    for (int c = 0; c < cfg_.num_categories; ++c) {
      auto kept = nms(per_cat[c], cfg_.nms_iou_threshold, cfg_.nms_top_k);
      all.insert(all.end(), kept.begin(), kept.end());
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (static_cast<int>(all.size()) > cfg_.nms_top_k) all.resize(cfg_.nms_top_k);
    return all;
  }

  std::vector<PriorTapSpec> prior_taps() const {
    std::vector<PriorTapSpec> taps;
    for (std::size_t t = 0; t < cfg_.pred_sources.size(); ++t) {
      PriorTapSpec spec;
      spec.source = cfg_.resolve_source(cfg_.pred_sources[t]);
      spec.fmap = cfg_.tap_fmap(spec.source);
      spec.scale = cfg_.tap_scales[t];
      spec.scale_next =
          t + 1 < cfg_.tap_scales.size() ? cfg_.tap_scales[t + 1] : cfg_.scale_boundary;
      spec.ratios = cfg_.tap_ratios[t];
      taps.push_back(std::move(spec));
    }
    return taps;
  }

 private:
  Node<T>* stage(Tape<T>& tape, Node<T>* x, int i) {
    Node<T>* y = conv2d(tape, x, stage_specs_[i], *owned_[2 * i], owned_[2 * i + 1].get());
    return relu(tape, y);
  }

  int tap_channels(const std::string& name) const {
    if (name == "conv3a") return cfg_.stage_channels[2];
    if (name == "conv4a") return cfg_.stage_channels[3];
    if (name == "conv5a") return cfg_.conv5_channels;
    if (name == "fc6a") return cfg_.fc6_channels;
    if (name == "conv7a") return cfg_.conv7_channels;
    if (name == "fused")
      return cfg_.fusion.mode == FusionMode::concat ? cfg_.fusion.effective_reduce_kernels()
                                                    : cfg_.fusion.effective_branch_kernels();
    throw std::invalid_argument("unknown tap '" + name + "'");
  }

  void build(Rng& rng) {
    const auto& sc = cfg_.stage_channels;
    const int names_n = 7;
    const char* names[names_n] = {"conv1", "conv2", "conv3", "conv4", "conv5", "fc6", "conv7"};
    const int in_ch[names_n] = {3, sc[0], sc[1], sc[2], sc[3], cfg_.conv5_channels,
                                cfg_.fc6_channels};
    const int out_ch[names_n] = {sc[0], sc[1], sc[2], sc[3], cfg_.conv5_channels,
                                 cfg_.fc6_channels, cfg_.conv7_channels};
    for (int i = 0; i < names_n; ++i) {
      Conv2dSpec spec{in_ch[i], out_ch[i], 3, 3, 1, 1, 1, 1, 1, 1, true};
      if (i == 5) spec.dh = spec.dw = 2, spec.ph = spec.pw = 2;  // dilated fc6 analog
      if (i == 6) spec.sh = spec.sw = 2;                         // stride to the 3x3 tap
      stage_specs_.push_back(spec);
      owned_.push_back(std::make_unique<Param<T>>(
          std::string("backbone.") + names[i] + ".w",
          xavier_tensor<T>(out_ch[i], in_ch[i], 3, 3, rng)));
      owned_.push_back(std::make_unique<Param<T>>(std::string("backbone.") + names[i] + ".b",
                                                  Tensor<T>(out_ch[i], 1, 1, 1)));
    }

    if (cfg_.fusion.mode != FusionMode::none) {
      std::vector<int> channels, octaves;
      const int anchor_fmap = cfg_.tap_fmap("conv4a");
      for (const auto& tap : cfg_.fusion.taps) {
        channels.push_back(tap_channels(tap));
        octaves.push_back(fusion_octave(anchor_fmap, anchor_fmap, cfg_.tap_fmap(tap),
                                        cfg_.tap_fmap(tap)));
      }
      fusion_ = std::make_unique<FusionParams<T>>(
          make_fusion_params<T>(cfg_.fusion, channels, octaves, rng));
    }

    const int K = cfg_.num_categories + 1;
    for (std::size_t t = 0; t < cfg_.pred_sources.size(); ++t) {
      const std::string src = cfg_.resolve_source(cfg_.pred_sources[t]);
      const int S = static_cast<int>(cfg_.tap_ratios[t].size()) + 1;
      shapes_per_tap_.push_back(S);
      const int ch = tap_channels(src);
      Conv2dSpec conf_spec{ch, S * K, 3, 3, 1, 1, 1, 1, 1, 1, true};
      Conv2dSpec loc_spec{ch, S * 4, 3, 3, 1, 1, 1, 1, 1, 1, true};
      head_specs_.push_back({conf_spec, loc_spec});
      head_owned_.push_back(std::make_unique<Param<T>>(
          "head." + src + ".conf.w", xavier_tensor<T>(S * K, ch, 3, 3, rng)));
      head_owned_.push_back(
          std::make_unique<Param<T>>("head." + src + ".conf.b", Tensor<T>(S * K, 1, 1, 1)));
      head_owned_.push_back(std::make_unique<Param<T>>(
          "head." + src + ".loc.w", xavier_tensor<T>(S * 4, ch, 3, 3, rng)));
      head_owned_.push_back(
          std::make_unique<Param<T>>("head." + src + ".loc.b", Tensor<T>(S * 4, 1, 1, 1)));
    }
  }

  ModelConfig cfg_;
  PriorSet priors_;
  std::vector<Conv2dSpec> stage_specs_;
  std::vector<std::unique_ptr<Param<T>>> owned_;
  std::unique_ptr<FusionParams<T>> fusion_;
  std::vector<std::pair<Conv2dSpec, Conv2dSpec>> head_specs_;
  std::vector<std::unique_ptr<Param<T>>> head_owned_;
  std::vector<int> shapes_per_tap_;
};

}  // namespace ffsd
