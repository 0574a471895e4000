// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ffsd/layers.hpp"
#include "ffsd/rng.hpp"
#include "ffsd/tape.hpp"
#include "ffsd/tensor.hpp"

namespace ffsd {

enum class FusionMode { none, concat, eltsum };

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::concat: return "concat";
    case FusionMode::eltsum: return "eltsum";
    default: return "none";
  }
}

struct FusionConfig {
  FusionMode mode = FusionMode::none;
  int branch_kernels = 0;  // 0 -> mode default (512 concat, 384 eltsum)
  int reduce_kernels = 0;  // concat only; 0 -> branch_kernels
  double norm_scale_shallow = 10.0;
  double norm_scale_deep = 20.0;
  bool deconv_trainable = true;
  // First tap is the anchor: the fused map comes out at its resolution and
  // replaces it as the smallest-scale prediction source.
  std::vector<std::string> taps = {"conv4a", "conv5a"};

  int effective_branch_kernels() const {
    if (branch_kernels > 0) return branch_kernels;
    return mode == FusionMode::eltsum ? 384 : 512;
  }
  int effective_reduce_kernels() const {
    return reduce_kernels > 0 ? reduce_kernels : effective_branch_kernels();
  }

  bool operator==(const FusionConfig&) const = default;
};

// Octave of a branch relative to the anchor tap: 0 same resolution, +k means
// the branch input is 2^k smaller (upsampled by deconvs), -k means 2^k larger
// (downsampled by a strided branch conv).
inline int fusion_octave(int anchor_h, int anchor_w, int h, int w) {
  auto octave_1d = [](int anchor, int dim) -> int {
    if (dim == anchor) return 0;
    if (dim < anchor) {
      int o = 0, v = dim;
      while (v < anchor) { v *= 2; ++o; }
      if (v != anchor) return INT32_MIN;
      return o;
    }
    int o = 0, v = anchor;
    while (v < dim) { v *= 2; ++o; }
    if (v != dim) return INT32_MIN;
    return -o;
  };
  const int oy = octave_1d(anchor_h, h), ox = octave_1d(anchor_w, w);
  if (oy == INT32_MIN || ox == INT32_MIN || oy != ox)
    throw std::invalid_argument("fusion: branch spatial size is not a power-of-two factor of "
                                "the anchor tap");
  return oy;
}

// Parameters of one fusion module instance, built for a fixed list of branch
// input channel counts and octaves.
template <typename T>
struct FusionParams {
  struct Branch {
    std::vector<std::unique_ptr<Param<T>>> deconvs;  // one per deeper octave
    std::unique_ptr<Param<T>> conv_w, conv_b;
    std::unique_ptr<Param<T>> norm_scale;
    Deconv2dSpec deconv_spec;
    Conv2dSpec conv_spec;
    L2NormSpec norm_spec;
    int octave = 0;
  };
  std::vector<Branch> branches;
  std::unique_ptr<Param<T>> reduce_w, reduce_b;  // concat mode only
  Conv2dSpec reduce_spec;
  FusionConfig cfg;

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& b : branches) {
      for (auto& d : b.deconvs) out.push_back(d.get());
      out.push_back(b.conv_w.get());
      out.push_back(b.conv_b.get());
      out.push_back(b.norm_scale.get());
    }
    if (reduce_w) out.push_back(reduce_w.get());
    if (reduce_b) out.push_back(reduce_b.get());
    return out;
  }
};

template <typename T>
Tensor<T> xavier_tensor(int n, int c, int h, int w, Rng& rng) {
  const double fan_in = static_cast<double>(c) * h * w;
  const double fan_out = static_cast<double>(n) * h * w;
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform_real(-a, a));
  return t;
}

// All newly added parameters are Xavier-initialized except the deconvs
// (bilinear tent on the channel diagonal) and the norm scales (constants).
template <typename T>
FusionParams<T> make_fusion_params(const FusionConfig& cfg,
                                   const std::vector<int>& branch_channels,
                                   const std::vector<int>& branch_octaves, Rng& rng) {
  if (cfg.mode == FusionMode::none)
    throw std::invalid_argument("make_fusion_params: mode is none");
  if (branch_channels.size() != branch_octaves.size() || branch_channels.size() < 2)
    throw std::invalid_argument("make_fusion_params: need >= 2 branches");
  const int bk = cfg.effective_branch_kernels();
  FusionParams<T> fp;
  fp.cfg = cfg;
  for (std::size_t i = 0; i < branch_channels.size(); ++i) {
    typename FusionParams<T>::Branch br;
    br.octave = branch_octaves[i];
    const int ch = branch_channels[i];
    const std::string prefix = "fusion.branch" + std::to_string(i);
    if (br.octave > 0) {
      br.deconv_spec = Deconv2dSpec{ch, ch, 4, 4, 2, 2, 1, 1, cfg.deconv_trainable};
      for (int d = 0; d < br.octave; ++d)
        br.deconvs.push_back(std::make_unique<Param<T>>(
            prefix + ".deconv" + std::to_string(d) + ".w", bilinear_init<T>(4, 4, ch)));
    }
    const int stride = br.octave < 0 ? (1 << -br.octave) : 1;
    br.conv_spec = Conv2dSpec{ch, bk, 3, 3, stride, stride, 1, 1, 1, 1, true};
    br.conv_w = std::make_unique<Param<T>>(prefix + ".conv.w",
                                           xavier_tensor<T>(bk, ch, 3, 3, rng));
    br.conv_b = std::make_unique<Param<T>>(prefix + ".conv.b", Tensor<T>(bk, 1, 1, 1));
    br.norm_spec = L2NormSpec{bk, 1e-10};
    const double scale = br.octave > 0 ? cfg.norm_scale_deep : cfg.norm_scale_shallow;
    Tensor<T> sc(bk, 1, 1, 1, static_cast<T>(scale));
    br.norm_scale = std::make_unique<Param<T>>(prefix + ".norm.scale", std::move(sc));
    fp.branches.push_back(std::move(br));
  }
  if (cfg.mode == FusionMode::concat) {
    const int rk = cfg.effective_reduce_kernels();
    const int concat_ch = bk * static_cast<int>(branch_channels.size());
    fp.reduce_spec = Conv2dSpec{concat_ch, rk, 1, 1, 1, 1, 0, 0, 1, 1, true};
    fp.reduce_w = std::make_unique<Param<T>>("fusion.reduce.w",
                                             xavier_tensor<T>(rk, concat_ch, 1, 1, rng));
    fp.reduce_b = std::make_unique<Param<T>>("fusion.reduce.b", Tensor<T>(rk, 1, 1, 1));
  }
  return fp;
}

template <typename T>
struct FusionOut {
  Node<T>* out = nullptr;
  std::vector<Node<T>*> branch_norms;  // post-norm tensors entering the combiner
  Node<T>* pre_reduce = nullptr;       // concatenated map, concat mode only
};

namespace detail {

template <typename T>
Node<T>* fusion_branch(Tape<T>& tape, Node<T>* x, typename FusionParams<T>::Branch& br) {
  Node<T>* cur = x;
  for (auto& d : br.deconvs) cur = deconv2d(tape, cur, br.deconv_spec, *d);
  cur = conv2d(tape, cur, br.conv_spec, *br.conv_w, br.conv_b.get());
  cur = relu(tape, cur);
  return l2norm_scale(tape, cur, br.norm_spec, *br.norm_scale);
}

// Every branch, scaled by its recorded octave, must land on one common
// output resolution; otherwise the spatial ratios are wrong for these params.
template <typename T>
void check_fusion_inputs(const std::vector<Node<T>*>& inputs, const FusionParams<T>& fp) {
  if (inputs.size() != fp.branches.size())
    throw std::invalid_argument("fusion: branch count mismatch");
  int out_h = -1, out_w = -1;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const int o = fp.branches[i].octave;
    int h = inputs[i]->value.h, w = inputs[i]->value.w;
    if (o >= 0) {
      h <<= o;
      w <<= o;
    } else {
      if (h % (1 << -o) != 0 || w % (1 << -o) != 0)
        throw std::invalid_argument("fusion: branch " + std::to_string(i) +
                                    " spatial size is not divisible by its stride");
      h >>= -o;
      w >>= -o;
    }
    if (out_h < 0) {
      out_h = h;
      out_w = w;
    } else if (h != out_h || w != out_w) {
      throw std::invalid_argument("fusion: branch " + std::to_string(i) +
                                  " spatial ratio does not match its parameters");
    }
  }
}

}  // namespace detail

// Concatenation module: per-branch [deconv ->] 3x3 conv -> ReLU -> l2norm,
// channel concat, then 1x1 reduction + ReLU.
template <typename T>
FusionOut<T> concat_fusion_forward(Tape<T>& tape, std::vector<Node<T>*> inputs,
                                   FusionParams<T>& fp) {
  if (fp.cfg.mode != FusionMode::concat)
    throw std::invalid_argument("concat_fusion_forward: mode mismatch");
  detail::check_fusion_inputs(inputs, fp);
  FusionOut<T> res;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    res.branch_norms.push_back(detail::fusion_branch(tape, inputs[i], fp.branches[i]));
  Node<T>* cat = res.branch_norms[0];
  for (std::size_t i = 1; i < res.branch_norms.size(); ++i)
    cat = concat_channels(tape, cat, res.branch_norms[i]);
  res.pre_reduce = cat;
  Node<T>* red = conv2d(tape, cat, fp.reduce_spec, *fp.reduce_w, fp.reduce_b.get());
  res.out = relu(tape, red);
  return res;
}

// Element-sum module: same branches, combined point to point with fixed unit
// weights; no reduction.
template <typename T>
FusionOut<T> eltsum_fusion_forward(Tape<T>& tape, std::vector<Node<T>*> inputs,
                                   FusionParams<T>& fp) {
  if (fp.cfg.mode != FusionMode::eltsum)
    throw std::invalid_argument("eltsum_fusion_forward: mode mismatch");
  detail::check_fusion_inputs(inputs, fp);
  FusionOut<T> res;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    res.branch_norms.push_back(detail::fusion_branch(tape, inputs[i], fp.branches[i]));
  Node<T>* sum = res.branch_norms[0];
  for (std::size_t i = 1; i < res.branch_norms.size(); ++i)
    sum = eltwise_sum(tape, sum, res.branch_norms[i]);
  res.out = relu(tape, sum);
  return res;
}

// ---------------------------------------------------------------------------
// Closed-form parameter and multiply-add counts for the module.
// ---------------------------------------------------------------------------

struct FusionCost {
  std::int64_t param_count = 0;
  std::int64_t mult_add_count = 0;
};

struct TapShape {
  int c = 0, h = 0, w = 0;
};

// Counts every layer the module adds: branch convs, deconvs, the 1x1
// reduction (concat only), and the norms at c mults per location. `octaves`
// are relative to the output resolution (positive = deeper).
inline FusionCost fusion_cost(const FusionConfig& cfg, const std::vector<TapShape>& inputs,
                              const std::vector<int>& octaves) {
  if (cfg.mode == FusionMode::none || inputs.size() < 2) return {};
  const int bk = cfg.effective_branch_kernels();
  std::int64_t anchor_hw = static_cast<std::int64_t>(inputs[0].h) * inputs[0].w;
  if (octaves[0] > 0) anchor_hw <<= 2 * octaves[0];
  if (octaves[0] < 0) anchor_hw >>= 2 * -octaves[0];
  FusionCost cost;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const int o = octaves[i];
    const std::int64_t ch = inputs[i].c;
    std::int64_t hw = static_cast<std::int64_t>(inputs[i].h) * inputs[i].w;
    for (int d = 0; d < o; ++d) {
      cost.param_count += ch * ch * 16;       // deconv k4, no bias
      cost.mult_add_count += hw * ch * ch * 16;  // every input tap fans into 16 outputs
      hw *= 4;
    }
    cost.param_count += static_cast<std::int64_t>(bk) * ch * 9 + bk;  // 3x3 conv
    cost.mult_add_count += anchor_hw * bk * ch * 9;
    cost.param_count += bk;                    // norm scale
    cost.mult_add_count += anchor_hw * bk;     // c mults per location
  }
  if (cfg.mode == FusionMode::concat) {
    const std::int64_t rk = cfg.effective_reduce_kernels();
    const std::int64_t concat_ch = static_cast<std::int64_t>(bk) * inputs.size();
    cost.param_count += rk * concat_ch + rk;
    cost.mult_add_count += anchor_hw * rk * concat_ch;
  }
  return cost;
}

// Convenience form with the first input taken as the anchor resolution.
inline FusionCost fusion_cost(const FusionConfig& cfg, const std::vector<TapShape>& inputs) {
  if (cfg.mode == FusionMode::none || inputs.size() < 2) return {};
  std::vector<int> octaves;
  for (const auto& in : inputs)
    octaves.push_back(fusion_octave(inputs[0].h, inputs[0].w, in.h, in.w));
  return fusion_cost(cfg, inputs, octaves);
}

}  // namespace ffsd
