// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ffsd/matching.hpp"
#include "ffsd/tensor.hpp"

namespace ffsd {

// Confidence logits as (1,1,P,C+1) and localization predictions as (1,1,P,4),
// both in PriorSet order. Class index C (the last one) is background.
template <typename T>
struct MultiboxInputs {
  const Tensor<T>* conf = nullptr;
  const Tensor<T>* loc = nullptr;
  const MatchResult* targets = nullptr;
};

template <typename T>
struct MultiboxImageGrads {
  Tensor<T> dconf;  // unnormalized; caller scales by 1/N
  Tensor<T> dloc;
};

template <typename T>
struct MultiboxResult {
  T loss = T{};
  int num_positive = 0;
  int num_selected_negative = 0;
  std::vector<MultiboxImageGrads<T>> grads;  // per image, scaled by 1/N already
};

namespace detail {

template <typename T>
inline T smooth_l1(T d) {
  const T a = std::abs(d);
  return a < T(1) ? T(0.5) * d * d : a - T(0.5);
}

template <typename T>
inline T smooth_l1_grad(T d) {
  if (d > T(1)) return T(1);
  if (d < T(-1)) return T(-1);
  return d;
}

// log-softmax of one logit row, written into out; returns nothing.
template <typename T>
inline void log_softmax_row(const T* logits, int k, T* out) {
  T mx = logits[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  T sum{};
  for (int i = 0; i < k; ++i) sum += std::exp(logits[i] - mx);
  const T lse = mx + std::log(sum);
  for (int i = 0; i < k; ++i) out[i] = logits[i] - lse;
}

}  // namespace detail

// Hard-negative-mined multibox objective over a batch:
//   L = (1/N) * (sum_pos smoothL1(loc - target) + sum_{pos+hardneg} CE(conf))
// with N the total positive count across the batch. Negatives are ranked per
// image by background loss and capped at neg_pos_ratio * positives of that
// image. N == 0 yields zero loss and no gradients (the step is skipped).
template <typename T>
MultiboxResult<T> multibox_loss(const std::vector<MultiboxInputs<T>>& batch,
                                int num_categories, int neg_pos_ratio = 3) {
  const int K = num_categories + 1;
  const int background = num_categories;
  MultiboxResult<T> res;
  for (const auto& img : batch) {
    if (!img.conf || !img.loc || !img.targets)
      throw std::invalid_argument("multibox_loss: null input");
    const int P = static_cast<int>(img.targets->category.size());
    if (img.conf->count() != P * K || img.loc->count() != P * 4)
      throw std::invalid_argument("multibox_loss: tensor lengths misaligned with priors");
    res.num_positive += img.targets->num_positive;
  }
  if (res.num_positive == 0) return res;
  const T inv_n = T(1) / static_cast<T>(res.num_positive);

  std::vector<T> logp;
  for (const auto& img : batch) {
    const int P = static_cast<int>(img.targets->category.size());
    MultiboxImageGrads<T> g;
    g.dconf = Tensor<T>::zeros_like(*img.conf);
    g.dloc = Tensor<T>::zeros_like(*img.loc);
    logp.resize(static_cast<std::size_t>(P) * K);
    for (int p = 0; p < P; ++p)
      detail::log_softmax_row(img.conf->ptr() + static_cast<std::size_t>(p) * K, K,
                              logp.data() + static_cast<std::size_t>(p) * K);

    // rank negatives by background loss, highest first; stable on index
    int n_pos = 0;
    std::vector<std::pair<T, int>> neg;
    for (int p = 0; p < P; ++p) {
      if (img.targets->category[p] >= 0)
        ++n_pos;
      else
        neg.push_back({-logp[static_cast<std::size_t>(p) * K + background], p});
    }
    std::sort(neg.begin(), neg.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const int n_neg = std::min<int>(static_cast<int>(neg.size()), neg_pos_ratio * n_pos);
    res.num_selected_negative += n_neg;

    auto add_conf_term = [&](int p, int target) {
      res.loss += -logp[static_cast<std::size_t>(p) * K + target] * inv_n;
      T* gc = g.dconf.ptr() + static_cast<std::size_t>(p) * K;
      const T* lp = logp.data() + static_cast<std::size_t>(p) * K;
      for (int k = 0; k < K; ++k) gc[k] = (std::exp(lp[k]) - (k == target ? T(1) : T(0))) * inv_n;
    };

    for (int p = 0; p < P; ++p) {
      const int cat = img.targets->category[p];
      if (cat < 0) continue;
      add_conf_term(p, cat);
      const T* lp = img.loc->ptr() + static_cast<std::size_t>(p) * 4;
      T* gl = g.dloc.ptr() + static_cast<std::size_t>(p) * 4;
      for (int k = 0; k < 4; ++k) {
        const T d = lp[k] - static_cast<T>(img.targets->loc[p][k]);
        res.loss += detail::smooth_l1(d) * inv_n;
        gl[k] = detail::smooth_l1_grad(d) * inv_n;
      }
    }
    for (int i = 0; i < n_neg; ++i) add_conf_term(neg[i].second, background);
    res.grads.push_back(std::move(g));
  }
  return res;
}

}  // namespace ffsd
