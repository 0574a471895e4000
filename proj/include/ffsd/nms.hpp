// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "ffsd/box.hpp"

namespace ffsd {

// Greedy per-category suppression: walk detections by descending score
// (stable on input order for ties) and drop any box overlapping an already
// kept box by more than the threshold. Keeps at most top_k.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold = 0.45,
                                  int top_k = 200) {
  std::vector<int> order(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (int idx : order) {
    if (static_cast<int>(kept.size()) >= top_k) break;
    bool suppressed = false;
    for (const auto& k : kept)
      if (iou(dets[idx].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(dets[idx]);
  }
  return kept;
}

}  // namespace ffsd
