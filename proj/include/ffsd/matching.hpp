// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "ffsd/box.hpp"
#include "ffsd/priors.hpp"

namespace ffsd {

struct GroundTruth {
  Box box;           // corner form, normalized
  int category = 0;  // foreground id
  bool small_size = false;
};

// Per-prior training target. category -1 means background.
struct MatchResult {
  std::vector<int> category;
  std::vector<std::array<double, 4>> loc;  // encoded offsets, positives only
  int num_positive = 0;
};

// Two-stage SSD matching: first each ground truth claims its best prior
// (bipartite greedy by descending IoU, each prior used at most once, so every
// gt gets a prior whenever priors exist); then every remaining prior whose
// best overlap exceeds the threshold joins that gt.
inline MatchResult match_priors(const std::vector<GroundTruth>& gts, const PriorSet& priors,
                                double threshold = 0.5) {
  const int P = priors.count();
  const int G = static_cast<int>(gts.size());
  MatchResult res;
  res.category.assign(P, -1);
  res.loc.assign(P, {0, 0, 0, 0});
  if (G == 0 || P == 0) return res;

  std::vector<Box> prior_corner(P);
  for (int p = 0; p < P; ++p) prior_corner[p] = to_corner(priors.boxes[p]);

  std::vector<std::vector<double>> overlap(G, std::vector<double>(P));
  for (int g = 0; g < G; ++g)
    for (int p = 0; p < P; ++p) overlap[g][p] = iou(gts[g].box, prior_corner[p]);

  std::vector<int> assigned_gt(P, -1);
  std::vector<bool> gt_done(G, false);
  for (int round = 0; round < G; ++round) {
    int best_g = -1, best_p = -1;
    double best = -1.0;
    for (int g = 0; g < G; ++g) {
      if (gt_done[g]) continue;
      for (int p = 0; p < P; ++p) {
        if (assigned_gt[p] >= 0) continue;
        if (overlap[g][p] > best) {
          best = overlap[g][p];
          best_g = g;
          best_p = p;
        }
      }
    }
    if (best_g < 0) break;
    gt_done[best_g] = true;
    assigned_gt[best_p] = best_g;
  }

  for (int p = 0; p < P; ++p) {
    if (assigned_gt[p] >= 0) continue;
    int best_g = -1;
    double best = threshold;
    for (int g = 0; g < G; ++g)
      if (overlap[g][p] > best) {
        best = overlap[g][p];
        best_g = g;
      }
    if (best_g >= 0) assigned_gt[p] = best_g;
  }

  for (int p = 0; p < P; ++p) {
    const int g = assigned_gt[p];
    if (g < 0) continue;
    res.category[p] = gts[g].category;
    res.loc[p] = encode_box(gts[g].box, priors.boxes[p], priors.variances);
    ++res.num_positive;
  }
  return res;
}

}  // namespace ffsd
