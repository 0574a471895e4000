// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ffsd/box.hpp"
#include "ffsd/dataset.hpp"
#include "ffsd/model.hpp"
#include "ffsd/threading.hpp"

namespace ffsd {

// Detection in image pixel coordinates, the unit of the on-disk formats.
struct PixelDetection {
  int category = 0;
  double score = 0;
  Box box;
};

// Aligned with Dataset::items.
using DetectionsByImage = std::vector<std::vector<PixelDetection>>;

struct EvalReport {
  std::vector<std::string> categories;
  std::vector<double> ap;         // AP@iou per category, 0 when undefined
  std::vector<int> gt_count;      // ground truths per category
  std::vector<int> gt_count_small;
  std::vector<int> det_count;
  double map = 0;        // mean over categories with >= 1 gt
  double map_small = 0;  // same, ground truths restricted to the small class
};

namespace detail {

// Continuous-area AP from an outcome sequence ordered by descending score:
// +1 = true positive, 0 = false positive, -1 = ignored. Precision envelope is
// made monotone from the right before integrating over recall steps.
inline double average_precision(const std::vector<int>& outcomes, int n_gt) {
  if (n_gt <= 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (int o : outcomes) {
    if (o < 0) continue;
    if (o > 0)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[static_cast<std::size_t>(i)] =
        std::max(precision[static_cast<std::size_t>(i)], precision[static_cast<std::size_t>(i) + 1]);
  double ap = 0, prev_r = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

}  // namespace detail

// VOC-style evaluation at a fixed IoU threshold: detections are matched
// greedily in descending score order, each to the highest-IoU still-unmatched
// ground truth of its image and category. The small-object metric drops
// non-small ground truths and the detections they absorbed, and keeps
// unmatched detections as false positives.
inline EvalReport evaluate(const Dataset& dataset, const DetectionsByImage& detections,
                           double iou_threshold = 0.5) {
  if (detections.size() != dataset.items.size())
    throw std::invalid_argument("evaluate: detections not aligned with dataset items");
  const int C = static_cast<int>(dataset.category_names.size());
  EvalReport rep;
  rep.categories = dataset.category_names;
  rep.ap.assign(C, 0);
  rep.gt_count.assign(C, 0);
  rep.gt_count_small.assign(C, 0);
  rep.det_count.assign(C, 0);

  for (const auto& item : dataset.items)
    for (const auto& a : item.anns) {
      ++rep.gt_count[a.category];
      if (a.small_size) ++rep.gt_count_small[a.category];
    }

  double map_sum = 0, map_small_sum = 0;
  int map_n = 0, map_small_n = 0;
  for (int c = 0; c < C; ++c) {
    struct Entry {
      double score;
      int image, det;
    };
    std::vector<Entry> order;
    for (std::size_t i = 0; i < detections.size(); ++i)
      for (std::size_t d = 0; d < detections[i].size(); ++d)
        if (detections[i][d].category == c)
          order.push_back({detections[i][d].score, static_cast<int>(i), static_cast<int>(d)});
    rep.det_count[c] = static_cast<int>(order.size());
    std::stable_sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.det < b.det;
    });

    std::vector<std::vector<bool>> gt_used(dataset.items.size());
    for (std::size_t i = 0; i < dataset.items.size(); ++i)
      gt_used[i].assign(dataset.items[i].anns.size(), false);

    std::vector<int> outcome_all, outcome_small;
    for (const auto& e : order) {
      const auto& anns = dataset.items[static_cast<std::size_t>(e.image)].anns;
      const Box& db = detections[static_cast<std::size_t>(e.image)][static_cast<std::size_t>(e.det)].box;
      int best_g = -1;
      double best = iou_threshold;
      for (std::size_t g = 0; g < anns.size(); ++g) {
        if (anns[g].category != c || gt_used[static_cast<std::size_t>(e.image)][g]) continue;
        const Box gb{static_cast<double>(anns[g].xmin), static_cast<double>(anns[g].ymin),
                     static_cast<double>(anns[g].xmax), static_cast<double>(anns[g].ymax)};
        const double v = iou(db, gb);
        if (v >= best && (best_g < 0 || v > best)) {
          best = v;
          best_g = static_cast<int>(g);
        }
      }
      if (best_g >= 0) {
        gt_used[static_cast<std::size_t>(e.image)][static_cast<std::size_t>(best_g)] = true;
        outcome_all.push_back(1);
        outcome_small.push_back(
            anns[static_cast<std::size_t>(best_g)].small_size ? 1 : -1);
      } else {
        outcome_all.push_back(0);
        outcome_small.push_back(0);
      }
    }

    rep.ap[c] = detail::average_precision(outcome_all, rep.gt_count[c]);
    if (rep.gt_count[c] > 0) {
      map_sum += rep.ap[c];
      ++map_n;
    }
    if (rep.gt_count_small[c] > 0) {
      map_small_sum += detail::average_precision(outcome_small, rep.gt_count_small[c]);
      ++map_small_n;
    }
  }
  rep.map = map_n ? map_sum / map_n : 0.0;
  rep.map_small = map_small_n ? map_small_sum / map_small_n : 0.0;
  return rep;
}

// Inference over a whole split, parallel over images with a deterministic
// per-image result. Boxes come back in pixel units.
template <typename T>
DetectionsByImage run_detector(SsdModel<T>& model, const Dataset& dataset) {
  DetectionsByImage out(dataset.items.size());
  const double s = model.config().input_size;
  parallel_for(static_cast<int>(dataset.items.size()), [&](int i) {
    const auto dets = model.detect(to_tensor<T>(dataset.items[static_cast<std::size_t>(i)].image));
    for (const auto& d : dets)
      out[static_cast<std::size_t>(i)].push_back(
          {d.category, d.score,
           {d.box.xmin * s, d.box.ymin * s, d.box.xmax * s, d.box.ymax * s}});
  });
  return out;
}

inline std::string format_report(const EvalReport& rep) {
  std::string out;
  char buf[128];
  for (std::size_t c = 0; c < rep.categories.size(); ++c) {
    std::snprintf(buf, sizeof(buf), "%s\t%.6f\n", rep.categories[c].c_str(), rep.ap[c]);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "mAP\t%.6f\nmAP_small\t%.6f\n", rep.map, rep.map_small);
  out += buf;
  return out;
}

// Text interchange: image_id <TAB> category <TAB> score <TAB> xmin ymin xmax ymax
inline std::string format_detection_lines(const std::string& image_id,
                                          const std::vector<PixelDetection>& dets,
                                          const std::vector<std::string>& category_names) {
  std::string out;
  char buf[256];
  for (const auto& d : dets) {
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%.6f\t%.6f %.6f %.6f %.6f\n", image_id.c_str(),
                  category_names[static_cast<std::size_t>(d.category)].c_str(), d.score,
                  d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax);
    out += buf;
  }
  return out;
}

inline DetectionsByImage parse_detection_lines(const std::string& text, const Dataset& dataset,
                                               const std::string& origin) {
  std::map<std::string, int> image_index, category_index;
  for (std::size_t i = 0; i < dataset.items.size(); ++i)
    image_index[dataset.items[i].image_path] = static_cast<int>(i);
  for (std::size_t c = 0; c < dataset.category_names.size(); ++c)
    category_index[dataset.category_names[c]] = static_cast<int>(c);

  DetectionsByImage out(dataset.items.size());
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = origin + ":" + std::to_string(line_no);
    if (fields.size() != 4) throw IoError(where + ": expected 4 tab-separated fields");
    auto img = image_index.find(fields[0]);
    if (img == image_index.end()) throw IoError(where + ": unknown image id '" + fields[0] + "'");
    auto cat = category_index.find(fields[1]);
    if (cat == category_index.end())
      throw IoError(where + ": unknown category name '" + fields[1] + "'");
    PixelDetection d;
    d.category = cat->second;
    std::istringstream rest(fields[2] + " " + fields[3]);
    if (!(rest >> d.score >> d.box.xmin >> d.box.ymin >> d.box.xmax >> d.box.ymax))
      throw IoError(where + ": malformed score/box");
    out[static_cast<std::size_t>(img->second)].push_back(d);
  }
  return out;
}

}  // namespace ffsd
