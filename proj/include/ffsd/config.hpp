// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "ffsd/model.hpp"
#include "ffsd/scene.hpp"
#include "ffsd/train.hpp"

namespace ffsd {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct EvalConfig {
  double iou_threshold = 0.5;
  bool operator==(const EvalConfig&) const = default;
};

// The experiment description: `[section]` headers with `key = value` lines,
// `#` comment lines, unknown keys rejected. parse(render(cfg)) == cfg.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SceneSpec data;
  EvalConfig eval;

  bool operator==(const RunConfig&) const = default;
};

namespace cfgdetail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError(where + ": expected a number, got '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& where) {
  long long v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError(where + ": expected an integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(where + ": expected true/false, got '" + s + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p - start));
    if (p == std::string::npos) break;
    start = p + 1;
  }
  return out;
}

template <typename F>
std::string join(std::size_t n, char sep, F&& item) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out.push_back(sep);
    out += item(i);
  }
  return out;
}

inline std::vector<double> parse_doubles(const std::string& s, const std::string& where) {
  std::vector<double> out;
  for (const auto& tok : split(s, ',')) out.push_back(parse_double(tok, where));
  return out;
}

inline std::vector<int> parse_ints(const std::string& s, const std::string& where) {
  std::vector<int> out;
  for (const auto& tok : split(s, ',')) out.push_back(static_cast<int>(parse_int(tok, where)));
  return out;
}

}  // namespace cfgdetail

inline std::string render_config(const RunConfig& cfg) {
  using cfgdetail::fmt_double;
  using cfgdetail::join;
  std::string out;
  const ModelConfig& m = cfg.model;
  out += "[model]\n";
  out += "input_size = " + std::to_string(m.input_size) + "\n";
  out += "num_categories = " + std::to_string(m.num_categories) + "\n";
  out += "stage_channels = " +
         join(m.stage_channels.size(), ',',
              [&](std::size_t i) { return std::to_string(m.stage_channels[i]); }) +
         "\n";
  out += "conv5_channels = " + std::to_string(m.conv5_channels) + "\n";
  out += "fc6_channels = " + std::to_string(m.fc6_channels) + "\n";
  out += "conv7_channels = " + std::to_string(m.conv7_channels) + "\n";
  out += "pred_sources = " +
         join(m.pred_sources.size(), ',', [&](std::size_t i) { return m.pred_sources[i]; }) + "\n";
  out += "tap_scales = " +
         join(m.tap_scales.size(), ',', [&](std::size_t i) { return fmt_double(m.tap_scales[i]); }) +
         "\n";
  out += "scale_boundary = " + fmt_double(m.scale_boundary) + "\n";
  out += "tap_ratios = " +
         join(m.tap_ratios.size(), ';',
              [&](std::size_t t) {
                return join(m.tap_ratios[t].size(), ',',
                            [&](std::size_t i) { return fmt_double(m.tap_ratios[t][i]); });
              }) +
         "\n";
  out += "var_center = " + fmt_double(m.variances.center) + "\n";
  out += "var_size = " + fmt_double(m.variances.size) + "\n";
  out += "match_threshold = " + fmt_double(m.match_threshold) + "\n";
  out += "neg_pos_ratio = " + std::to_string(m.neg_pos_ratio) + "\n";
  out += "score_threshold = " + fmt_double(m.score_threshold) + "\n";
  out += "nms_iou = " + fmt_double(m.nms_iou_threshold) + "\n";
  out += "nms_top_k = " + std::to_string(m.nms_top_k) + "\n";

  const FusionConfig& f = m.fusion;
  out += "\n[fusion]\n";
  out += std::string("mode = ") + fusion_mode_name(f.mode) + "\n";
  out += "branch_kernels = " + std::to_string(f.branch_kernels) + "\n";
  out += "reduce_kernels = " + std::to_string(f.reduce_kernels) + "\n";
  out += "norm_scale_shallow = " + fmt_double(f.norm_scale_shallow) + "\n";
  out += "norm_scale_deep = " + fmt_double(f.norm_scale_deep) + "\n";
  out += std::string("deconv_trainable = ") + (f.deconv_trainable ? "true" : "false") + "\n";
  out += "taps = " + join(f.taps.size(), ',', [&](std::size_t i) { return f.taps[i]; }) + "\n";

  const TrainConfig& t = cfg.train;
  out += "\n[train]\n";
  out += "batch_size = " + std::to_string(t.batch_size) + "\n";
  out += "iterations = " + std::to_string(t.iterations) + "\n";
  out += "milestones = " +
         join(t.milestones.size(), ',',
              [&](std::size_t i) {
                return std::to_string(t.milestones[i].first) + ":" +
                       fmt_double(t.milestones[i].second);
              }) +
         "\n";
  out += "momentum = " + fmt_double(t.momentum) + "\n";
  out += "weight_decay = " + fmt_double(t.weight_decay) + "\n";
  out += "seed = " + std::to_string(t.seed) + "\n";
  out += "fine_tune_from = " + t.fine_tune_from + "\n";
  out += "log_every = " + std::to_string(t.log_every) + "\n";

  const SceneSpec& d = cfg.data;
  out += "\n[data]\n";
  out += "canvas = " + std::to_string(d.canvas) + "\n";
  out += "background_names = " +
         join(d.background_names.size(), ',', [&](std::size_t i) { return d.background_names[i]; }) +
         "\n";
  out += "category_names = " +
         join(d.category_names.size(), ',', [&](std::size_t i) { return d.category_names[i]; }) +
         "\n";
  out += "affinity = " +
         join(d.affinity.size(), ';',
              [&](std::size_t r) {
                return join(d.affinity[r].size(), ',',
                            [&](std::size_t c) { return fmt_double(d.affinity[r][c]); });
              }) +
         "\n";
  out += "min_objects = " + std::to_string(d.min_objects) + "\n";
  out += "max_objects = " + std::to_string(d.max_objects) + "\n";
  out += "p_small = " + fmt_double(d.p_small) + "\n";
  out += "small_min = " + std::to_string(d.small_min) + "\n";
  out += "small_max = " + std::to_string(d.small_max) + "\n";
  out += "large_min = " + std::to_string(d.large_min) + "\n";
  out += "large_max = " + std::to_string(d.large_max) + "\n";
  out += "max_overlap = " + fmt_double(d.max_overlap) + "\n";
  out += "clutter_max = " + std::to_string(d.clutter_max) + "\n";
  out += "noise_amplitude = " + std::to_string(d.noise_amplitude) + "\n";

  out += "\n[eval]\n";
  out += "iou_threshold = " + fmt_double(cfg.eval.iou_threshold) + "\n";
  return out;
}

inline RunConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  using namespace cfgdetail;
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = t.substr(1, t.size() - 2);
      if (section != "model" && section != "fusion" && section != "train" && section != "data" &&
          section != "eval")
        throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key outside any section");
    const std::string ctx = where + " [" + section + "] " + key;

    ModelConfig& m = cfg.model;
    FusionConfig& f = cfg.model.fusion;
    TrainConfig& tr = cfg.train;
    SceneSpec& d = cfg.data;
    if (section == "model") {
      if (key == "input_size") m.input_size = static_cast<int>(parse_int(val, ctx));
      else if (key == "num_categories") m.num_categories = static_cast<int>(parse_int(val, ctx));
      else if (key == "stage_channels") m.stage_channels = parse_ints(val, ctx);
      else if (key == "conv5_channels") m.conv5_channels = static_cast<int>(parse_int(val, ctx));
      else if (key == "fc6_channels") m.fc6_channels = static_cast<int>(parse_int(val, ctx));
      else if (key == "conv7_channels") m.conv7_channels = static_cast<int>(parse_int(val, ctx));
      else if (key == "pred_sources") m.pred_sources = split(val, ',');
      else if (key == "tap_scales") m.tap_scales = parse_doubles(val, ctx);
      else if (key == "scale_boundary") m.scale_boundary = parse_double(val, ctx);
      else if (key == "tap_ratios") {
        m.tap_ratios.clear();
        for (const auto& group : split(val, ';')) m.tap_ratios.push_back(parse_doubles(group, ctx));
      } else if (key == "var_center") m.variances.center = parse_double(val, ctx);
      else if (key == "var_size") m.variances.size = parse_double(val, ctx);
      else if (key == "match_threshold") m.match_threshold = parse_double(val, ctx);
      else if (key == "neg_pos_ratio") m.neg_pos_ratio = static_cast<int>(parse_int(val, ctx));
      else if (key == "score_threshold") m.score_threshold = parse_double(val, ctx);
      else if (key == "nms_iou") m.nms_iou_threshold = parse_double(val, ctx);
      else if (key == "nms_top_k") m.nms_top_k = static_cast<int>(parse_int(val, ctx));
      else throw ConfigError(ctx + ": unknown key");
    } else if (section == "fusion") {
      if (key == "mode") {
        if (val == "none") f.mode = FusionMode::none;
        else if (val == "concat") f.mode = FusionMode::concat;
        else if (val == "eltsum") f.mode = FusionMode::eltsum;
        else throw ConfigError(ctx + ": mode must be none|concat|eltsum");
      } else if (key == "branch_kernels") f.branch_kernels = static_cast<int>(parse_int(val, ctx));
      else if (key == "reduce_kernels") f.reduce_kernels = static_cast<int>(parse_int(val, ctx));
      else if (key == "norm_scale_shallow") f.norm_scale_shallow = parse_double(val, ctx);
      else if (key == "norm_scale_deep") f.norm_scale_deep = parse_double(val, ctx);
      else if (key == "deconv_trainable") f.deconv_trainable = parse_bool(val, ctx);
      else if (key == "taps") f.taps = split(val, ',');
      else throw ConfigError(ctx + ": unknown key");
    } else if (section == "train") {
      if (key == "batch_size") tr.batch_size = static_cast<int>(parse_int(val, ctx));
      else if (key == "iterations") tr.iterations = static_cast<int>(parse_int(val, ctx));
      else if (key == "milestones") {
        tr.milestones.clear();
        for (const auto& tok : split(val, ',')) {
          const auto pair = split(tok, ':');
          if (pair.size() != 2) throw ConfigError(ctx + ": milestones are iter:rate pairs");
          tr.milestones.push_back({static_cast<int>(parse_int(pair[0], ctx)),
                                   parse_double(pair[1], ctx)});
        }
      } else if (key == "momentum") tr.momentum = parse_double(val, ctx);
      else if (key == "weight_decay") tr.weight_decay = parse_double(val, ctx);
      else if (key == "seed") tr.seed = static_cast<std::uint64_t>(parse_int(val, ctx));
      else if (key == "fine_tune_from") tr.fine_tune_from = val;
      else if (key == "log_every") tr.log_every = static_cast<int>(parse_int(val, ctx));
      else throw ConfigError(ctx + ": unknown key");
    } else if (section == "data") {
      if (key == "canvas") d.canvas = static_cast<int>(parse_int(val, ctx));
      else if (key == "background_names") d.background_names = split(val, ',');
      else if (key == "category_names") d.category_names = split(val, ',');
      else if (key == "affinity") {
        d.affinity.clear();
        for (const auto& row : split(val, ';')) d.affinity.push_back(parse_doubles(row, ctx));
      } else if (key == "min_objects") d.min_objects = static_cast<int>(parse_int(val, ctx));
      else if (key == "max_objects") d.max_objects = static_cast<int>(parse_int(val, ctx));
      else if (key == "p_small") d.p_small = parse_double(val, ctx);
      else if (key == "small_min") d.small_min = static_cast<int>(parse_int(val, ctx));
      else if (key == "small_max") d.small_max = static_cast<int>(parse_int(val, ctx));
      else if (key == "large_min") d.large_min = static_cast<int>(parse_int(val, ctx));
      else if (key == "large_max") d.large_max = static_cast<int>(parse_int(val, ctx));
      else if (key == "max_overlap") d.max_overlap = parse_double(val, ctx);
      else if (key == "clutter_max") d.clutter_max = static_cast<int>(parse_int(val, ctx));
      else if (key == "noise_amplitude") d.noise_amplitude = static_cast<int>(parse_int(val, ctx));
      else throw ConfigError(ctx + ": unknown key");
    } else {  // eval
      if (key == "iou_threshold") cfg.eval.iou_threshold = parse_double(val, ctx);
      else throw ConfigError(ctx + ": unknown key");
    }
  }
  try {
    cfg.model.validate();
    cfg.train.validate();
    cfg.data.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (cfg.data.canvas != cfg.model.input_size)
    throw ConfigError(origin + ": [data] canvas must equal [model] input_size");
  if (static_cast<int>(cfg.data.category_names.size()) != cfg.model.num_categories)
    throw ConfigError(origin + ": [data] category_names must match [model] num_categories");
  return cfg;
}

}  // namespace ffsd
