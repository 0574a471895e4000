// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "ffsd/io_util.hpp"
#include "ffsd/scene.hpp"

namespace ffsd {

inline std::string encode_ppm(const SceneImage& im) {
  std::string out = "P6\n" + std::to_string(im.w) + " " + std::to_string(im.h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(im.rgb.data()), im.rgb.size());
  return out;
}

inline SceneImage decode_ppm(const std::string& bytes, const std::string& origin) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P6") throw IoError(origin + ": not a P6 PPM");
  SceneImage im;
  try {
    im.w = std::stoi(token());
    im.h = std::stoi(token());
    if (std::stoi(token()) != 255) throw IoError(origin + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw IoError(origin + ": malformed PPM header");
  }
  if (im.w < 1 || im.h < 1) throw IoError(origin + ": bad PPM dimensions");
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(im.w) * im.h * 3;
  if (bytes.size() - pos < need) throw IoError(origin + ": truncated PPM payload");
  im.rgb.assign(bytes.begin() + pos, bytes.begin() + pos + need);
  return im;
}

inline void write_ppm(const std::filesystem::path& path, const SceneImage& im) {
  atomic_write_file(path, encode_ppm(im));
}

inline SceneImage read_ppm(const std::filesystem::path& path) {
  return decode_ppm(read_file(path), path.string());
}

struct DatasetItem {
  std::string image_path;  // relative to the split directory
  SceneImage image;
  std::vector<Annotation> anns;
};

struct Dataset {
  std::vector<std::string> category_names;
  std::vector<DatasetItem> items;

  int object_count() const {
    int n = 0;
    for (const auto& it : items) n += static_cast<int>(it.anns.size());
    return n;
  }
  int small_count() const {
    int n = 0;
    for (const auto& it : items)
      for (const auto& a : it.anns) n += a.small_size ? 1 : 0;
    return n;
  }
};

// One split on disk: images/NNNNNN.ppm plus a manifest whose first line names
// the categories and whose remaining lines carry one object each:
//   relative_path <TAB> category_id <TAB> xmin ymin xmax ymax <TAB> size_class
inline Dataset gen_split(const std::filesystem::path& dir, std::uint64_t seed,
                         const SceneSpec& spec, int count) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string());

  Dataset ds;
  ds.category_names = spec.category_names;
  std::string manifest = "#categories: ";
  for (std::size_t i = 0; i < spec.category_names.size(); ++i)
    manifest += (i ? "," : "") + spec.category_names[i];
  manifest += "\n";

  for (int i = 0; i < count; ++i) {
    Scene scene = gen_scene(seed + static_cast<std::uint64_t>(i), spec);
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06d.ppm", i);
    write_ppm(dir / name, scene.image);
    for (const auto& a : scene.anns) {
      manifest += std::string(name) + "\t" + std::to_string(a.category) + "\t" +
                  std::to_string(a.xmin) + " " + std::to_string(a.ymin) + " " +
                  std::to_string(a.xmax) + " " + std::to_string(a.ymax) + "\t" +
                  (a.small_size ? "small" : "large") + "\n";
    }
    ds.items.push_back({name, std::move(scene.image), std::move(scene.anns)});
  }
  atomic_write_file(dir / "manifest.txt", manifest);
  return ds;
}

inline Dataset load_split(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt"))
    throw IoError("missing manifest: " + (dir / "manifest.txt").string());
  const std::string text = read_file(dir / "manifest.txt");
  Dataset ds;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::pair<std::string, Annotation>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      const std::string prefix = "#categories: ";
      if (line.rfind(prefix, 0) != 0)
        throw IoError(dir.string() + "/manifest.txt:1: missing #categories header");
      std::string names = line.substr(prefix.size());
      std::size_t start = 0;
      while (start <= names.size()) {
        const std::size_t comma = names.find(',', start);
        ds.category_names.push_back(names.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = dir.string() + "/manifest.txt:" + std::to_string(line_no);
    if (fields.size() != 4) throw IoError(where + ": expected 4 tab-separated fields");
    Annotation a;
    try {
      a.category = std::stoi(fields[1]);
      std::istringstream bs(fields[2]);
      if (!(bs >> a.xmin >> a.ymin >> a.xmax >> a.ymax))
        throw IoError(where + ": malformed box");
    } catch (const std::logic_error&) {
      throw IoError(where + ": malformed number");
    }
    if (fields[3] == "small")
      a.small_size = true;
    else if (fields[3] == "large")
      a.small_size = false;
    else
      throw IoError(where + ": bad size class '" + fields[3] + "'");
    if (a.category < 0 || a.category >= static_cast<int>(ds.category_names.size()))
      throw IoError(where + ": category id out of range");
    rows.push_back({fields[0], a});
  }
  std::string current;
  for (auto& [path, ann] : rows) {
    if (path != current) {
      DatasetItem item;
      item.image_path = path;
      item.image = read_ppm(dir / path);
      ds.items.push_back(std::move(item));
      current = path;
    }
    ds.items.back().anns.push_back(ann);
  }
  return ds;
}

}  // namespace ffsd
