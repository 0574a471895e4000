// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ffsd/io_util.hpp"
#include "ffsd/tensor.hpp"

namespace ffsd {

// Checkpoint container: magic "FFSD", u32 version (=1), u32 tensor count,
// then per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims, u32 dtype
// code (0 = IEEE-754 binary32), raw values. Everything little-endian.
static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

struct Cursor {
  const std::string* bytes;
  std::size_t pos = 0;
  std::string origin;

  void need(std::size_t n) const {
    if (pos + n > bytes->size()) throw IoError(origin + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes->data() + pos, 4);
    pos += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes->substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::string encode_checkpoint(
    const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors) {
  std::string out = "FFSD";
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, 4);
    detail::put_u32(out, static_cast<std::uint32_t>(t->n));
    detail::put_u32(out, static_cast<std::uint32_t>(t->c));
    detail::put_u32(out, static_cast<std::uint32_t>(t->h));
    detail::put_u32(out, static_cast<std::uint32_t>(t->w));
    detail::put_u32(out, 0);  // dtype f32
    out.append(reinterpret_cast<const char*>(t->data.data()),
               static_cast<std::size_t>(t->count()) * 4);
  }
  return out;
}

inline std::map<std::string, Tensor<float>> decode_checkpoint(const std::string& bytes,
                                                              const std::string& origin) {
  detail::Cursor cur{&bytes, 0, origin};
  if (cur.str(4) != "FFSD") throw IoError(origin + ": bad magic, not a checkpoint");
  const std::uint32_t version = cur.u32();
  if (version != 1) throw IoError(origin + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = cur.u32();
  std::map<std::string, Tensor<float>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = cur.u32();
    if (name_len > 4096) throw IoError(origin + ": implausible tensor name length");
    const std::string name = cur.str(name_len);
    const std::uint32_t rank = cur.u32();
    if (rank < 1 || rank > 4) throw IoError(origin + ": unsupported tensor rank");
    int dims[4] = {1, 1, 1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t v = cur.u32();
      if (v < 1 || v > (1u << 28)) throw IoError(origin + ": bad dimension");
      dims[d] = static_cast<int>(v);
    }
    if (cur.u32() != 0) throw IoError(origin + ": unsupported dtype code");
    Tensor<float> t(dims[0], dims[1], dims[2], dims[3]);
    cur.need(static_cast<std::size_t>(t.count()) * 4);
    std::memcpy(t.data.data(), bytes.data() + cur.pos, static_cast<std::size_t>(t.count()) * 4);
    cur.pos += static_cast<std::size_t>(t.count()) * 4;
    if (!out.emplace(name, std::move(t)).second)
      throw IoError(origin + ": duplicate tensor name '" + name + "'");
  }
  return out;
}

inline void write_checkpoint(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, const Tensor<float>*>>& ts) {
  atomic_write_file(path, encode_checkpoint(ts));
}

inline std::map<std::string, Tensor<float>> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

template <typename ParamPtrs>
void write_param_checkpoint(const std::filesystem::path& path, const ParamPtrs& params) {
  std::vector<std::pair<std::string, const Tensor<float>*>> ts;
  for (const auto* p : params) ts.push_back({p->name, &p->value});
  write_checkpoint(path, ts);
}

struct LoadStats {
  int loaded = 0;
  int fresh = 0;
};

// Copies every name-matching tensor into the model's parameters; parameters
// absent from the checkpoint keep their initialization. A name that matches
// with a different shape is a hard error.
template <typename ParamPtrs>
LoadStats load_matching_params(ParamPtrs& params,
                               const std::map<std::string, Tensor<float>>& ckpt) {
  LoadStats stats;
  for (auto* p : params) {
    auto it = ckpt.find(p->name);
    if (it == ckpt.end()) {
      ++stats.fresh;
      continue;
    }
    if (!it->second.same_shape(p->value))
      throw IoError("checkpoint tensor '" + p->name + "' has shape " + it->second.shape_str() +
                    " but the model expects " + p->value.shape_str());
    p->value = it->second;
    ++stats.loaded;
  }
  return stats;
}

}  // namespace ffsd
