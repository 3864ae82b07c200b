#pragma once

// Versioned binary checkpoint container shared by both models.
//
// Layout:
//   bytes 0..7   magic "FXCKPT01"
//   u32          container version (little endian; currently 1)
//   u64          metadata length in bytes (little endian)
//   ...          metadata: one UTF-8 JSON object
//                  {"kind": ..., "config": {...}, "vocab": [...],
//                   "params": [{"name": ..., "shape": [...]}, ...]}
//   ...          for each manifest entry in order: row-major float32
//                values, little endian, shape-many of them
//
// Loading fills an already-initialized ParameterStore whose registration
// order, names, and shapes must match the stored manifest exactly; any
// disagreement is an error naming the first mismatch. Save → load → save is
// byte-identical.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fieldex/error.hpp"
#include "fieldex/tensor.hpp"

namespace fieldex {

using ordered_json = nlohmann::ordered_json;

inline constexpr char kCheckpointMagic[8] = {'F', 'X', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline uint32_t get_u32(std::istream& in, const std::string& path) {
  char b[4];
  if (!in.read(b, 4)) throw FormatError(path + ": truncated checkpoint");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& in, const std::string& path) {
  char b[8];
  if (!in.read(b, 8)) throw FormatError(path + ": truncated checkpoint");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

inline float get_f32(std::istream& in, const std::string& path) {
  const uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

struct CheckpointMeta {
  std::string kind;     // "pointer" or "tagger"
  ordered_json config;  // model configuration
  ordered_json vocab;   // vocabulary token array
  std::vector<std::pair<std::string, Shape>> manifest;
};

inline void save_checkpoint(const std::string& path, const std::string& kind,
                            const ordered_json& config, const ordered_json& vocab,
                            const ParameterStore<float>& store) {
  ordered_json meta;
  meta["kind"] = kind;
  meta["config"] = config;
  meta["vocab"] = vocab;
  ordered_json params = ordered_json::array();
  for (const auto& [name, t] : store.items()) {
    ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    params.push_back(std::move(entry));
  }
  meta["params"] = std::move(params);
  const std::string meta_bytes = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, meta_bytes.size());
  out.write(meta_bytes.data(), static_cast<std::streamsize>(meta_bytes.size()));
  for (const auto& [name, t] : store.items()) {
    for (float v : t.values()) detail::put_f32(out, v);
  }
  if (!out) throw IoError("write failed for checkpoint: " + path);
}

inline CheckpointMeta read_checkpoint_meta(std::istream& in, const std::string& path) {
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError(path + ": not a checkpoint file (bad magic)");
  }
  const uint32_t version = detail::get_u32(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const uint64_t meta_len = detail::get_u64(in, path);
  std::string meta_bytes(meta_len, '\0');
  if (!in.read(meta_bytes.data(), static_cast<std::streamsize>(meta_len))) {
    throw FormatError(path + ": truncated checkpoint metadata");
  }
  ordered_json meta;
  try {
    meta = ordered_json::parse(meta_bytes);
  } catch (const std::exception& e) {
    throw FormatError(path + ": invalid checkpoint metadata: " + e.what());
  }
  CheckpointMeta out;
  if (!meta.contains("kind") || !meta.contains("config") || !meta.contains("vocab") ||
      !meta.contains("params")) {
    throw FormatError(path + ": checkpoint metadata is missing required keys");
  }
  out.kind = meta["kind"].get<std::string>();
  out.config = meta["config"];
  out.vocab = meta["vocab"];
  for (const auto& entry : meta["params"]) {
    out.manifest.emplace_back(entry["name"].get<std::string>(), entry["shape"].get<Shape>());
  }
  return out;
}

inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint_meta(in, path);
}

// Fill an initialized store from the checkpoint's tensor data. The store
// must have been built from the checkpoint's own config/vocab so that the
// manifest lines up.
inline void load_checkpoint_params(const std::string& path, const ParameterStore<float>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const CheckpointMeta meta = read_checkpoint_meta(in, path);
  if (meta.manifest.size() != store.size()) {
    throw FormatError(path + ": checkpoint holds " + std::to_string(meta.manifest.size()) +
                      " parameters, model expects " + std::to_string(store.size()));
  }
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& [name, t] = store.items()[i];
    const auto& [stored_name, stored_shape] = meta.manifest[i];
    if (name != stored_name) {
      throw FormatError(path + ": parameter " + std::to_string(i) + " is \"" + stored_name +
                        "\", model expects \"" + name + "\"");
    }
    if (stored_shape != t.shape()) {
      throw FormatError(path + ": parameter \"" + name + "\" has shape " +
                        shape_str(stored_shape) + ", model expects " + shape_str(t.shape()));
    }
    for (float& v : t.values()) v = detail::get_f32(in, path);
  }
  // the container must end exactly after the last tensor
  char extra;
  if (in.read(&extra, 1)) throw FormatError(path + ": trailing bytes after tensor data");
}

}  // namespace fieldex
