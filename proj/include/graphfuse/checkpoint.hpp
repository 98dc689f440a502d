/*
 * Copyright 2026 The graphfuse Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Binary checkpoints: configuration, vocabulary sizes, every parameter and
// its optimizer state. Bytes depend only on the model, so identical runs
// give identical files.
//
//   "GFCK" u32 version u64 fingerprint  string config-json
//   u64 x4 vocabulary sizes  u64 parameter count
//   per parameter (sorted by name):
//     string name  u32 rank  u64[rank] dims  f64[n] value  f64[n] m
//     f64[n] u  u64 step

#ifndef GRAPHFUSE_CHECKPOINT_HPP_
#define GRAPHFUSE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "graphfuse/config.hpp"
#include "graphfuse/errors.hpp"
#include "graphfuse/io.hpp"
#include "graphfuse/model.hpp"

namespace graphfuse {

inline constexpr char kCheckpointMagic[4] = {'G', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const FusionNetwork& net) {
  ByteWriter w;
  w.put_bytes(std::string(kCheckpointMagic, 4));
  w.put(kCheckpointVersion);
  w.put(fingerprint(net.config()));
  w.put_string(to_json(net.config()).dump());
  const VocabSizes& s = net.sizes();
  for (std::size_t v : {s.question_tokens, s.answers, s.semantic_labels, s.spatial_labels})
    w.put(static_cast<std::uint64_t>(v));
  w.put(static_cast<std::uint64_t>(net.params().size()));
  for (const auto& [name, p] : net.params().entries()) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.put(static_cast<std::uint64_t>(d));
    for (double v : p.value.data()) w.put(v);
    for (double v : p.first_moment) w.put(v);
    for (double v : p.inf_norm) w.put(v);
    w.put(p.step);
  }
  return w.bytes();
}

/// Rebuilds the network from checkpoint bytes. Every stored parameter must
/// exist in the rebuilt model with the same shape, and vice versa.
inline std::unique_ptr<FusionNetwork> decode_checkpoint(const std::string& bytes,
                                                        const std::string& what) {
  ByteReader r(bytes, what);
  if (r.get_bytes(4) != std::string(kCheckpointMagic, 4)) r.fail_at(0, "bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail_at(4, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto stored_fp = r.get<std::uint64_t>();
  const std::size_t json_at = r.offset();
  ModelConfig cfg;
  try {
    cfg = config_from_json(nlohmann::json::parse(r.get_string()));
  } catch (const nlohmann::json::exception& e) {
    r.fail_at(json_at, std::string("bad config json: ") + e.what());
  }
  if (fingerprint(cfg) != stored_fp) {
    throw CheckpointError(what + ": stored fingerprint does not match its configuration");
  }
  VocabSizes sizes;
  sizes.question_tokens = r.get<std::uint64_t>();
  sizes.answers = r.get<std::uint64_t>();
  sizes.semantic_labels = r.get<std::uint64_t>();
  sizes.spatial_labels = r.get<std::uint64_t>();
  auto net = std::make_unique<FusionNetwork>(cfg, sizes);
  ParameterStore& store = net->params();
  const auto count = r.get<std::uint64_t>();
  if (count != store.size()) r.fail("parameter count disagrees with configuration");
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::size_t at = r.offset();
    const std::string name = r.get_string();
    if (!store.contains(name)) r.fail_at(at, "unexpected parameter " + name);
    Parameter& p = store.entry(name);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != p.value.shape()) r.fail_at(at, "shape mismatch for " + name);
    for (double& v : p.value.data()) v = r.get<double>();
    for (double& v : p.first_moment) v = r.get<double>();
    for (double& v : p.inf_norm) v = r.get<double>();
    p.step = r.get<std::uint64_t>();
  }
  if (!r.done()) r.fail("trailing bytes");
  return net;
}

inline void save_checkpoint(const FusionNetwork& net, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(net));
}

inline std::unique_ptr<FusionNetwork> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw UsageError("checkpoint not found: " + path.string());
  }
  return decode_checkpoint(read_file(path), path.string());
}

/// Throws unless the checkpoint was trained with exactly `expected`.
inline void require_fingerprint(const FusionNetwork& net, const ModelConfig& expected) {
  if (fingerprint(net.config()) != fingerprint(expected)) {
    throw CheckpointError("checkpoint fingerprint " + hex64(fingerprint(net.config())) +
                          " does not match config " + hex64(fingerprint(expected)));
  }
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_CHECKPOINT_HPP_
