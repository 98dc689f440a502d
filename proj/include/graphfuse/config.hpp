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

#ifndef GRAPHFUSE_CONFIG_HPP_
#define GRAPHFUSE_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "graphfuse/errors.hpp"
#include "graphfuse/optim.hpp"

namespace graphfuse {

/// Number of relation graphs (implicit, semantic, spatial). Fixed.
inline constexpr std::size_t kNumGraphs = 3;

/// Every dimension and hyperparameter of a model and its training run.
struct ModelConfig {
  std::size_t d_in = 32;          // raw object feature width
  std::size_t d = 64;             // hidden width
  std::size_t heads = 4;          // H, for graph attention and the encoder
  std::size_t graphs = kNumGraphs;
  std::size_t encoder_layers = 2;
  std::size_t max_question_len = 16;
  std::size_t k = 4;              // adjacency count per node
  std::size_t P = 6;              // objects kept by the filter
  std::size_t mlp_hidden = 128;   // classifier hidden width
  double dropout = 0.2;
  double classifier_dropout = 0.5;
  bool enable_gfm = true;
  bool enable_of = true;
  bool kept_row_renorm = true;    // renormalize rows of the kept-set softmax
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  int epochs = 30;
  LrSchedule schedule{1e-4, 4e-4, 5, 20, 0.2, 5, 29, 4e-4};
  AdamaxHyper adamax{};

  void validate() const {
    if (d == 0 || heads == 0 || d % heads != 0) {
      throw ConfigError("d must be a positive multiple of heads");
    }
    if (graphs != kNumGraphs) throw ConfigError("graphs is fixed at 3");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (P < 1) throw ConfigError("P must be >= 1");
    if (d_in == 0 || mlp_hidden == 0 || max_question_len == 0) {
      throw ConfigError("dimensions must be positive");
    }
    if (encoder_layers == 0) throw ConfigError("encoder_layers must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0) ||
        !(classifier_dropout >= 0.0 && classifier_dropout < 1.0)) {
      throw ConfigError("dropout rates must lie in [0, 1)");
    }
    if (batch_size == 0 || epochs < 1) {
      throw ConfigError("batch_size and epochs must be positive");
    }
    if (schedule.final_epoch < epochs - 1) {
      throw ConfigError("schedule.final_epoch must cover every training epoch");
    }
    schedule.validate();
    if (!(adamax.beta1 >= 0.0 && adamax.beta1 < 1.0) ||
        !(adamax.beta2 >= 0.0 && adamax.beta2 < 1.0) || !(adamax.eps > 0.0)) {
      throw ConfigError("adamax hyperparameters out of range");
    }
  }
};

/// Laptop-scale defaults.
inline ModelConfig desk_preset() { return ModelConfig{}; }

/// The full-scale recipe: 768 wide, 12 heads, 3 encoder layers, k = 15,
/// P = 20, batch 192, 5e-4 -> 2e-3 warm-up, x0.2 every 2 epochs from 11,
/// 1e-4 for the question encoder.
inline ModelConfig paper_preset() {
  ModelConfig c;
  c.d_in = 2048;
  c.d = 768;
  c.heads = 12;
  c.encoder_layers = 3;
  c.max_question_len = 20;
  c.k = 15;
  c.P = 20;
  c.mlp_hidden = 1536;
  c.batch_size = 192;
  c.epochs = 16;
  c.schedule = LrSchedule{5e-4, 2e-3, 3, 11, 0.2, 2, 15, 1e-4};
  return c;
}

inline ModelConfig preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset: " + name);
}

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["d_in"] = c.d_in;
  j["d"] = c.d;
  j["heads"] = c.heads;
  j["graphs"] = c.graphs;
  j["encoder_layers"] = c.encoder_layers;
  j["max_question_len"] = c.max_question_len;
  j["k"] = c.k;
  j["P"] = c.P;
  j["mlp_hidden"] = c.mlp_hidden;
  j["dropout"] = c.dropout;
  j["classifier_dropout"] = c.classifier_dropout;
  j["enable_gfm"] = c.enable_gfm;
  j["enable_of"] = c.enable_of;
  j["kept_row_renorm"] = c.kept_row_renorm;
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["warmup_start"] = c.schedule.warmup_start;
  j["warmup_end"] = c.schedule.warmup_end;
  j["warmup_epochs"] = c.schedule.warmup_epochs;
  j["decay_start_epoch"] = c.schedule.decay_start_epoch;
  j["decay_factor"] = c.schedule.decay_factor;
  j["decay_every"] = c.schedule.decay_every;
  j["final_epoch"] = c.schedule.final_epoch;
  j["fixed_encoder_lr"] = c.schedule.fixed_encoder_lr;
  j["adamax_beta1"] = c.adamax.beta1;
  j["adamax_beta2"] = c.adamax.beta2;
  j["adamax_eps"] = c.adamax.eps;
  return j;
}

/// Fields missing from `j` keep the values already in `base`; unknown keys
/// are rejected.
inline ModelConfig config_from_json(const nlohmann::json& j,
                                    ModelConfig base = desk_preset()) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json known = to_json(base);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config field: " + key);
  }
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        j.at(key).get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field ") + key + ": " + e.what());
      }
    }
  };
  ModelConfig c = base;
  read("d_in", c.d_in);
  read("d", c.d);
  read("heads", c.heads);
  read("graphs", c.graphs);
  read("encoder_layers", c.encoder_layers);
  read("max_question_len", c.max_question_len);
  read("k", c.k);
  read("P", c.P);
  read("mlp_hidden", c.mlp_hidden);
  read("dropout", c.dropout);
  read("classifier_dropout", c.classifier_dropout);
  read("enable_gfm", c.enable_gfm);
  read("enable_of", c.enable_of);
  read("kept_row_renorm", c.kept_row_renorm);
  read("seed", c.seed);
  read("batch_size", c.batch_size);
  read("epochs", c.epochs);
  read("warmup_start", c.schedule.warmup_start);
  read("warmup_end", c.schedule.warmup_end);
  read("warmup_epochs", c.schedule.warmup_epochs);
  read("decay_start_epoch", c.schedule.decay_start_epoch);
  read("decay_factor", c.schedule.decay_factor);
  read("decay_every", c.schedule.decay_every);
  read("final_epoch", c.schedule.final_epoch);
  read("fixed_encoder_lr", c.schedule.fixed_encoder_lr);
  read("adamax_beta1", c.adamax.beta1);
  read("adamax_beta2", c.adamax.beta2);
  read("adamax_eps", c.adamax.eps);
  return c;
}

inline ModelConfig load_config(const std::string& path,
                               ModelConfig base = desk_preset()) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return config_from_json(j, base);
}

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical (sorted-key) JSON form.
inline std::uint64_t fingerprint(const ModelConfig& c) {
  return fnv1a64(to_json(c).dump());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_CONFIG_HPP_
