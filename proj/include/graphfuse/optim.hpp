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

#ifndef GRAPHFUSE_OPTIM_HPP_
#define GRAPHFUSE_OPTIM_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "graphfuse/errors.hpp"
#include "graphfuse/nn.hpp"

namespace graphfuse {

struct AdamaxHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adamax update of every parameter, then zeroes the gradients.
///   m <- b1 m + (1 - b1) g
///   u <- max(b2 u, |g|)
///   p <- p - lr / (1 - b1^t) * m / (u + eps)
/// `lr_for` maps a parameter name to its learning rate.
inline void adamax_step(ParameterStore& store,
                        const std::function<double(const std::string&)>& lr_for,
                        const AdamaxHyper& hp = {}) {
  for (auto& [name, p] : store.entries()) {
    if (!p.value.has_grad()) {
      throw UsageError("adamax_step: parameter without gradient: " + name);
    }
  }
  for (auto& [name, p] : store.entries()) {
    const double lr = lr_for(name);
    ++p.step;
    const double step_size =
        lr / (1.0 - std::pow(hp.beta1, static_cast<double>(p.step)));
    auto value = p.value.data();
    auto grad = p.value.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      p.first_moment[i] = hp.beta1 * p.first_moment[i] + (1.0 - hp.beta1) * g;
      p.inf_norm[i] = std::max(hp.beta2 * p.inf_norm[i], std::abs(g));
      value[i] -= step_size * p.first_moment[i] / (p.inf_norm[i] + hp.eps);
    }
    p.value.zero_grad();
  }
}

inline void adamax_step(ParameterStore& store, double lr,
                        const AdamaxHyper& hp = {}) {
  adamax_step(store, [lr](const std::string&) { return lr; }, hp);
}

/// Linear warm-up, plateau, then step decay:
///   epoch < warmup_epochs:   start + (end - start) * epoch / warmup_epochs
///   epoch < decay_start:     end
///   otherwise:               end * factor^floor((epoch - decay_start) / every)
/// The question encoder trains at a separate constant rate.
struct LrSchedule {
  double warmup_start = 5e-4;
  double warmup_end = 2e-3;
  int warmup_epochs = 3;
  int decay_start_epoch = 11;
  double decay_factor = 0.2;
  int decay_every = 2;
  int final_epoch = 15;
  double fixed_encoder_lr = 1e-4;

  void validate() const {
    if (!(warmup_start > 0.0) || !(warmup_end > 0.0) || !(fixed_encoder_lr > 0.0)) {
      throw ConfigError("learning rates must be positive");
    }
    if (warmup_epochs < 0 || decay_every < 1 || final_epoch < 0) {
      throw ConfigError("schedule epochs out of range");
    }
    if (decay_start_epoch < warmup_epochs) {
      throw ConfigError("decay must start after warm-up");
    }
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
      throw ConfigError("decay_factor must lie in (0, 1]");
    }
  }
};

inline double lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 0 || epoch > s.final_epoch) {
    throw UsageError("lr_at: epoch " + std::to_string(epoch) +
                     " outside [0, " + std::to_string(s.final_epoch) + "]");
  }
  if (epoch < s.warmup_epochs) {
    return s.warmup_start + (s.warmup_end - s.warmup_start) *
                                static_cast<double>(epoch) /
                                static_cast<double>(s.warmup_epochs);
  }
  if (epoch < s.decay_start_epoch) return s.warmup_end;
  const int decays = (epoch - s.decay_start_epoch) / s.decay_every;
  return s.warmup_end * std::pow(s.decay_factor, decays);
}

inline double encoder_lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 0 || epoch > s.final_epoch) {
    throw UsageError("encoder_lr_at: epoch out of range");
  }
  return s.fixed_encoder_lr;
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_OPTIM_HPP_
