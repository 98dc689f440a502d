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

#ifndef GRAPHFUSE_PREDICTOR_HPP_
#define GRAPHFUSE_PREDICTOR_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "graphfuse/config.hpp"
#include "graphfuse/errors.hpp"
#include "graphfuse/nn.hpp"
#include "graphfuse/ops.hpp"

namespace graphfuse {

namespace predictor {

inline void add_params(ParameterStore& store, const ModelConfig& cfg,
                       std::size_t num_answers, Rng& rng) {
  add_linear(store, "classifier.hidden", cfg.d, cfg.mlp_hidden, rng);
  add_linear(store, "classifier.out", cfg.mlp_hidden, num_answers, rng);
}

}  // namespace predictor

/// J = q * V* elementwise.
inline Tensor joint(const Tensor& question, const Tensor& visual) {
  if (question.numel() != visual.numel()) {
    throw DimensionError("joint: question and visual widths differ");
  }
  return ops::mul(question, visual);
}

/// Two-layer MLP: hidden -> relu -> dropout -> answers.
inline Tensor classify(const Tensor& joint_repr, const LinearCache& lin,
                       double dropout_p, bool training, Rng& rng) {
  const Tensor row = ops::reshape(joint_repr, {1, joint_repr.numel()});
  Tensor h = ops::relu(lin["classifier.hidden"](row));
  h = ops::dropout(h, dropout_p, training, rng);
  const Tensor logits = lin["classifier.out"](h);
  return ops::reshape(logits, {logits.numel()});
}

inline Tensor bce_loss(const Tensor& logits, const std::vector<double>& targets) {
  return ops::bce_with_logits(logits, targets);
}

/// One-hot soft-score vector.
inline std::vector<double> one_hot(std::size_t answer, std::size_t num_answers) {
  if (answer >= num_answers) throw DataError("answer id out of range");
  std::vector<double> t(num_answers, 0.0);
  t[answer] = 1.0;
  return t;
}

/// argmax, ties to the lower id.
inline std::size_t predict(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("predict: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_PREDICTOR_HPP_
