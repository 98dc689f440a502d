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

// Question-guided graph fusion.
//
// Each graph's nodes attend over the question tokens (visual -> question
// cross-attention) and add the attended values as a residual. The graphs
// are then weighted by the clamped, normalized cosine similarity between
// the pooled question and each pooled graph, and the node features and
// head-averaged edge matrices are mixed with those weights.

#ifndef GRAPHFUSE_FUSION_HPP_
#define GRAPHFUSE_FUSION_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "graphfuse/config.hpp"
#include "graphfuse/errors.hpp"
#include "graphfuse/nn.hpp"
#include "graphfuse/ops.hpp"

namespace graphfuse {

/// Cosines below this are clamped before normalizing the graph weights.
inline constexpr double kGraphWeightFloor = 1e-6;

namespace fusion {

inline void add_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  add_linear(store, "fusion.visual_query", cfg.d, cfg.d, rng, false);
  add_linear(store, "fusion.question_key", cfg.d, cfg.d, rng, false);
  add_linear(store, "fusion.question_value", cfg.d, cfg.d, rng, false);
}

}  // namespace fusion

/// Question tokens projected once and shared by the three graphs.
struct QuestionKeys {
  Tensor keys;    // L x d
  Tensor values;  // L x d
  Mask valid;     // L
};

inline QuestionKeys project_question(const Tensor& tokens, const Mask& valid,
                                     const Linear& key, const Linear& value) {
  if (valid.size() != tokens.rows()) {
    throw DimensionError("project_question: mask length mismatch");
  }
  return {key(tokens), value(tokens), valid};
}

struct CrossAttention {
  Tensor nodes;                   // v*, m x d
  std::vector<Tensor> attention;  // per head, m x L; zero at padding
};

/// v*_i = v'_i + concat_h relu(sum_j a^h_ij (Wv t_j)_h), with a^h the
/// softmax over valid tokens of <Wq v'_i, Wk t_j>_h / sqrt(d/H).
inline CrossAttention cross_attend(const Tensor& nodes, const QuestionKeys& q,
                                   const Linear& query, std::size_t heads) {
  const std::size_t m = nodes.rows(), L = q.keys.rows(), d = nodes.cols();
  if (q.keys.cols() != d || q.values.cols() != d) {
    throw DimensionError("cross_attend: node and token widths differ");
  }
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("cross_attend: width not divisible by heads");
  }
  const std::size_t dh = d / heads;
  Mask mask(m * L);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < L; ++j) mask[i * L + j] = q.valid[j];
  const Tensor vq = query(nodes);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  CrossAttention out;
  std::vector<Tensor> heads_out;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor scores = ops::scale(
        ops::matmul_nt(ops::slice_cols(vq, h * dh, dh),
                       ops::slice_cols(q.keys, h * dh, dh)),
        scale);
    Tensor attn = ops::masked_softmax(scores, mask, 1);
    heads_out.push_back(
        ops::relu(ops::matmul(attn, ops::slice_cols(q.values, h * dh, dh))));
    out.attention.push_back(std::move(attn));
  }
  out.nodes = ops::add(nodes, ops::concat_cols(heads_out));
  return out;
}

/// beta_k = max(cos(Q, G_k), floor) / sum_i max(cos(Q, G_i), floor).
inline Tensor graph_weights(const Tensor& question, const std::vector<Tensor>& graphs,
                            double floor = kGraphWeightFloor) {
  if (graphs.empty()) throw DimensionError("graph_weights: no graphs");
  std::vector<Tensor> cos;
  cos.reserve(graphs.size());
  for (const Tensor& g : graphs) cos.push_back(ops::cosine(question, g));
  return ops::normalize_sum(ops::clamp_min(ops::stack(cos), floor));
}

/// Constant 1/K weights, used when the fusion module is ablated.
inline Tensor uniform_graph_weights(std::size_t k = kNumGraphs) {
  return Tensor::vector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

struct FusedGraph {
  Tensor nodes;  // v-hat, m x d
  Tensor alpha;  // alpha-hat, m x m
  Tensor beta;   // K
};

/// v-hat = sum_k beta_k v*_k and alpha-hat = sum_k beta_k alpha_k, where
/// alpha_k is graph k's head-averaged edge matrix.
inline FusedGraph fuse(const std::vector<Tensor>& nodes,
                       const std::vector<Tensor>& alphas, const Tensor& beta) {
  if (nodes.size() != beta.numel() || alphas.size() != beta.numel()) {
    throw DimensionError("fuse: graph count mismatch");
  }
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    if (nodes[k].shape() != nodes[0].shape() || alphas[k].shape() != alphas[0].shape()) {
      throw DimensionError("fuse: graphs disagree on object count or width");
    }
  }
  return {ops::weighted_sum(beta, nodes), ops::weighted_sum(beta, alphas), beta};
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_FUSION_HPP_
