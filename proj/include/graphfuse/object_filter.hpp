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

// Object filtering: rank objects by the attention they receive on the fused
// fully connected graph, keep the top P, re-score within the kept set and
// pool the kept node features with the recomputed priorities.

#ifndef GRAPHFUSE_OBJECT_FILTER_HPP_
#define GRAPHFUSE_OBJECT_FILTER_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "graphfuse/config.hpp"
#include "graphfuse/errors.hpp"
#include "graphfuse/nn.hpp"
#include "graphfuse/ops.hpp"

namespace graphfuse {

namespace filter {

inline void add_params(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  add_linear(store, "filter.query", cfg.d, cfg.d, rng, false);
  add_linear(store, "filter.key", cfg.d, cfg.d, rng, false);
}

/// <Wq v_i, Wk v_j> / sqrt(d) for all pairs.
inline Tensor bilinear_scores(const Tensor& nodes, const Linear& query,
                              const Linear& key) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.weight.rows()));
  return ops::scale(ops::matmul_nt(query(nodes), key(nodes)), scale);
}

}  // namespace filter

/// e-hat: row softmax over all objects (self included) of bilinear scores
/// plus the fused relation matrix alpha-hat.
inline Tensor fused_relations(const Tensor& nodes, const Tensor& fused_alpha,
                              const Linear& query, const Linear& key) {
  const Tensor logits =
      ops::add(filter::bilinear_scores(nodes, query, key), fused_alpha);
  return ops::softmax(logits, 1);
}

/// gamma_i = s_i^2 / sum_j s_j^2 where s_i is the attention object i
/// receives (column sum).
inline Tensor priority(const Tensor& relations) {
  return ops::normalize_sum(ops::square(ops::column_sum(relations)));
}

/// Indices of the min(P, m) largest scores, ties to the lower index, in
/// descending score order.
inline std::vector<std::size_t> top_p(std::span<const double> scores, std::size_t p) {
  if (p < 1) throw ConfigError("P must be >= 1");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t keep = std::min(p, scores.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep),
                    idx.end(), [&](std::size_t a, std::size_t b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  idx.resize(keep);
  return idx;
}

struct PriorityRanking {
  Tensor relations;               // e-hat, m x m
  Tensor gamma;                   // m
  std::vector<std::size_t> kept;  // EO, descending gamma
  Tensor kept_relations;          // e-tilde over EO, P x P
  Tensor kept_gamma;              // gamma-tilde, aligned with `kept`
  Tensor pooled;                  // V*, d
};

/// Keeps the top-P objects by gamma, scores them against each other with a
/// softmax over all kept pairs, recomputes priorities and pools.
/// With `row_renorm` the kept-set matrix is rescaled to unit row sums
/// before the priorities are taken; otherwise the global softmax is used
/// as is. Selection is a hard choice and passes no gradient.
inline PriorityRanking filter_and_aggregate(const Tensor& nodes, const Tensor& relations,
                                            std::size_t p, const Linear& query,
                                            const Linear& key, bool row_renorm) {
  if (p < 1) throw ConfigError("P must be >= 1");
  PriorityRanking r;
  r.relations = relations;
  r.gamma = priority(relations);
  r.kept = top_p(r.gamma.data(), p);
  const Tensor kept_nodes = ops::gather_rows(nodes, r.kept);
  const Tensor scores = filter::bilinear_scores(kept_nodes, query, key);
  r.kept_relations =
      ops::masked_softmax_all(scores, Mask(scores.numel(), 1));
  const Tensor for_priority =
      row_renorm ? ops::row_normalize(r.kept_relations) : r.kept_relations;
  r.kept_gamma = priority(for_priority);
  r.pooled = ops::reshape(
      ops::matmul(ops::reshape(r.kept_gamma, {1, r.kept.size()}), kept_nodes),
      {nodes.cols()});
  return r;
}

/// Full filter on the fused graph.
inline PriorityRanking filter_objects(const Tensor& nodes, const Tensor& fused_alpha,
                                      std::size_t p, const Linear& query,
                                      const Linear& key, bool row_renorm) {
  return filter_and_aggregate(nodes, fused_relations(nodes, fused_alpha, query, key),
                              p, query, key, row_renorm);
}

/// Ablated filter: every object kept with weight 1/m.
inline Tensor uniform_pool(const Tensor& nodes) {
  return ops::mean_pool(nodes, Mask(nodes.rows(), 1));
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_OBJECT_FILTER_HPP_
