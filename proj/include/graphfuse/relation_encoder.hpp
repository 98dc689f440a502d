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

// Image relation encoder: three graph attention networks (implicit,
// semantic, spatial) over the detected objects.
//
// For every graph the pipeline is
//   alpha^h_ij = <Wq v_i, Wk v_j>_h / sqrt(d/H)          correlation
//   N_i        = top-k of mean_h alpha^h_ij over j != i  adjacency
//   e^h_ij     = softmax_{j in N_i}(alpha^h_ij [+ c^h_lab(i,j)])
//   v'_i       = concat_h relu(sum_{j in N_i} e^h_ij (Wv v_j)_h)
// The label bias c is present only for the explicit (semantic, spatial)
// graphs. All heads share one neighbor set.

#ifndef GRAPHFUSE_RELATION_ENCODER_HPP_
#define GRAPHFUSE_RELATION_ENCODER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graphfuse/config.hpp"
#include "graphfuse/errors.hpp"
#include "graphfuse/nn.hpp"
#include "graphfuse/ops.hpp"

namespace graphfuse {

enum class GraphKind : std::uint8_t { kImplicit = 0, kSemantic = 1, kSpatial = 2 };

inline const char* graph_name(GraphKind k) {
  switch (k) {
    case GraphKind::kImplicit: return "implicit";
    case GraphKind::kSemantic: return "semantic";
    case GraphKind::kSpatial: return "spatial";
  }
  return "?";
}

inline constexpr std::array<GraphKind, kNumGraphs> kGraphKinds = {
    GraphKind::kImplicit, GraphKind::kSemantic, GraphKind::kSpatial};

/// Normalized [x1, y1, x2, y2] with y growing downward.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const {
    return x1 < x2 && y1 < y2 && x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0;
  }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool operator==(const Box&) const = default;
};

/// Geometric relation ids; 0 means no relation (far apart, or self).
enum SpatialLabel : std::uint16_t {
  kSpatialNone = 0,
  kLeftOf = 1,
  kRightOf = 2,
  kAbove = 3,
  kBelow = 4,
  kOverlaps = 5,
  kContains = 6,
  kInside = 7,
};
inline constexpr std::size_t kNumSpatialLabels = 8;

inline const std::vector<std::string>& spatial_label_names() {
  static const std::vector<std::string> names = {
      "left_of", "right_of", "above", "below", "overlaps", "contains", "inside"};
  return names;
}

/// Center distance beyond which non-touching boxes get no relation.
inline constexpr double kFarThreshold = 0.5;

/// Relation of box a to box b, by priority
/// contains > inside > overlaps > directional.
inline std::uint16_t spatial_label(const Box& a, const Box& b) {
  if (a.x1 <= b.x1 && a.y1 <= b.y1 && a.x2 >= b.x2 && a.y2 >= b.y2) return kContains;
  if (b.x1 <= a.x1 && b.y1 <= a.y1 && b.x2 >= a.x2 && b.y2 >= a.y2) return kInside;
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix > 0.0 && iy > 0.0) return kOverlaps;
  const double dx = b.cx() - a.cx();
  const double dy = b.cy() - a.cy();
  if (std::hypot(dx, dy) > kFarThreshold) return kSpatialNone;
  if (std::abs(dx) >= std::abs(dy)) return dx > 0.0 ? kLeftOf : kRightOf;
  return dy > 0.0 ? kAbove : kBelow;
}

/// m x m row-major label matrix; the diagonal is 0.
inline std::vector<std::uint16_t> synthesize_spatial_labels(
    const std::vector<Box>& boxes) {
  const std::size_t m = boxes.size();
  std::vector<std::uint16_t> labels(m * m, kSpatialNone);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) labels[i * m + j] = spatial_label(boxes[i], boxes[j]);
  return labels;
}

using NeighborSets = std::vector<std::vector<std::size_t>>;

/// Row-major m x m mask, true at (i, j) for j in N_i.
inline Mask neighbor_mask(const NeighborSets& n) {
  const std::size_t m = n.size();
  Mask mask(m * m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j : n[i]) mask[i * m + j] = 1;
  return mask;
}

namespace relation {

inline std::string prefix(GraphKind k) {
  return std::string("relation.") + graph_name(k);
}

inline void add_params(ParameterStore& store, const ModelConfig& cfg,
                       std::size_t semantic_labels, std::size_t spatial_labels,
                       Rng& rng) {
  add_linear(store, "relation.object_proj", cfg.d_in, cfg.d, rng);
  for (GraphKind k : kGraphKinds) {
    const std::string p = prefix(k);
    add_linear(store, p + ".query", cfg.d, cfg.d, rng, false);
    add_linear(store, p + ".key", cfg.d, cfg.d, rng, false);
    add_linear(store, p + ".value", cfg.d, cfg.d, rng, false);
    if (k != GraphKind::kImplicit) {
      const std::size_t nl =
          k == GraphKind::kSemantic ? semantic_labels : spatial_labels;
      store.add(p + ".label_bias", {cfg.heads, nl},
                std::vector<double>(cfg.heads * nl, 0.0));
    }
  }
}

}  // namespace relation

/// Per-head correlation scores, each m x m.
inline std::vector<Tensor> correlation_scores(const Tensor& v, const Linear& query,
                                              const Linear& key, std::size_t heads) {
  const std::size_t m = v.rows(), d = query.weight.rows();
  if (m < 2) throw DataError("degenerate scene: relation graphs need m >= 2");
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("hidden width not divisible by head count");
  }
  const std::size_t dh = d / heads;
  const Tensor q = query(v);
  const Tensor k = key(v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> alpha;
  alpha.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    alpha.push_back(ops::scale(
        ops::matmul_nt(ops::slice_cols(q, h * dh, dh), ops::slice_cols(k, h * dh, dh)),
        scale));
  }
  return alpha;
}

/// Plain values of the head-averaged scores.
inline std::vector<double> head_average(const std::vector<Tensor>& alpha) {
  std::vector<double> avg(alpha.at(0).numel(), 0.0);
  for (const Tensor& a : alpha)
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += a[i];
  for (double& x : avg) x /= static_cast<double>(alpha.size());
  return avg;
}

/// For each i, the min(k, m-1) indices j != i with the largest scores; ties
/// go to the lower index. Each set is returned in ascending index order.
inline NeighborSets topk_neighbors(std::span<const double> scores, std::size_t m,
                                   std::size_t k) {
  if (scores.size() != m * m) throw DimensionError("topk_neighbors: not m x m");
  if (k < 1) throw ConfigError("topk_neighbors: k must be >= 1");
  const std::size_t keep = std::min(k, m - 1);
  NeighborSets out(m);
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < m; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) cand.push_back(j);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep),
                      cand.end(), [&](std::size_t a, std::size_t b) {
                        const double sa = scores[i * m + a], sb = scores[i * m + b];
                        return sa != sb ? sa > sb : a < b;
                      });
    out[i].assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

/// Softmax of each head's scores over the neighbor sets.
inline std::vector<Tensor> implicit_edges(const std::vector<Tensor>& alpha,
                                          const NeighborSets& neighbors) {
  const Mask mask = neighbor_mask(neighbors);
  std::vector<Tensor> e;
  e.reserve(alpha.size());
  for (const Tensor& a : alpha) e.push_back(ops::masked_softmax(a, mask, 1));
  return e;
}

/// As implicit_edges, with the learned per-head label bias added to the
/// logits. `bias_table` is H x n_labels.
inline std::vector<Tensor> explicit_edges(const std::vector<Tensor>& alpha,
                                          const NeighborSets& neighbors,
                                          const std::vector<std::uint16_t>& labels,
                                          const Tensor& bias_table) {
  const std::size_t m = neighbors.size();
  const Mask mask = neighbor_mask(neighbors);
  std::vector<Tensor> e;
  e.reserve(alpha.size());
  for (std::size_t h = 0; h < alpha.size(); ++h) {
    const Tensor logits = ops::add(alpha[h], ops::label_bias(bias_table, labels, m, h));
    e.push_back(ops::masked_softmax(logits, mask, 1));
  }
  return e;
}

/// v'_i = concat_h relu(sum_j e^h_ij (Wv v_j)_h).
inline Tensor gat_update(const Tensor& v, const std::vector<Tensor>& edges,
                         const Linear& value) {
  const std::size_t heads = edges.size();
  const std::size_t d = value.weight.rows();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("gat_update: hidden width not divisible by head count");
  }
  const std::size_t dh = d / heads;
  const Tensor projected = value(v);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(
        ops::relu(ops::matmul(edges[h], ops::slice_cols(projected, h * dh, dh))));
  }
  return ops::concat_cols(outs);
}

struct RelationGraph {
  GraphKind kind = GraphKind::kImplicit;
  std::vector<std::uint16_t> labels;  // empty for the implicit graph
  NeighborSets neighbors;
  std::vector<Tensor> alpha;  // H x (m x m)
  std::vector<Tensor> edges;  // H x (m x m), zero outside neighbors
  Tensor nodes;               // v', m x d
};

/// Runs one graph on already projected node features.
inline RelationGraph build_graph(GraphKind kind, const Tensor& v,
                                 const std::vector<std::uint16_t>& labels,
                                 const ParameterStore& store, const LinearCache& lin,
                                 const ModelConfig& cfg) {
  const std::string p = relation::prefix(kind);
  RelationGraph g;
  g.kind = kind;
  g.alpha = correlation_scores(v, lin[p + ".query"], lin[p + ".key"], cfg.heads);
  const std::size_t m = v.rows();
  g.neighbors = topk_neighbors(head_average(g.alpha), m, cfg.k);
  if (kind == GraphKind::kImplicit) {
    g.edges = implicit_edges(g.alpha, g.neighbors);
  } else {
    g.labels = labels;
    g.edges = explicit_edges(g.alpha, g.neighbors, labels,
                             store.get(p + ".label_bias"));
  }
  g.nodes = gat_update(v, g.edges, lin[p + ".value"]);
  return g;
}

/// Projects raw object features to width d and builds the implicit,
/// semantic and spatial graphs with separate parameters.
inline std::array<RelationGraph, kNumGraphs> encode_image(
    const Tensor& features, const std::vector<std::uint16_t>& semantic_labels,
    const std::vector<std::uint16_t>& spatial_labels, const ParameterStore& store,
    const LinearCache& lin, const ModelConfig& cfg, bool training, Rng& rng) {
  const std::size_t m = features.rows();
  if (m < 2) throw DataError("degenerate scene: relation graphs need m >= 2");
  if (semantic_labels.size() != m * m || spatial_labels.size() != m * m) {
    throw DimensionError("label matrices must be m x m");
  }
  Tensor v = lin["relation.object_proj"](features);
  v = ops::dropout(v, cfg.dropout, training, rng);
  return {build_graph(GraphKind::kImplicit, v, {}, store, lin, cfg),
          build_graph(GraphKind::kSemantic, v, semantic_labels, store, lin, cfg),
          build_graph(GraphKind::kSpatial, v, spatial_labels, store, lin, cfg)};
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_RELATION_ENCODER_HPP_
