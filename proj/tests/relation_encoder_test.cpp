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

#include <cmath>

#include <gtest/gtest.h>

#include "graphfuse/relation_encoder.hpp"
#include "suites.hpp"
#include "test_util.hpp"

namespace graphfuse {
namespace {

Linear fixed_linear(std::size_t out, std::size_t in, std::vector<double> w) {
  return Linear{Tensor({out, in}, std::move(w)), Tensor()};
}

TEST(CorrelationScores, OrthogonalIdentityExample) {
  const Linear id = fixed_linear(2, 2, {1, 0, 0, 1});
  const auto a = correlation_scores(Tensor::matrix(2, 2, {1, 0, 0, 1}), id, id, 1);
  // Single head of width 2: scores are dot products over sqrt(2).
  EXPECT_DOUBLE_EQ(a[0].at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(a[0].at(0, 0), 1.0 / std::sqrt(2.0));
}

TEST(CorrelationScores, ZeroQueryGivesZeroScores) {
  Rng rng(1);
  const Linear zero = fixed_linear(4, 4, std::vector<double>(16, 0.0));
  const Linear key = fixed_linear(4, 4, testing::values(testing::random_tensor({4, 4}, rng)));
  for (const Tensor& h : correlation_scores(testing::random_tensor({3, 4}, rng), zero, key, 2))
    for (double x : h.data()) EXPECT_EQ(x, 0.0);
}

TEST(CorrelationScores, RejectsSingleObjectAndBadHeads) {
  const Linear id = fixed_linear(2, 2, {1, 0, 0, 1});
  EXPECT_THROW(correlation_scores(Tensor::matrix(1, 2, {1, 0}), id, id, 1), DataError);
  EXPECT_THROW(correlation_scores(Tensor::matrix(2, 2, {1, 0, 0, 1}), id, id, 3), ConfigError);
}

TEST(TopK, ExcludesSelfAndKeepsLargest) {
  const double inf = 0.0;  // the diagonal is ignored whatever it holds
  const std::vector<double> s = {inf, 0.9, 0.5, 0.1,  //
                                 0.9, inf, 0.5, 0.1,  //
                                 0.1, 0.2, inf, 0.3,  //
                                 0.4, 0.4, 0.4, 9.0};
  const auto n = topk_neighbors(s, 4, 2);
  EXPECT_EQ(n[0], (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(n[1], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(n[2], (std::vector<std::size_t>{1, 3}));
  // Three-way tie: lower indices win.
  EXPECT_EQ(n[3], (std::vector<std::size_t>{0, 1}));
}

TEST(TopK, SaturatesAtAllOtherNodes) {
  const std::vector<double> s(25, 1.0);
  for (const auto& row : topk_neighbors(s, 5, 9)) EXPECT_EQ(row.size(), 4u);
  const auto pair = topk_neighbors(std::vector<double>{0, 1, 1, 0}, 2, 1);
  EXPECT_EQ(pair[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(pair[1], (std::vector<std::size_t>{0}));
}

TEST(TopK, RejectsZeroK) {
  EXPECT_THROW(topk_neighbors(std::vector<double>(4, 0.0), 2, 0), ConfigError);
}

TEST(TopK, InvariantUnderMonotoneTransform) {
  Rng rng(5);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> s(36), t(36);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.normal();
      t[i] = std::exp(3.0 * s[i]) - 7.0;
    }
    EXPECT_EQ(topk_neighbors(s, 6, 3), topk_neighbors(t, 6, 3));
  }
}

TEST(TopK, MatchesSelectionOracle) {
  Rng rng(11);
  for (int c = 0; c < 200; ++c) EXPECT_EQ(suites::topk_case(rng), 0.0) << "case " << c;
}

TEST(Edges, UniformScoresSpreadEvenly) {
  const Tensor a = Tensor::matrix(4, 4, std::vector<double>(16, 0.3));
  const NeighborSets n = {{1, 2, 3}, {0}, {0, 1, 3}, {0, 1, 2}};
  const auto e = implicit_edges({a}, n);
  EXPECT_NEAR(e[0].at(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(e[0].at(0, 0), 0.0);
  EXPECT_EQ(e[0].at(1, 0), 1.0);
}

TEST(Edges, LargeOpposingBiasesSaturate) {
  const Tensor a = Tensor::matrix(3, 3, std::vector<double>(9, 0.0));
  const NeighborSets n = {{1, 2}, {0, 2}, {0, 1}};
  const std::vector<std::uint16_t> labels = {0, 1, 2, 0, 0, 0, 0, 0, 0};
  const Tensor bias = Tensor::matrix(1, 3, {0.0, 40.0, -40.0});
  const auto e = explicit_edges({a}, n, labels, bias);
  EXPECT_NEAR(e[0].at(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(e[0].at(0, 2), 0.0, 1e-30);
}

TEST(Edges, LabelOutsideTableIsDataError) {
  const Tensor a = Tensor::matrix(2, 2, std::vector<double>(4, 0.0));
  const NeighborSets n = {{1}, {0}};
  EXPECT_THROW(explicit_edges({a}, n, {0, 5, 0, 0}, Tensor::matrix(1, 3, {0, 0, 0})),
               DataError);
}

TEST(Edges, RowShiftInvariance) {
  Rng rng(3);
  const Tensor a = testing::random_tensor({5, 5}, rng);
  std::vector<double> shifted = testing::values(a);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) shifted[i * 5 + j] += 10.0 * static_cast<double>(i);
  const auto n = topk_neighbors(a.data(), 5, 3);
  const auto e1 = implicit_edges({a}, n);
  const auto e2 = implicit_edges({Tensor({5, 5}, shifted)}, n);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(e1[0][i], e2[0][i], 1e-12);
}

TEST(Edges, MatchNaiveSoftmaxOracles) {
  Rng rng(12);
  for (int c = 0; c < 100; ++c) EXPECT_LT(suites::edges_case(rng), 1e-12) << "case " << c;
}

TEST(Edges, ZeroBiasesReduceToImplicit) {
  Rng rng(13);
  for (int c = 0; c < 100; ++c) EXPECT_EQ(suites::zero_bias_case(rng), 0.0);
}

TEST(GatUpdate, SingleNeighborIdentityAggregation) {
  const Tensor v = Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0});
  const Tensor e = Tensor::matrix(2, 2, {0.0, 1.0, 1.0, 0.0});
  const Tensor out = gat_update(v, {e}, fixed_linear(2, 2, {1, 0, 0, 1}));
  EXPECT_EQ(testing::values(out), (std::vector<double>{3.0, 4.0, 1.0, 2.0}));
}

TEST(GatUpdate, WidthNotDivisibleIsConfigError) {
  const Tensor v = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor e = Tensor::matrix(2, 2, {0.0, 1.0, 1.0, 0.0});
  EXPECT_THROW(gat_update(v, {e, e}, fixed_linear(3, 3, std::vector<double>(9, 1.0))),
               ConfigError);
}

TEST(GatUpdate, MatchesDoubleLoopOracle) {
  Rng rng(14);
  for (int c = 0; c < 100; ++c) EXPECT_LT(suites::gat_case(rng), 1e-12) << "case " << c;
}

TEST(GatUpdate, GradientsMatchFiniteDifferences) {
  Rng rng(15);
  for (int c = 0; c < 3; ++c) {
    suites::RelationCase rc(rng);
    Tensor v = testing::random_tensor({rc.m, rc.cfg.d}, rng, true);
    const auto loss = [&] {
      const LinearCache lin(rc.store);
      const auto g = build_graph(GraphKind::kSemantic, v, rc.semantic, rc.store, lin, rc.cfg);
      return testing::probe(g.nodes);
    };
    for (const auto& g : check_gradients(rc.store, loss, parameter_group))
      EXPECT_LT(g.max_rel_error, 1e-4) << g.group;
    EXPECT_LT(testing::max_gradient_error({v}, loss), 1e-4);
  }
}

TEST(SpatialLabels, ContainmentAndDirectionExamples) {
  const Box outer{0.1, 0.1, 0.9, 0.9}, inner{0.3, 0.3, 0.4, 0.4};
  EXPECT_EQ(spatial_label(inner, outer), kInside);
  EXPECT_EQ(spatial_label(outer, inner), kContains);
  const Box l{0.15, 0.45, 0.25, 0.55}, r{0.55, 0.45, 0.65, 0.55};
  EXPECT_EQ(spatial_label(l, r), kLeftOf);
  EXPECT_EQ(spatial_label(r, l), kRightOf);
  const Box top{0.4, 0.1, 0.5, 0.2}, bottom{0.4, 0.4, 0.5, 0.5};
  EXPECT_EQ(spatial_label(top, bottom), kAbove);
  EXPECT_EQ(spatial_label(bottom, top), kBelow);
  const Box far{0.9, 0.9, 0.95, 0.95}, near{0.0, 0.0, 0.05, 0.05};
  EXPECT_EQ(spatial_label(near, far), kSpatialNone);
}

TEST(SpatialLabels, TwoObjectsGetOneLabelEachWay) {
  const auto l = synthesize_spatial_labels({Box{0.1, 0.4, 0.2, 0.5}, Box{0.5, 0.4, 0.6, 0.5}});
  EXPECT_EQ(l, (std::vector<std::uint16_t>{0, kLeftOf, kRightOf, 0}));
}

TEST(SpatialLabels, MatchRuleOracleOnRandomBoxes) {
  Rng rng(16);
  for (int c = 0; c < 1000; ++c) {
    std::vector<Box> boxes;
    const std::size_t m = static_cast<std::size_t>(rng.between(2, 8));
    for (std::size_t i = 0; i < m; ++i) {
      // Coarse grid so that touching edges and shared centers occur.
      const double x = std::round(rng.uniform(0.0, 0.8) * 20) / 20;
      const double y = std::round(rng.uniform(0.0, 0.8) * 20) / 20;
      const double w = std::round(rng.uniform(0.05, 0.2) * 20) / 20 + 0.05;
      const double h = std::round(rng.uniform(0.05, 0.2) * 20) / 20 + 0.05;
      boxes.push_back({x, y, x + w, y + h});
    }
    const auto got = synthesize_spatial_labels(boxes);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        EXPECT_EQ(got[i * m + j], i == j ? std::uint16_t{kSpatialNone}
                                         : oracle::spatial_rule(boxes[i], boxes[j]));
  }
}

TEST(EncodeImage, EqualParametersAndZeroBiasesGiveEqualGraphs) {
  ModelConfig cfg;
  cfg.d_in = 6;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.k = 2;
  ParameterStore s;
  Rng rng(17);
  relation::add_params(s, cfg, 4, kNumSpatialLabels, rng);
  for (const char* part : {".query", ".key", ".value"})
    for (const char* g : {"relation.semantic", "relation.spatial"})
      for (const char* w : {".direction", ".gain"}) {
        const auto src = s.get(std::string("relation.implicit") + part + w).data();
        std::copy(src.begin(), src.end(), s.get(std::string(g) + part + w).data().begin());
      }
  const Tensor f = testing::random_tensor({5, 6}, rng);
  const auto sem = suites::random_labels(5, 4, rng);
  const auto spa = suites::random_labels(5, kNumSpatialLabels, rng);
  const LinearCache lin(s);
  Rng unused(0);
  const auto g = encode_image(f, sem, spa, s, lin, cfg, false, unused);
  for (std::size_t i = 0; i < g[0].nodes.numel(); ++i) {
    EXPECT_EQ(g[0].nodes[i], g[1].nodes[i]);
    EXPECT_EQ(g[0].nodes[i], g[2].nodes[i]);
  }
}

TEST(EncodeImage, TwoObjectsNeighborEachOther) {
  ModelConfig cfg;
  cfg.d_in = 6;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.k = 1;
  ParameterStore s;
  Rng rng(18);
  relation::add_params(s, cfg, 4, kNumSpatialLabels, rng);
  const LinearCache lin(s);
  const auto g = encode_image(testing::random_tensor({2, 6}, rng), {0, 1, 2, 0}, {0, 1, 2, 0},
                              s, lin, cfg, false, rng);
  for (const auto& graph : g) {
    EXPECT_EQ(graph.neighbors, (NeighborSets{{1}, {0}}));
    for (const Tensor& e : graph.edges) {
      EXPECT_EQ(e.at(0, 1), 1.0);
      EXPECT_EQ(e.at(1, 0), 1.0);
    }
  }
}

TEST(EncodeImage, RejectsBadInputs) {
  ModelConfig cfg;
  cfg.d_in = 6;
  cfg.d = 8;
  cfg.heads = 2;
  ParameterStore s;
  Rng rng(19);
  relation::add_params(s, cfg, 4, kNumSpatialLabels, rng);
  const LinearCache lin(s);
  EXPECT_THROW(encode_image(testing::random_tensor({1, 6}, rng), {0}, {0}, s, lin, cfg, false, rng),
               DataError);
  EXPECT_THROW(encode_image(testing::random_tensor({3, 6}, rng), {0}, {0}, s, lin, cfg, false, rng),
               DimensionError);
}

TEST(EncodeImage, MatchesComposedLoopOracle) {
  Rng rng(20);
  for (int c = 0; c < 20; ++c) {
    suites::RelationCase rc(rng);
    const Tensor f = testing::random_tensor({rc.m, rc.cfg.d_in}, rng);
    const LinearCache lin(rc.store);
    Rng unused(0);
    const auto graphs =
        encode_image(f, rc.semantic, rc.spatial, rc.store, lin, rc.cfg, false, unused);
    const Linear& proj = lin["relation.object_proj"];
    const oracle::Mat v =
        oracle::project(oracle::from(f), oracle::from(proj.weight), testing::values(proj.bias));
    for (GraphKind kind : kGraphKinds) {
      const std::string p = relation::prefix(kind);
      const auto alpha =
          oracle::head_scores(oracle::project(v, oracle::from(lin[p + ".query"].weight)),
                              oracle::project(v, oracle::from(lin[p + ".key"].weight)),
                              rc.cfg.heads);
      const auto n = oracle::topk(oracle::head_mean(alpha), rc.cfg.k);
      std::vector<oracle::Mat> e;
      for (std::size_t h = 0; h < rc.cfg.heads; ++h) {
        oracle::Mat logits = alpha[h];
        if (kind != GraphKind::kImplicit) {
          const Tensor& t = rc.store.get(p + ".label_bias");
          std::vector<double> row;
          for (std::size_t l = 0; l < t.cols(); ++l) row.push_back(t.at(h, l));
          logits = oracle::add_label_bias(logits, rc.labels(kind), row);
        }
        e.push_back(oracle::neighbor_softmax(logits, n));
      }
      const oracle::Mat want = oracle::gat(v, e, oracle::from(lin[p + ".value"].weight));
      EXPECT_LT(oracle::max_abs_diff(want, graphs[static_cast<std::size_t>(kind)].nodes), 1e-9);
    }
  }
}

}  // namespace
}  // namespace graphfuse
