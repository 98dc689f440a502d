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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "graphfuse/object_filter.hpp"
#include "suites.hpp"
#include "test_util.hpp"

namespace graphfuse {
namespace {

TEST(Priority, SquaredColumnSumsExample) {
  // Column sums 1.5 and 0.5 -> squares 2.25 and 0.25.
  const Tensor e = Tensor::matrix(2, 2, {0.75, 0.25, 0.75, 0.25});
  const Tensor g = priority(e);
  EXPECT_NEAR(g[0], 0.9, 1e-15);
  EXPECT_NEAR(g[1], 0.1, 1e-15);
}

TEST(Priority, UniformRelationsGiveUniformPriority) {
  const Tensor e = Tensor::matrix(4, 4, std::vector<double>(16, 0.25));
  const Tensor g = priority(e);
  for (double x : g.data()) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(Priority, MatchesLoopOracle) {
  Rng rng(1);
  for (int c = 0; c < 100; ++c) EXPECT_LT(suites::priority_case(rng), 1e-12) << "case " << c;
}

TEST(TopP, DescendingWithTiesToLowerIndex) {
  const std::vector<double> s = {0.2, 0.4, 0.1, 0.4, 0.3};
  EXPECT_EQ(top_p(s, 3), (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_EQ(top_p(s, 9).size(), 5u);
  EXPECT_THROW(top_p(s, 0), ConfigError);
}

TEST(Filter, KeepsEveryObjectWhenPCoversScene) {
  Rng rng(2);
  for (int c = 0; c < 100; ++c) EXPECT_EQ(suites::keep_all_case(rng), 0.0);
}

TEST(Filter, SingleKeptObjectPoolsItself) {
  Rng rng(3);
  suites::FusionCase c(rng);
  const LinearCache lin(c.store);
  const PriorityRanking r =
      filter_objects(c.nodes[0], c.alphas[0], 1, lin["filter.query"], lin["filter.key"], true);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_DOUBLE_EQ(r.kept_gamma[0], 1.0);
  for (std::size_t k = 0; k < c.cfg.d; ++k)
    EXPECT_DOUBLE_EQ(r.pooled[k], c.nodes[0].at(r.kept[0], k));
}

TEST(Filter, KeptSetHasLargestPriorities) {
  Rng rng(4);
  for (int n = 0; n < 50; ++n) {
    suites::FusionCase c(rng);
    const LinearCache lin(c.store);
    const PriorityRanking r = filter_objects(c.nodes[1], c.alphas[1], c.cfg.P,
                                             lin["filter.query"], lin["filter.key"], false);
    double lowest_kept = INFINITY;
    for (std::size_t i : r.kept) lowest_kept = std::min(lowest_kept, r.gamma[i]);
    for (std::size_t i = 0; i < c.m; ++i)
      if (std::find(r.kept.begin(), r.kept.end(), i) == r.kept.end()) {
        EXPECT_LE(r.gamma[i], lowest_kept);
      }
  }
}

TEST(Filter, MatchesAggregationOracle) {
  Rng rng(5);
  for (int c = 0; c < 100; ++c) EXPECT_LT(suites::aggregation_case(rng), 1e-12) << "case " << c;
}

TEST(Filter, RowRescalingChangesOnlyPriorities) {
  Rng rng(6);
  suites::FusionCase c(rng);
  c.cfg.P = c.m;
  const LinearCache lin(c.store);
  const Linear& q = lin["filter.query"];
  const Linear& k = lin["filter.key"];
  const auto a = filter_objects(c.nodes[0], c.alphas[0], c.m, q, k, true);
  const auto b = filter_objects(c.nodes[0], c.alphas[0], c.m, q, k, false);
  EXPECT_EQ(a.kept, b.kept);
  EXPECT_EQ(testing::values(a.kept_relations), testing::values(b.kept_relations));
  EXPECT_LT(suites::total_sum_error(a.kept_gamma), 1e-12);
  EXPECT_LT(suites::total_sum_error(b.kept_gamma), 1e-12);
}

TEST(Filter, UniformPoolIsMean) {
  const Tensor v = Tensor::matrix(2, 2, {1.0, 4.0, 3.0, 0.0});
  EXPECT_EQ(testing::values(uniform_pool(v)), (std::vector<double>{2.0, 2.0}));
}

TEST(Filter, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  for (int n = 0; n < 3; ++n) {
    suites::FusionCase c(rng);
    Tensor nodes(c.nodes[0].shape(), testing::values(c.nodes[0]), true);
    Tensor alpha(c.alphas[0].shape(), testing::values(c.alphas[0]), true);
    for (bool renorm : {true, false}) {
      const auto loss = [&] {
        const LinearCache lin(c.store);
        return testing::probe(filter_objects(nodes, alpha, c.cfg.P, lin["filter.query"],
                                             lin["filter.key"], renorm)
                                  .pooled);
      };
      for (const auto& g : check_gradients(c.store, loss, parameter_group))
        EXPECT_LT(g.max_rel_error, 1e-4) << g.group;
      EXPECT_LT(testing::max_gradient_error({nodes, alpha}, loss), 1e-4);
    }
  }
}

}  // namespace
}  // namespace graphfuse
