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

#include "graphfuse/gradcheck.hpp"
#include "graphfuse/predictor.hpp"
#include "test_util.hpp"

namespace graphfuse {
namespace {

TEST(Joint, ElementwiseProduct) {
  const Tensor j = joint(Tensor::vector({1.0, -2.0, 3.0}), Tensor::vector({4.0, 5.0, 0.5}));
  EXPECT_EQ(testing::values(j), (std::vector<double>{4.0, -10.0, 1.5}));
  EXPECT_THROW(joint(Tensor::vector({1.0}), Tensor::vector({1.0, 2.0})), DimensionError);
}

TEST(Predict, ArgmaxWithTiesToLowerId) {
  EXPECT_EQ(predict(std::vector<double>{0.1, 0.7, 0.7, -1.0}), 1u);
  EXPECT_EQ(predict(std::vector<double>{3.0}), 0u);
  EXPECT_THROW(predict(std::vector<double>{}), DimensionError);
}

TEST(OneHot, RejectsOutOfRange) {
  EXPECT_EQ(one_hot(2, 4), (std::vector<double>{0, 0, 1, 0}));
  EXPECT_THROW(one_hot(4, 4), DataError);
}

class ClassifierTest : public ::testing::Test {
 protected:
  ClassifierTest() {
    cfg_.d = 6;
    cfg_.mlp_hidden = 5;
    Rng rng(2);
    predictor::add_params(store_, cfg_, 4, rng);
  }
  ModelConfig cfg_;
  ParameterStore store_;
};

TEST_F(ClassifierTest, MatchesHandComputedMlp) {
  Rng rng(3);
  const Tensor x = testing::random_tensor({6}, rng);
  const LinearCache lin(store_);
  Rng unused(0);
  const Tensor logits = classify(x, lin, 0.5, false, unused);
  const Linear& h = lin["classifier.hidden"];
  const Linear& o = lin["classifier.out"];
  std::vector<double> hidden(5);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = h.bias[r];
    for (std::size_t c = 0; c < 6; ++c) s += h.weight.at(r, c) * x[c];
    hidden[r] = std::max(0.0, s);
  }
  for (std::size_t a = 0; a < 4; ++a) {
    double s = o.bias[a];
    for (std::size_t r = 0; r < 5; ++r) s += o.weight.at(a, r) * hidden[r];
    EXPECT_NEAR(logits[a], s, 1e-12);
  }
}

TEST_F(ClassifierTest, DropoutOnlyInTraining) {
  Rng rng(4);
  const Tensor x = testing::random_tensor({6}, rng);
  const LinearCache lin(store_);
  Rng a(1), b(2);
  EXPECT_EQ(testing::values(classify(x, lin, 0.5, false, a)),
            testing::values(classify(x, lin, 0.5, false, b)));
  bool differs = false;
  for (int t = 0; t < 10 && !differs; ++t)
    differs = testing::values(classify(x, lin, 0.5, true, a)) !=
              testing::values(classify(x, lin, 0.5, false, b));
  EXPECT_TRUE(differs);
}

TEST_F(ClassifierTest, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  jitter_parameters(store_, rng);
  Tensor q = testing::random_tensor({6}, rng, true);
  Tensor v = testing::random_tensor({6}, rng, true);
  const std::vector<double> target = {0.0, 1.0, 0.3, 0.0};
  const auto loss = [&] {
    const LinearCache lin(store_);
    Rng unused(0);
    return bce_loss(classify(joint(q, v), lin, 0.0, false, unused), target);
  };
  for (const auto& g : check_gradients(store_, loss, parameter_group))
    EXPECT_LT(g.max_rel_error, 1e-4) << g.group;
  EXPECT_LT(testing::max_gradient_error({q, v}, loss), 1e-4);
}

}  // namespace
}  // namespace graphfuse
