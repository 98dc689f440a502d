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

// The full network: question encoder, three relation graphs, question-guided
// fusion, object filtering and the answer classifier.

#ifndef GRAPHFUSE_MODEL_HPP_
#define GRAPHFUSE_MODEL_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "graphfuse/config.hpp"
#include "graphfuse/fusion.hpp"
#include "graphfuse/nn.hpp"
#include "graphfuse/object_filter.hpp"
#include "graphfuse/predictor.hpp"
#include "graphfuse/question_encoder.hpp"
#include "graphfuse/relation_encoder.hpp"

namespace graphfuse {

/// Sizes taken from the corpus vocabularies. Label counts include id 0.
struct VocabSizes {
  std::size_t question_tokens = 0;
  std::size_t answers = 0;
  std::size_t semantic_labels = 0;
  std::size_t spatial_labels = kNumSpatialLabels;

  bool operator==(const VocabSizes&) const = default;
};

/// One question about one scene, ready for the network.
struct ModelInput {
  Tensor features;                              // m x d_in
  std::vector<std::uint16_t> semantic_labels;   // m x m
  std::vector<std::uint16_t> spatial_labels;    // m x m
  std::vector<std::uint32_t> tokens;            // 1..|vocab|, no padding
};

/// Intermediate quantities of one forward pass.
struct ForwardTrace {
  std::array<RelationGraph, kNumGraphs> graphs;
  std::array<std::vector<Tensor>, kNumGraphs> cross_attention;  // empty if GFM off
  Tensor beta;
  Tensor fused_alpha;
  std::optional<PriorityRanking> ranking;  // empty if OF off
  Tensor pooled_visual;
  Tensor logits;
};

class FusionNetwork {
 public:
  FusionNetwork(ModelConfig cfg, VocabSizes sizes)
      : cfg_(std::move(cfg)), sizes_(sizes) {
    cfg_.validate();
    if (sizes_.question_tokens == 0 || sizes_.answers == 0 ||
        sizes_.semantic_labels == 0 || sizes_.spatial_labels == 0) {
      throw ConfigError("vocabulary sizes must be positive");
    }
    Rng rng(cfg_.seed);
    question::add_params(store_, cfg_, sizes_.question_tokens, rng);
    relation::add_params(store_, cfg_, sizes_.semantic_labels,
                         sizes_.spatial_labels, rng);
    fusion::add_params(store_, cfg_, rng);
    filter::add_params(store_, cfg_, rng);
    predictor::add_params(store_, cfg_, sizes_.answers, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const VocabSizes& sizes() const { return sizes_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  static bool is_encoder_param(const std::string& name) {
    return name.rfind("question.", 0) == 0;
  }

  /// Answer logits. Question padding is dropped: attention masks make the
  /// padded and unpadded encodings identical at valid positions.
  Tensor forward(const ModelInput& in, const LinearCache& lin, bool training,
                 Rng& rng, ForwardTrace* trace = nullptr) const {
    const std::size_t m = in.features.rows();
    if (in.features.cols() != cfg_.d_in) {
      throw DimensionError("object features must be m x d_in");
    }
    const QuestionBatch qb = make_question_batch({in.tokens}, in.tokens.size());
    const EncodedQuestion enc = encode(qb, store_, lin, cfg_, training, rng);
    const Tensor& tokens = enc.tokens[0];
    const Tensor& q = enc.pooled[0];

    auto graphs = encode_image(in.features, in.semantic_labels, in.spatial_labels,
                               store_, lin, cfg_, training, rng);

    std::vector<Tensor> nodes, alphas;
    Tensor beta;
    std::array<std::vector<Tensor>, kNumGraphs> cross;
    if (cfg_.enable_gfm) {
      const QuestionKeys keys =
          project_question(tokens, qb.valid_mask[0], lin["fusion.question_key"],
                           lin["fusion.question_value"]);
      std::vector<Tensor> pooled;
      for (std::size_t g = 0; g < kNumGraphs; ++g) {
        CrossAttention ca =
            cross_attend(graphs[g].nodes, keys, lin["fusion.visual_query"], cfg_.heads);
        nodes.push_back(ca.nodes);
        cross[g] = std::move(ca.attention);
        pooled.push_back(ops::mean_pool(graphs[g].nodes, Mask(m, 1)));
      }
      beta = graph_weights(q, pooled);
    } else {
      for (const auto& g : graphs) nodes.push_back(g.nodes);
      beta = uniform_graph_weights();
    }
    for (const auto& g : graphs) alphas.push_back(ops::average(g.edges));
    const FusedGraph fused = fuse(nodes, alphas, beta);

    std::optional<PriorityRanking> ranking;
    Tensor visual;
    if (cfg_.enable_of) {
      ranking = filter_objects(fused.nodes, fused.alpha, cfg_.P, lin["filter.query"],
                               lin["filter.key"], cfg_.kept_row_renorm);
      visual = ranking->pooled;
    } else {
      visual = uniform_pool(fused.nodes);
    }
    Tensor logits = classify(joint(q, visual), lin, cfg_.classifier_dropout,
                             training, rng);
    if (trace) {
      trace->graphs = std::move(graphs);
      trace->cross_attention = std::move(cross);
      trace->beta = beta;
      trace->fused_alpha = fused.alpha;
      trace->ranking = std::move(ranking);
      trace->pooled_visual = visual;
      trace->logits = logits;
    }
    return logits;
  }

  /// Eval-mode argmax without recording a graph.
  std::size_t predict_answer(const ModelInput& in, ForwardTrace* trace = nullptr) const {
    NoGradGuard guard;
    const LinearCache lin(store_);
    Rng unused(0);
    const Tensor logits = forward(in, lin, false, unused, trace);
    return predict(logits.data());
  }

 private:
  ModelConfig cfg_;
  VocabSizes sizes_;
  ParameterStore store_;
};

}  // namespace graphfuse

#endif  // GRAPHFUSE_MODEL_HPP_
