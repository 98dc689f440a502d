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

// Training, evaluation, parameter sweeps and attention dumps.
//
// Everything here is a deterministic function of the configuration and the
// corpus: batches are shuffled and dropout masks drawn from generators
// seeded by the configuration, and examples are processed in order.

#ifndef GRAPHFUSE_TRAINER_HPP_
#define GRAPHFUSE_TRAINER_HPP_

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphfuse/checkpoint.hpp"
#include "graphfuse/config.hpp"
#include "graphfuse/model.hpp"
#include "graphfuse/optim.hpp"
#include "graphfuse/predictor.hpp"
#include "graphfuse/synth.hpp"

namespace graphfuse {

/// Correct/total counts per question type.
struct Accuracy {
  std::array<std::size_t, synth::kNumQuestionTypes> correct{};
  std::array<std::size_t, synth::kNumQuestionTypes> total{};

  void add(synth::QuestionType t, bool ok) {
    const auto i = static_cast<std::size_t>(t);
    correct[i] += ok;
    ++total[i];
  }
  double of(synth::QuestionType t) const {
    const auto i = static_cast<std::size_t>(t);
    return total[i] ? static_cast<double>(correct[i]) / static_cast<double>(total[i]) : 0.0;
  }
  std::size_t count() const { return total[0] + total[1] + total[2]; }
  double overall() const {
    const std::size_t n = count();
    return n ? static_cast<double>(correct[0] + correct[1] + correct[2]) /
                   static_cast<double>(n)
             : 0.0;
  }
};

inline nlohmann::json to_json(const Accuracy& a) {
  nlohmann::json j;
  for (std::size_t t = 0; t < synth::kNumQuestionTypes; ++t) {
    j[synth::question_type_name(static_cast<synth::QuestionType>(t))] =
        a.of(static_cast<synth::QuestionType>(t));
  }
  j["all"] = a.overall();
  j["count"] = a.count();
  return j;
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double encoder_lr = 0.0;
  double train_loss = 0.0;
  Accuracy train;  // running, dropout active
  Accuracy val;
};

struct RunReport {
  std::uint64_t fingerprint = 0;
  std::vector<EpochRecord> epochs;
  Accuracy final_train;  // eval mode
  Accuracy final_val;
  double wall_seconds = 0.0;  // not serialized; see to_lines()

  /// One JSON object per line. Wall time is left out so that identical runs
  /// produce identical files.
  std::string to_lines(const ModelConfig& cfg) const {
    std::string out;
    nlohmann::json head = {{"kind", "config"},
                           {"fingerprint", hex64(fingerprint)},
                           {"config", to_json(cfg)}};
    out += head.dump() + "\n";
    for (const auto& e : epochs) {
      nlohmann::json j = {{"kind", "epoch"},        {"epoch", e.epoch},
                          {"lr", e.lr},             {"encoder_lr", e.encoder_lr},
                          {"train_loss", e.train_loss}, {"train", to_json(e.train)},
                          {"val", to_json(e.val)}};
      out += j.dump() + "\n";
    }
    nlohmann::json tail = {{"kind", "final"},
                           {"train", to_json(final_train)},
                           {"val", to_json(final_val)}};
    out += tail.dump() + "\n";
    return out;
  }
};

/// Network inputs for a split, built once.
inline std::vector<ModelInput> prepare_inputs(const std::vector<synth::SceneInstance>& split,
                                              std::size_t d_in) {
  std::vector<ModelInput> out;
  out.reserve(split.size());
  for (const auto& s : split) out.push_back(synth::to_model_input(s, d_in));
  return out;
}

inline Accuracy evaluate(const FusionNetwork& net, const std::vector<ModelInput>& inputs,
                         const std::vector<synth::SceneInstance>& split) {
  Accuracy acc;
  for (std::size_t i = 0; i < split.size(); ++i) {
    acc.add(split[i].question_type, net.predict_answer(inputs[i]) == split[i].answer);
  }
  return acc;
}

inline Accuracy evaluate(const FusionNetwork& net,
                         const std::vector<synth::SceneInstance>& split) {
  return evaluate(net, prepare_inputs(split, net.config().d_in), split);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `net` on corpus.train for cfg.epochs epochs and evaluates on
/// corpus.val after every epoch.
inline RunReport train(FusionNetwork& net, const synth::Corpus& corpus,
                       const EpochCallback& on_epoch = {}) {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig& cfg = net.config();
  if (corpus.manifest.options.d_in != cfg.d_in) {
    throw ConfigError("corpus d_in " + std::to_string(corpus.manifest.options.d_in) +
                      " does not match config d_in " + std::to_string(cfg.d_in));
  }
  if (corpus.train.empty()) throw DataError("training split is empty");
  const std::vector<ModelInput> train_in = prepare_inputs(corpus.train, cfg.d_in);
  const std::vector<ModelInput> val_in = prepare_inputs(corpus.val, cfg.d_in);
  const std::size_t answers = net.sizes().answers;

  Rng order_rng(splitmix64(cfg.seed ^ 0x6f72646572ULL));
  Rng dropout_rng(splitmix64(cfg.seed ^ 0x64726f70ULL));
  std::vector<std::size_t> order(corpus.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  RunReport report;
  report.fingerprint = fingerprint(cfg);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(cfg.schedule, epoch);
    rec.encoder_lr = encoder_lr_at(cfg.schedule, epoch);
    const auto lr_for = [&](const std::string& name) {
      return FusionNetwork::is_encoder_param(name) ? rec.encoder_lr : rec.lr;
    };
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(e - b);
      LinearCache lin(net.params(), true);
      for (std::size_t i = b; i < e; ++i) {
        const std::size_t idx = order[i];
        const Tensor logits = net.forward(train_in[idx], lin, true, dropout_rng);
        const Tensor loss = bce_loss(logits, one_hot(corpus.train[idx].answer, answers));
        ops::scale(loss, weight).backward();
        loss_sum += loss.item();
        rec.train.add(corpus.train[idx].question_type,
                      predict(logits.data()) == corpus.train[idx].answer);
      }
      lin.flush();
      adamax_step(net.params(), lr_for, cfg.adamax);
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(rec.train_loss)) {
      throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    }
    rec.val = evaluate(net, val_in, corpus.val);
    if (on_epoch) on_epoch(rec);
    report.epochs.push_back(rec);
  }
  report.final_train = evaluate(net, train_in, corpus.train);
  report.final_val = evaluate(net, val_in, corpus.val);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

enum class SweepParam { kK, kP };

inline SweepParam sweep_param_from(const std::string& name) {
  if (name == "k") return SweepParam::kK;
  if (name == "P") return SweepParam::kP;
  throw UsageError("sweep parameter must be k or P, got " + name);
}

struct SweepRow {
  std::size_t value = 0;
  double train_accuracy = 0.0;
  Accuracy val;
};

struct SweepResult {
  std::string param;
  std::vector<SweepRow> rows;

  /// Aligned text table.
  std::string table() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%6s %10s %10s %10s %10s %10s\n", param.c_str(),
                  "train", "val", "semantic", "spatial", "mixed");
    out += line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%6zu %10.4f %10.4f %10.4f %10.4f %10.4f\n", r.value,
                    r.train_accuracy, r.val.overall(),
                    r.val.of(synth::QuestionType::kSemantic),
                    r.val.of(synth::QuestionType::kSpatial),
                    r.val.of(synth::QuestionType::kMixed));
      out += line;
    }
    return out;
  }

  /// Tab-separated data for plotting.
  std::string tsv() const {
    std::string out = param + "\ttrain\tval\tsemantic\tspatial\tmixed\n";
    for (const auto& r : rows) {
      nlohmann::json v = {r.train_accuracy,
                          r.val.overall(),
                          r.val.of(synth::QuestionType::kSemantic),
                          r.val.of(synth::QuestionType::kSpatial),
                          r.val.of(synth::QuestionType::kMixed)};
      out += std::to_string(r.value);
      for (const auto& x : v) out += "\t" + x.dump();
      out += "\n";
    }
    return out;
  }

  /// Where the best validation accuracy sits: "interior" when both a
  /// smaller and a larger value score lower, otherwise "edge".
  std::string peak() const {
    if (rows.empty()) return "none";
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].val.overall() > rows[best].val.overall()) best = i;
    return best > 0 && best + 1 < rows.size() ? "interior" : "edge";
  }
};

using SweepCallback = std::function<void(const SweepRow&)>;

/// Trains one model per value with the same seed and corpus.
inline SweepResult sweep(const ModelConfig& base, const synth::Corpus& corpus,
                         SweepParam param, const std::vector<std::size_t>& values,
                         const SweepCallback& on_row = {}) {
  if (values.empty()) throw UsageError("sweep needs at least one value");
  SweepResult result;
  result.param = param == SweepParam::kK ? "k" : "P";
  for (std::size_t v : values) {
    ModelConfig cfg = base;
    (param == SweepParam::kK ? cfg.k : cfg.P) = v;
    cfg.validate();
    FusionNetwork net(cfg, corpus.sizes());
    const RunReport rep = train(net, corpus);
    SweepRow row{v, rep.final_train.overall(), rep.final_val};
    if (on_row) on_row(row);
    result.rows.push_back(row);
  }
  return result;
}

namespace detail {

inline nlohmann::json matrix_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t.at(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json vector_json(const Tensor& t) {
  return nlohmann::json(std::vector<double>(t.data().begin(), t.data().end()));
}

}  // namespace detail

/// One structured attention record: graph weights, question attention per
/// graph (head-averaged, m x L), the fused relation matrix, and the filter's
/// priority ranking with the kept set.
inline nlohmann::json attention_record(const FusionNetwork& net,
                                       const synth::SceneInstance& scene,
                                       std::size_t example_id) {
  ForwardTrace trace;
  const ModelInput in = synth::to_model_input(scene, net.config().d_in);
  const std::size_t predicted = net.predict_answer(in, &trace);
  const std::size_t m = scene.size();
  nlohmann::json j;
  j["example"] = example_id;
  j["question_type"] = synth::question_type_name(scene.question_type);
  j["objects"] = nlohmann::json::array();
  for (std::size_t i = 0; i < m; ++i) j["objects"].push_back(i);
  j["answer"] = scene.answer;
  j["predicted"] = predicted;
  j["beta"] = detail::vector_json(trace.beta);
  nlohmann::json cross = nlohmann::json::object();
  for (std::size_t g = 0; g < kNumGraphs; ++g) {
    if (trace.cross_attention[g].empty()) continue;
    cross[graph_name(kGraphKinds[g])] =
        detail::matrix_json(ops::average(trace.cross_attention[g]));
  }
  j["question_attention"] = cross;
  j["fused_alpha"] = detail::matrix_json(trace.fused_alpha);
  if (trace.ranking) {
    const PriorityRanking& r = *trace.ranking;
    j["gamma"] = detail::vector_json(r.gamma);
    std::vector<std::size_t> ranked(m);
    for (std::size_t i = 0; i < m; ++i) ranked[i] = i;
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      return r.gamma[a] > r.gamma[b];
    });
    j["gamma_ranking"] = ranked;
    j["kept"] = r.kept;
    j["kept_gamma"] = detail::vector_json(r.kept_gamma);
  } else {
    j["gamma"] = nullptr;
    j["gamma_ranking"] = nullptr;
    j["kept"] = nullptr;
    j["kept_gamma"] = nullptr;
  }
  return j;
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_TRAINER_HPP_
