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

// Central finite-difference checks of analytic gradients.

#ifndef GRAPHFUSE_GRADCHECK_HPP_
#define GRAPHFUSE_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "graphfuse/model.hpp"
#include "graphfuse/nn.hpp"
#include "graphfuse/predictor.hpp"
#include "graphfuse/relation_encoder.hpp"

namespace graphfuse {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  double floor = 1e-5;  // denominators never drop below this
};

struct GroupResult {
  std::string group;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares every parameter's analytic gradient of `loss` with central
/// differences. `loss` must rebuild its graph from the store on each call.
/// Results are keyed by `group_of(parameter name)`.
inline std::vector<GroupResult> check_gradients(
    ParameterStore& store, const std::function<Tensor()>& loss,
    const std::function<std::string(const std::string&)>& group_of,
    const GradCheckOptions& opt = {}) {
  store.zero_grad();
  loss().backward();
  std::map<std::string, GroupResult> groups;
  for (auto& [name, p] : store.entries()) {
    const std::vector<double> analytic(p.value.grad().begin(), p.value.grad().end());
    GroupResult& g = groups[group_of(name)];
    g.group = group_of(name);
    auto value = p.value.data();
    NoGradGuard guard;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + opt.step;
      const double up = loss().item();
      value[i] = saved - opt.step;
      const double down = loss().item();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      g.max_rel_error = std::max(g.max_rel_error, relative_error(analytic[i], numeric, opt.floor));
      ++g.checked;
    }
  }
  store.zero_grad();
  std::vector<GroupResult> out;
  for (auto& [_, g] : groups) out.push_back(g);
  return out;
}

/// "question.layer0.query.direction" -> "question.layer0.query".
inline std::string parameter_group(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

struct GradCheckReport {
  std::string variant;
  std::vector<GroupResult> groups;

  double max_error() const {
    double e = 0.0;
    for (const auto& g : groups) e = std::max(e, g.max_rel_error);
    return e;
  }
};

/// A tiny random network and example: d=8, m<=5, L<=5.
struct GradCheckFixture {
  ModelConfig cfg;
  VocabSizes sizes{10, 5, 7, kNumSpatialLabels};
  ModelInput input;
  std::vector<double> target;

  explicit GradCheckFixture(std::uint64_t seed, bool gfm = true, bool of = true) {
    cfg.d_in = 6;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.encoder_layers = 1;
    cfg.max_question_len = 5;
    cfg.k = 2;
    cfg.P = 3;
    cfg.mlp_hidden = 8;
    cfg.enable_gfm = gfm;
    cfg.enable_of = of;
    cfg.seed = seed;
    Rng rng(splitmix64(seed));
    const std::size_t m = static_cast<std::size_t>(rng.between(3, 5));
    const std::size_t L = static_cast<std::size_t>(rng.between(2, 5));
    std::vector<double> f(m * cfg.d_in);
    for (double& x : f) x = rng.normal();
    input.features = Tensor({m, cfg.d_in}, f);
    for (std::size_t i = 0; i < m * m; ++i) {
      const bool self = i / m == i % m;
      input.semantic_labels.push_back(
          self ? 0 : static_cast<std::uint16_t>(rng.below(sizes.semantic_labels)));
      input.spatial_labels.push_back(
          self ? 0 : static_cast<std::uint16_t>(rng.below(sizes.spatial_labels)));
    }
    for (std::size_t t = 0; t < L; ++t)
      input.tokens.push_back(static_cast<std::uint32_t>(1 + rng.below(sizes.question_tokens)));
    for (std::size_t a = 0; a < sizes.answers; ++a) target.push_back(rng.uniform());
  }
};

/// Perturbs every non-zero initial value (label biases, biases) so that
/// their gradients are exercised away from the symmetric starting point.
inline void jitter_parameters(ParameterStore& store, Rng& rng) {
  for (auto& [name, p] : store.entries()) {
    if (name.ends_with(".bias") || name.ends_with(".label_bias")) {
      for (double& v : p.value.data()) v += 0.1 * rng.normal();
    }
  }
}

inline GradCheckReport check_model(std::uint64_t seed, bool gfm, bool of,
                                   const GradCheckOptions& opt = {}) {
  GradCheckFixture fx(seed, gfm, of);
  FusionNetwork net(fx.cfg, fx.sizes);
  Rng jitter(splitmix64(seed + 1));
  jitter_parameters(net.params(), jitter);
  const auto loss = [&] {
    const LinearCache lin(net.params());
    Rng unused(0);
    return bce_loss(net.forward(fx.input, lin, false, unused), fx.target);
  };
  GradCheckReport r;
  r.variant = std::string(gfm ? "gfm" : "no-gfm") + "/" + (of ? "of" : "no-of");
  r.groups = check_gradients(net.params(), loss, parameter_group, opt);
  return r;
}

/// All four ablation variants for one seed.
inline std::vector<GradCheckReport> gradcheck_suite(std::uint64_t seed,
                                                    const GradCheckOptions& opt = {}) {
  std::vector<GradCheckReport> out;
  for (bool gfm : {true, false})
    for (bool of : {true, false}) out.push_back(check_model(seed, gfm, of, opt));
  return out;
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_GRADCHECK_HPP_
