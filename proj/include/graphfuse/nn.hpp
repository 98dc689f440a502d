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

#ifndef GRAPHFUSE_NN_HPP_
#define GRAPHFUSE_NN_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "graphfuse/errors.hpp"
#include "graphfuse/ops.hpp"
#include "graphfuse/random.hpp"
#include "graphfuse/tensor.hpp"

namespace graphfuse {

/// A learned tensor plus its Adamax state.
struct Parameter {
  Tensor value;
  std::vector<double> first_moment;  // m
  std::vector<double> inf_norm;      // u
  std::uint64_t step = 0;
};

/// Named parameters, iterated in sorted name order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Shape shape, std::vector<double> init) {
    if (params_.count(name)) {
      throw UsageError("duplicate parameter name: " + name);
    }
    Parameter p;
    p.value = Tensor(std::move(shape), std::move(init), true);
    p.first_moment.assign(p.value.numel(), 0.0);
    p.inf_norm.assign(p.value.numel(), 0.0);
    return params_.emplace(name, std::move(p)).first->second.value;
  }

  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  const Tensor& get(const std::string& name) const { return entry(name).value; }
  Tensor& get(const std::string& name) { return entry(name).value; }

  Parameter& entry(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("unknown parameter: " + name);
    return it->second;
  }
  const Parameter& entry(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("unknown parameter: " + name);
    return it->second;
  }

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }
  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& [_, p] : params_) p.value.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.numel();
    return n;
  }

 private:
  std::map<std::string, Parameter> params_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline std::vector<double> glorot_uniform(std::size_t fan_out, std::size_t fan_in,
                                          Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_out * fan_in);
  for (double& x : w) x = rng.uniform(-a, a);
  return w;
}

/// Effective weights of a weight-normalized linear map. `bias` may be
/// undefined for projections that carry none.
struct Linear {
  Tensor weight;
  Tensor bias;

  Tensor operator()(const Tensor& x) const {
    Tensor y = ops::matmul_nt(x, weight);
    return bias.defined() ? ops::add_bias(y, bias) : y;
  }
};

/// Registers `<prefix>.direction`, `<prefix>.gain` and optionally
/// `<prefix>.bias`. The gain starts at each row's norm so the initial
/// effective weight equals the Glorot draw.
inline void add_linear(ParameterStore& store, const std::string& prefix,
                       std::size_t in_dim, std::size_t out_dim, Rng& rng,
                       bool with_bias = true) {
  std::vector<double> dir = glorot_uniform(out_dim, in_dim, rng);
  std::vector<double> gain(out_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < in_dim; ++c) s += dir[r * in_dim + c] * dir[r * in_dim + c];
    gain[r] = std::sqrt(s);
  }
  store.add(prefix + ".direction", {out_dim, in_dim}, std::move(dir));
  store.add(prefix + ".gain", {out_dim}, std::move(gain));
  if (with_bias) {
    store.add(prefix + ".bias", {out_dim}, std::vector<double>(out_dim, 0.0));
  }
}

inline Linear materialize_linear(const ParameterStore& store,
                                 const std::string& prefix) {
  Linear lin;
  lin.weight = ops::weight_norm(store.get(prefix + ".direction"),
                                store.get(prefix + ".gain"));
  if (store.contains(prefix + ".bias")) lin.bias = store.get(prefix + ".bias");
  return lin;
}

/// Effective weights of every linear map in a store, built once and shared
/// by all examples of a batch.
///
/// In batch mode each effective weight is handed out as a fresh leaf, so
/// per-example backward passes stop there and only accumulate dL/dW. One
/// flush() at the end of the batch then pushes the accumulated gradient
/// through the weight normalization into direction and gain.
class LinearCache {
 public:
  explicit LinearCache(const ParameterStore& store, bool batch_mode = false) {
    static const std::string suffix = ".direction";
    for (const auto& [name, _] : store.entries()) {
      if (name.size() > suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        const std::string prefix = name.substr(0, name.size() - suffix.size());
        Linear lin = materialize_linear(store, prefix);
        if (batch_mode && lin.weight.requires_grad()) {
          Tensor leaf(lin.weight.shape(),
                      std::vector<double>(lin.weight.data().begin(),
                                          lin.weight.data().end()),
                      true);
          pending_.emplace_back(lin.weight, leaf);
          lin.weight = leaf;
        }
        linears_.emplace(prefix, std::move(lin));
      }
    }
  }

  const Linear& operator[](const std::string& prefix) const {
    auto it = linears_.find(prefix);
    if (it == linears_.end()) throw UsageError("unknown linear map: " + prefix);
    return it->second;
  }

  /// Batch mode only: backpropagates the accumulated weight gradients into
  /// the underlying parameters and clears them.
  void flush() {
    std::vector<Tensor> terms;
    for (auto& [graph_weight, leaf] : pending_) {
      bool any = false;
      for (double g : leaf.grad()) any = any || g != 0.0;
      if (!any) continue;
      Tensor upstream(leaf.shape(),
                      std::vector<double>(leaf.grad().begin(), leaf.grad().end()));
      terms.push_back(ops::sum(ops::mul(graph_weight, upstream)));
      leaf.zero_grad();
    }
    if (terms.empty()) return;
    Tensor total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
    total.backward();
  }

 private:
  std::map<std::string, Linear> linears_;
  std::vector<std::pair<Tensor, Tensor>> pending_;  // (graph weight, leaf)
};

}  // namespace graphfuse

#endif  // GRAPHFUSE_NN_HPP_
