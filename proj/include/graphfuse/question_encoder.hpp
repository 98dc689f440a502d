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

// Closed-vocabulary tokenizer and a small transformer encoder producing
// per-token features T and the pooled question vector q.

#ifndef GRAPHFUSE_QUESTION_ENCODER_HPP_
#define GRAPHFUSE_QUESTION_ENCODER_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "graphfuse/config.hpp"
#include "graphfuse/errors.hpp"
#include "graphfuse/nn.hpp"
#include "graphfuse/ops.hpp"

namespace graphfuse {

/// Line-per-token vocabulary; id 0 is reserved for padding, line 1 is id 1.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) add(t);
  }

  std::uint32_t add(const std::string& token) {
    if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
      throw DataError("invalid vocabulary token: '" + token + "'");
    }
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    tokens_.push_back(token);
    const auto id = static_cast<std::uint32_t>(tokens_.size());
    ids_.emplace(token, id);
    return id;
  }

  std::uint32_t id(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw DataError("unknown word: '" + token + "'");
    return it->second;
  }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  const std::string& token(std::uint32_t id) const {
    if (id == 0 || id > tokens_.size()) {
      throw DataError("token id out of range: " + std::to_string(id));
    }
    return tokens_[id - 1];
  }

  /// Number of real tokens; embedding tables need size() + 1 rows.
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::string to_text() const {
    std::string out;
    for (const auto& t : tokens_) out += t + "\n";
    return out;
  }

  static Vocabulary from_text(const std::string& text) {
    Vocabulary v;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (v.contains(line)) {
        throw DataError("duplicate vocabulary entry on line " +
                        std::to_string(lineno));
      }
      v.add(line);
    }
    return v;
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::uint32_t> ids_;
};

/// Whitespace-split lookup; ids lie in [1, |vocab|].
inline std::vector<std::uint32_t> tokenize(const std::string& text,
                                           const Vocabulary& vocab) {
  std::istringstream in(text);
  std::vector<std::uint32_t> ids;
  std::string word;
  while (in >> word) ids.push_back(vocab.id(word));
  if (ids.empty()) throw DataError("tokenize: empty question");
  return ids;
}

/// batch x L token ids, 0-padded, with a validity mask per row.
struct QuestionBatch {
  std::size_t max_len = 0;
  std::vector<std::vector<std::uint32_t>> token_ids;
  std::vector<Mask> valid_mask;

  std::size_t size() const { return token_ids.size(); }
};

inline QuestionBatch make_question_batch(
    const std::vector<std::vector<std::uint32_t>>& questions,
    std::size_t max_len) {
  QuestionBatch b;
  b.max_len = max_len;
  for (const auto& q : questions) {
    if (q.empty()) throw DataError("question with no tokens");
    if (q.size() > max_len) {
      throw DataError("question of " + std::to_string(q.size()) +
                      " tokens exceeds max length " + std::to_string(max_len));
    }
    std::vector<std::uint32_t> ids(max_len, 0);
    Mask valid(max_len, 0);
    for (std::size_t t = 0; t < q.size(); ++t) {
      if (q[t] == 0) throw DataError("token id 0 is reserved for padding");
      ids[t] = q[t];
      valid[t] = 1;
    }
    b.token_ids.push_back(std::move(ids));
    b.valid_mask.push_back(std::move(valid));
  }
  return b;
}

/// Per-example token features T (L x d) and pooled q (d).
struct EncodedQuestion {
  std::vector<Tensor> tokens;
  std::vector<Tensor> pooled;
  // Optional: per example, per layer, per head L x L self-attention.
  std::vector<std::vector<std::vector<Tensor>>> attention;
};

namespace question {

inline std::string layer_prefix(std::size_t l) {
  return "question.layer" + std::to_string(l);
}

inline void add_params(ParameterStore& store, const ModelConfig& cfg,
                       std::size_t vocab_size, Rng& rng) {
  const std::size_t d = cfg.d;
  std::vector<double> emb((vocab_size + 1) * d);
  for (double& x : emb) x = 0.1 * rng.normal();
  store.add("question.embedding", {vocab_size + 1, d}, std::move(emb));
  std::vector<double> pos(cfg.max_question_len * d);
  for (double& x : pos) x = 0.1 * rng.normal();
  store.add("question.position", {cfg.max_question_len, d}, std::move(pos));
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = layer_prefix(l);
    add_linear(store, p + ".query", d, d, rng);
    add_linear(store, p + ".key", d, d, rng);
    add_linear(store, p + ".value", d, d, rng);
    add_linear(store, p + ".out", d, d, rng);
    add_linear(store, p + ".ffn1", d, 2 * d, rng);
    add_linear(store, p + ".ffn2", 2 * d, d, rng);
    for (const char* ln : {".ln1", ".ln2"}) {
      store.add(p + ln + ".gain", {d}, std::vector<double>(d, 1.0));
      store.add(p + ln + ".bias", {d}, std::vector<double>(d, 0.0));
    }
  }
}

/// Masked multi-head self-attention; keys at padding positions get weight 0.
inline Tensor self_attention(const Tensor& x, const Mask& valid,
                             const LinearCache& lin, const std::string& p,
                             std::size_t heads,
                             std::vector<Tensor>* attention_out) {
  const std::size_t L = x.rows(), d = x.cols(), dh = d / heads;
  const Tensor q = lin[p + ".query"](x);
  const Tensor k = lin[p + ".key"](x);
  const Tensor v = lin[p + ".value"](x);
  Mask key_mask(L * L);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) key_mask[i * L + j] = valid[j];
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = ops::slice_cols(q, h * dh, dh);
    const Tensor kh = ops::slice_cols(k, h * dh, dh);
    const Tensor vh = ops::slice_cols(v, h * dh, dh);
    const Tensor scores = ops::scale(ops::matmul_nt(qh, kh), scale);
    const Tensor attn = ops::masked_softmax(scores, key_mask, 1);
    if (attention_out) attention_out->push_back(attn);
    outs.push_back(ops::matmul(attn, vh));
  }
  return lin[p + ".out"](ops::concat_cols(outs));
}

}  // namespace question

/// Post-LN transformer encoder over a padded batch. Padding ids never reach
/// the computation: their embeddings are zero and attention to them is
/// masked, so valid positions depend only on valid tokens.
inline EncodedQuestion encode(const QuestionBatch& batch, const ParameterStore& store,
                              const LinearCache& lin, const ModelConfig& cfg,
                              bool training, Rng& rng, bool keep_attention = false) {
  if (batch.max_len > cfg.max_question_len) {
    throw DimensionError("question batch wider than the position table");
  }
  const Tensor& table = store.get("question.embedding");
  const Tensor& position = store.get("question.position");
  std::vector<std::size_t> pos_idx(batch.max_len);
  for (std::size_t t = 0; t < batch.max_len; ++t) pos_idx[t] = t;
  const Tensor pos = ops::gather_rows(position, pos_idx);

  EncodedQuestion enc;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Mask& valid = batch.valid_mask[b];
    Tensor x = ops::add(ops::embedding(table, batch.token_ids[b], valid), pos);
    std::vector<std::vector<Tensor>> layers_attn;
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
      const std::string p = question::layer_prefix(l);
      std::vector<Tensor> attn;
      Tensor a = question::self_attention(x, valid, lin, p, cfg.heads,
                                          keep_attention ? &attn : nullptr);
      a = ops::dropout(a, cfg.dropout, training, rng);
      x = ops::layer_norm(ops::add(x, a), store.get(p + ".ln1.gain"),
                          store.get(p + ".ln1.bias"));
      Tensor f = lin[p + ".ffn2"](ops::relu(lin[p + ".ffn1"](x)));
      f = ops::dropout(f, cfg.dropout, training, rng);
      x = ops::layer_norm(ops::add(x, f), store.get(p + ".ln2.gain"),
                          store.get(p + ".ln2.bias"));
      if (keep_attention) layers_attn.push_back(std::move(attn));
    }
    enc.pooled.push_back(ops::mean_pool(x, valid));
    enc.tokens.push_back(std::move(x));
    if (keep_attention) enc.attention.push_back(std::move(layers_attn));
  }
  return enc;
}

}  // namespace graphfuse

#endif  // GRAPHFUSE_QUESTION_ENCODER_HPP_
