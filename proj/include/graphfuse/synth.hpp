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

// Seeded synthetic relational QA corpus.
//
// A scene holds 2..m_max objects (persons, horses, bikes, hats, balls,
// cubes) in four colors. Persons hold balls/cubes, wear hats and ride
// horses/bikes; those interactions are the semantic relations, and the
// box geometry yields the spatial relations. Every question is generated
// from a template and only emitted when exhaustive evaluation over the
// scene gives exactly one answer.
//
// Object features are one-hot type and color codes, the box and its
// center, plus Gaussian noise on everything but the geometry:
//   [0, 6) type   [6, 10) color   [10, 14) box   [14, 16) center
//   [16, d_in) noise only

#ifndef GRAPHFUSE_SYNTH_HPP_
#define GRAPHFUSE_SYNTH_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphfuse/errors.hpp"
#include "graphfuse/io.hpp"
#include "graphfuse/model.hpp"
#include "graphfuse/question_encoder.hpp"
#include "graphfuse/random.hpp"
#include "graphfuse/relation_encoder.hpp"

namespace graphfuse::synth {

inline constexpr std::uint32_t kGeneratorVersion = 1;
inline constexpr std::uint32_t kCorpusFormatVersion = 1;
inline constexpr char kCorpusMagic[4] = {'G', 'F', 'C', 'P'};

enum ObjectType : std::uint8_t { kPerson, kHorse, kBike, kHat, kBall, kCube };
inline constexpr std::size_t kNumTypes = 6;
inline const std::array<std::string, kNumTypes> kTypeNames = {
    "person", "horse", "bike", "hat", "ball", "cube"};

enum Color : std::uint8_t { kRed, kBlue, kGreen, kYellow };
inline constexpr std::size_t kNumColors = 4;
inline const std::array<std::string, kNumColors> kColorNames = {"red", "blue", "green",
                                                                "yellow"};

/// Semantic relation ids; odd ids are person -> item, even ids the inverse.
enum SemanticLabel : std::uint16_t {
  kSemanticNone = 0,
  kHolding = 1,
  kHeldBy = 2,
  kWearing = 3,
  kWornBy = 4,
  kRiding = 5,
  kRiddenBy = 6,
};
inline constexpr std::size_t kNumSemanticLabels = 7;

inline const std::vector<std::string>& semantic_label_names() {
  static const std::vector<std::string> names = {"holding", "held_by", "wearing",
                                                 "worn_by", "riding", "ridden_by"};
  return names;
}

enum class QuestionType : std::uint8_t { kSemantic = 0, kSpatial = 1, kMixed = 2 };
inline constexpr std::size_t kNumQuestionTypes = 3;

inline const char* question_type_name(QuestionType t) {
  switch (t) {
    case QuestionType::kSemantic: return "semantic";
    case QuestionType::kSpatial: return "spatial";
    case QuestionType::kMixed: return "mixed";
  }
  return "?";
}

/// Person -> item relations and the item types each admits.
struct RelationSchema {
  SemanticLabel label;
  SemanticLabel inverse;
  const char* word;
  std::vector<ObjectType> items;
};

inline const std::vector<RelationSchema>& relation_schema() {
  static const std::vector<RelationSchema> schema = {
      {kHolding, kHeldBy, "holding", {kBall, kCube}},
      {kWearing, kWornBy, "wearing", {kHat}},
      {kRiding, kRiddenBy, "riding", {kHorse, kBike}},
  };
  return schema;
}

/// Directional relations that questions ask about, with their phrasing.
struct SpatialPhrase {
  SpatialLabel label;
  std::vector<std::string> words;
};

inline const std::vector<SpatialPhrase>& spatial_phrases() {
  static const std::vector<SpatialPhrase> phrases = {
      {kLeftOf, {"left", "of"}},
      {kRightOf, {"right", "of"}},
      {kAbove, {"above"}},
      {kBelow, {"below"}},
  };
  return phrases;
}

inline const std::vector<std::string>& question_words() {
  static const std::vector<std::string> words = {
      "what", "is",   "color",  "the",  "thing", "a",      "there",
      "person", "horse", "bike", "hat", "ball",  "cube",   "red",
      "blue", "green", "yellow", "holding", "wearing", "riding", "left",
      "right", "of",   "above",  "below"};
  return words;
}

/// Answers: yes, no, the six types, the four colors; id = line - 1.
inline const std::vector<std::string>& answer_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w = {"yes", "no"};
    w.insert(w.end(), kTypeNames.begin(), kTypeNames.end());
    w.insert(w.end(), kColorNames.begin(), kColorNames.end());
    return w;
  }();
  return words;
}

inline std::uint16_t answer_id(const std::string& word) {
  const auto& w = answer_words();
  auto it = std::find(w.begin(), w.end(), word);
  if (it == w.end()) throw DataError("unknown answer: " + word);
  return static_cast<std::uint16_t>(it - w.begin());
}

struct GeneratorOptions {
  std::size_t m_min = 3;
  std::size_t m_max = 10;
  std::size_t d_in = 32;
  double feature_noise = 0.05;
  int max_attempts = 200;

  void validate() const {
    if (m_min < 2 || m_max < m_min || m_max > 64) {
      throw ConfigError("object counts must satisfy 2 <= m_min <= m_max <= 64");
    }
    if (d_in < 16) throw ConfigError("d_in must be at least 16");
    if (!(feature_noise >= 0.0)) throw ConfigError("feature_noise must be >= 0");
    if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  }
};

struct SceneObject {
  ObjectType type = kPerson;
  Color color = kRed;
  Box box;
};

struct Scene {
  std::vector<SceneObject> objects;
  std::vector<std::uint16_t> semantic;  // m x m
  std::vector<std::uint16_t> spatial;   // m x m
  std::vector<float> features;          // m x d_in

  std::size_t size() const { return objects.size(); }
  std::uint16_t sem(std::size_t i, std::size_t j) const { return semantic[i * size() + j]; }
  std::uint16_t spa(std::size_t i, std::size_t j) const { return spatial[i * size() + j]; }
};

namespace detail {

inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline Box make_box(double x1, double y1, double w, double h) {
  // Shift back inside the unit square; sizes are always < 1.
  x1 = std::clamp(x1, 0.0, 1.0 - w);
  y1 = std::clamp(y1, 0.0, 1.0 - h);
  return Box{to_f32(x1), to_f32(y1), to_f32(x1 + w), to_f32(y1 + h)};
}

inline std::pair<double, double> item_size(ObjectType t, Rng& rng) {
  switch (t) {
    case kPerson: return {rng.uniform(0.08, 0.14), rng.uniform(0.2, 0.3)};
    case kHorse: return {rng.uniform(0.2, 0.28), rng.uniform(0.14, 0.2)};
    case kBike: return {rng.uniform(0.14, 0.2), rng.uniform(0.1, 0.15)};
    case kHat: return {rng.uniform(0.05, 0.08), rng.uniform(0.04, 0.06)};
    case kBall: {
      const double s = rng.uniform(0.05, 0.08);
      return {s, s};
    }
    case kCube: {
      const double s = rng.uniform(0.06, 0.1);
      return {s, s};
    }
  }
  return {0.1, 0.1};
}

inline std::vector<float> make_features(const std::vector<SceneObject>& objects,
                                        const GeneratorOptions& opt, Rng& rng) {
  std::vector<float> f(objects.size() * opt.d_in, 0.0f);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    float* row = f.data() + i * opt.d_in;
    const SceneObject& o = objects[i];
    for (std::size_t c = 0; c < opt.d_in; ++c) {
      double v = 0.0;
      if (c < kNumTypes) {
        v = c == o.type ? 1.0 : 0.0;
      } else if (c < kNumTypes + kNumColors) {
        v = c - kNumTypes == o.color ? 1.0 : 0.0;
      }
      if (c < 10 || c >= 16) v += opt.feature_noise * rng.normal();
      row[c] = static_cast<float>(v);
    }
    row[10] = static_cast<float>(o.box.x1);
    row[11] = static_cast<float>(o.box.y1);
    row[12] = static_cast<float>(o.box.x2);
    row[13] = static_cast<float>(o.box.y2);
    row[14] = static_cast<float>(o.box.cx());
    row[15] = static_cast<float>(o.box.cy());
  }
  return f;
}

}  // namespace detail

/// One random scene. Related items are placed next to their person: hats
/// on the head, held items at the side, ridden items underneath.
inline Scene generate_scene(Rng& rng, const GeneratorOptions& opt) {
  opt.validate();
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    const std::size_t m = static_cast<std::size_t>(
        rng.between(static_cast<int>(opt.m_min), static_cast<int>(opt.m_max)));
    const std::size_t persons = static_cast<std::size_t>(
        rng.between(1, static_cast<int>(std::min<std::size_t>(3, m - 1))));
    Scene s;
    s.objects.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      s.objects[i].type =
          i < persons ? kPerson : static_cast<ObjectType>(1 + rng.below(kNumTypes - 1));
      s.objects[i].color = static_cast<Color>(rng.below(kNumColors));
    }
    // Persons go first in generation but not in the emitted order.
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<SceneObject> shuffled(m);
    for (std::size_t i = 0; i < m; ++i) shuffled[order[i]] = s.objects[i];
    s.objects = shuffled;

    s.semantic.assign(m * m, kSemanticNone);
    std::vector<int> owner(m, -1);
    std::vector<std::size_t> person_ids;
    for (std::size_t i = 0; i < m; ++i)
      if (s.objects[i].type == kPerson) person_ids.push_back(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (s.objects[j].type == kPerson || !rng.bernoulli(0.75)) continue;
      const RelationSchema* rel = nullptr;
      for (const auto& r : relation_schema())
        if (std::find(r.items.begin(), r.items.end(), s.objects[j].type) != r.items.end())
          rel = &r;
      std::vector<std::size_t> free;
      for (std::size_t p : person_ids) {
        bool taken = false;
        for (std::size_t q = 0; q < m; ++q) taken = taken || s.sem(p, q) == rel->label;
        if (!taken) free.push_back(p);
      }
      if (free.empty()) continue;
      const std::size_t p = free[rng.below(free.size())];
      s.semantic[p * m + j] = rel->label;
      s.semantic[j * m + p] = rel->inverse;
      owner[j] = static_cast<int>(p);
    }

    for (std::size_t p : person_ids) {
      auto [w, h] = detail::item_size(kPerson, rng);
      s.objects[p].box =
          detail::make_box(rng.uniform(0.0, 1.0 - w), rng.uniform(0.0, 1.0 - h), w, h);
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (s.objects[j].type == kPerson) continue;
      auto [w, h] = detail::item_size(s.objects[j].type, rng);
      if (owner[j] < 0) {
        s.objects[j].box =
            detail::make_box(rng.uniform(0.0, 1.0 - w), rng.uniform(0.0, 1.0 - h), w, h);
        continue;
      }
      const Box& pb = s.objects[static_cast<std::size_t>(owner[j])].box;
      switch (s.sem(static_cast<std::size_t>(owner[j]), j)) {
        case kWearing:
          s.objects[j].box = detail::make_box(pb.cx() - 0.5 * w + rng.uniform(-0.01, 0.01),
                                              pb.y1 - 0.5 * h, w, h);
          break;
        case kHolding: {
          const double x = rng.bernoulli(0.5) ? pb.x2 + rng.uniform(-0.02, 0.02)
                                              : pb.x1 - w + rng.uniform(-0.02, 0.02);
          s.objects[j].box =
              detail::make_box(x, pb.cy() - 0.5 * h + rng.uniform(-0.03, 0.03), w, h);
          break;
        }
        default:
          s.objects[j].box = detail::make_box(pb.cx() - 0.5 * w + rng.uniform(-0.02, 0.02),
                                              pb.y2 - h * rng.uniform(0.3, 0.6), w, h);
          break;
      }
    }

    bool ok = true;
    for (std::size_t i = 0; i < m && ok; ++i) {
      ok = s.objects[i].box.valid();
      for (std::size_t j = 0; j < i && ok; ++j) ok = !(s.objects[i].box == s.objects[j].box);
    }
    if (!ok) continue;
    std::vector<Box> boxes;
    for (const auto& o : s.objects) boxes.push_back(o.box);
    s.spatial = synthesize_spatial_labels(boxes);
    s.features = detail::make_features(s.objects, opt, rng);
    return s;
  }
  throw GeneratorError("could not sample a valid scene");
}

struct Question {
  QuestionType type = QuestionType::kSemantic;
  std::vector<std::string> words;
  std::string answer;
};

namespace detail {

/// "the [color] type" when that identifies object i uniquely.
inline std::optional<std::vector<std::string>> refer(const Scene& s, std::size_t i) {
  const SceneObject& o = s.objects[i];
  std::size_t same_type = 0, same_both = 0;
  for (const auto& x : s.objects) {
    same_type += x.type == o.type;
    same_both += x.type == o.type && x.color == o.color;
  }
  if (same_type == 1) return std::vector<std::string>{"the", kTypeNames[o.type]};
  if (same_both == 1) {
    return std::vector<std::string>{"the", kColorNames[o.color], kTypeNames[o.type]};
  }
  return std::nullopt;
}

inline std::vector<std::string> cat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

/// Objects j with sem(i, j) == label.
inline std::vector<std::size_t> sem_targets(const Scene& s, std::size_t i,
                                            std::uint16_t label) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s.sem(i, j) == label) out.push_back(j);
  return out;
}

/// Objects j with spa(j, i) == label, optionally only persons.
inline std::vector<std::size_t> spa_sources(const Scene& s, std::size_t i,
                                            std::uint16_t label, bool persons_only) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s.spa(j, i) == label && (!persons_only || s.objects[j].type == kPerson))
      out.push_back(j);
  return out;
}

}  // namespace detail

/// Every template instantiation of the given type whose answer is unique.
inline std::vector<Question> enumerate_questions(const Scene& s, QuestionType type) {
  using detail::cat;
  std::vector<Question> out;
  auto emit = [&](std::vector<std::string> words, std::string answer) {
    out.push_back({type, std::move(words), std::move(answer)});
  };
  const std::size_t m = s.size();
  for (std::size_t i = 0; i < m; ++i) {
    const auto ref = detail::refer(s, i);
    if (!ref) continue;
    if (type == QuestionType::kSemantic) {
      for (const auto& rel : relation_schema()) {
        if (s.objects[i].type == kPerson) {
          const auto t = detail::sem_targets(s, i, rel.label);
          if (t.size() == 1) {
            emit(cat({{"what", "is"}, *ref, {rel.word}}), kTypeNames[s.objects[t[0]].type]);
            emit(cat({{"what", "color", "is", "the", "thing"}, *ref, {"is", rel.word}}),
                 kColorNames[s.objects[t[0]].color]);
          }
          if (t.size() <= 1) {
            for (ObjectType item : rel.items) {
              const bool yes = t.size() == 1 && s.objects[t[0]].type == item;
              emit(cat({{"is"}, *ref, {rel.word, "a", kTypeNames[item]}}), yes ? "yes" : "no");
            }
          }
        } else if (std::find(rel.items.begin(), rel.items.end(), s.objects[i].type) !=
                   rel.items.end()) {
          const auto p = detail::sem_targets(s, i, rel.inverse);
          if (p.size() == 1) {
            emit(cat({{"what", "color", "is", "the", "person", rel.word}, *ref}),
                 kColorNames[s.objects[p[0]].color]);
          }
        }
      }
    } else if (type == QuestionType::kSpatial) {
      for (const auto& ph : spatial_phrases()) {
        const auto j = detail::spa_sources(s, i, ph.label, false);
        if (j.size() == 1) {
          emit(cat({{"what", "is"}, ph.words, *ref}), kTypeNames[s.objects[j[0]].type]);
          emit(cat({{"what", "color", "is", "the", "thing"}, ph.words, *ref}),
               kColorNames[s.objects[j[0]].color]);
        }
        for (std::size_t t = 0; t < kNumTypes; ++t) {
          bool yes = false;
          for (std::size_t x : j) yes = yes || s.objects[x].type == t;
          emit(cat({{"is", "there", "a", kTypeNames[t]}, ph.words, *ref}), yes ? "yes" : "no");
        }
      }
    } else {
      for (const auto& ph : spatial_phrases()) {
        const auto p = detail::spa_sources(s, i, ph.label, true);
        if (p.size() != 1) continue;
        for (const auto& rel : relation_schema()) {
          const auto t = detail::sem_targets(s, p[0], rel.label);
          if (t.size() == 1) {
            emit(cat({{"what", "is", "the", "person"}, ph.words, *ref, {rel.word}}),
                 kTypeNames[s.objects[t[0]].type]);
            emit(cat({{"what", "color", "is", "the", "thing", "the", "person"}, ph.words,
                      *ref, {"is", rel.word}}),
                 kColorNames[s.objects[t[0]].color]);
          }
          for (ObjectType item : rel.items) {
            const bool yes = t.size() == 1 && s.objects[t[0]].type == item;
            emit(cat({{"is", "the", "person"}, ph.words, *ref, {rel.word, "a", kTypeNames[item]}}),
                 yes ? "yes" : "no");
          }
        }
      }
    }
  }
  return out;
}

/// Picks questions so that answers stay close to uniform: each draw takes
/// one of the least-used answers available in the scene.
class AnswerBalancer {
 public:
  AnswerBalancer() : counts_(answer_words().size(), 0) {}

  const Question& choose(const std::vector<Question>& candidates, Rng& rng) {
    if (candidates.empty()) throw GeneratorError("no candidate questions");
    std::size_t best = SIZE_MAX;
    for (const auto& q : candidates) best = std::min(best, counts_[answer_id(q.answer)]);
    std::vector<std::size_t> pool;
    for (std::size_t c = 0; c < candidates.size(); ++c)
      if (counts_[answer_id(candidates[c].answer)] == best) pool.push_back(c);
    // Uniform over answers first, then over questions with that answer.
    std::vector<std::uint16_t> answers;
    for (std::size_t c : pool) {
      const auto a = answer_id(candidates[c].answer);
      if (std::find(answers.begin(), answers.end(), a) == answers.end()) answers.push_back(a);
    }
    std::sort(answers.begin(), answers.end());
    const auto a = answers[rng.below(answers.size())];
    std::vector<std::size_t> with_a;
    for (std::size_t c : pool)
      if (answer_id(candidates[c].answer) == a) with_a.push_back(c);
    const Question& q = candidates[with_a[rng.below(with_a.size())]];
    ++counts_[a];
    return q;
  }

  const std::vector<std::size_t>& counts() const { return counts_; }

 private:
  std::vector<std::size_t> counts_;
};

/// One stored QA example. Spatial labels are not stored; they are
/// recomputed from the (f32) boxes.
struct SceneInstance {
  std::vector<float> features;             // m x d_in
  std::vector<std::array<float, 4>> boxes; // m
  std::vector<std::uint16_t> semantic_labels;
  std::vector<std::uint16_t> tokens;
  std::uint16_t answer = 0;
  QuestionType question_type = QuestionType::kSemantic;
  std::uint64_t seed = 0;

  std::size_t size() const { return boxes.size(); }
  bool operator==(const SceneInstance&) const = default;

  std::vector<Box> box_list() const {
    std::vector<Box> out;
    for (const auto& b : boxes) out.push_back(Box{b[0], b[1], b[2], b[3]});
    return out;
  }
};

enum class Split : std::uint64_t { kTrain = 0, kVal = 1 };

/// Scene seeds are disjoint across splits by construction.
inline std::uint64_t scene_seed(std::uint64_t corpus_seed, Split split, std::uint64_t index) {
  if (index >= (1ULL << 32)) throw ConfigError("split too large");
  return (corpus_seed << 33) | (static_cast<std::uint64_t>(split) << 32) | index;
}

struct CorpusManifest {
  std::uint32_t generator_version = kGeneratorVersion;
  std::uint64_t seed = 7;
  std::size_t train_size = 2000;
  std::size_t val_size = 500;
  GeneratorOptions options;
  std::string question_vocab = "question_vocab.txt";
  std::string answer_vocab = "answer_vocab.txt";
  std::string semantic_vocab = "semantic_labels.txt";
  std::string spatial_vocab = "spatial_labels.txt";
  std::string train_file = "train.bin";
  std::string val_file = "val.bin";

  void validate() const {
    if (generator_version != kGeneratorVersion) {
      throw ConfigError("unsupported generator version " +
                        std::to_string(generator_version));
    }
    if (seed >= (1ULL << 31)) throw ConfigError("corpus seed must be < 2^31");
    options.validate();
  }
};

inline nlohmann::json to_json(const CorpusManifest& m) {
  return {{"generator_version", m.generator_version},
          {"seed", m.seed},
          {"train_size", m.train_size},
          {"val_size", m.val_size},
          {"m_min", m.options.m_min},
          {"m_max", m.options.m_max},
          {"d_in", m.options.d_in},
          {"feature_noise", m.options.feature_noise},
          {"max_attempts", m.options.max_attempts},
          {"question_vocab", m.question_vocab},
          {"answer_vocab", m.answer_vocab},
          {"semantic_vocab", m.semantic_vocab},
          {"spatial_vocab", m.spatial_vocab},
          {"train_file", m.train_file},
          {"val_file", m.val_file}};
}

inline CorpusManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("manifest must be a JSON object");
  CorpusManifest m;
  const nlohmann::json known = to_json(m);
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown manifest field: " + key);
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("manifest field ") + key + ": " + e.what());
    }
  };
  read("generator_version", m.generator_version);
  read("seed", m.seed);
  read("train_size", m.train_size);
  read("val_size", m.val_size);
  read("m_min", m.options.m_min);
  read("m_max", m.options.m_max);
  read("d_in", m.options.d_in);
  read("feature_noise", m.options.feature_noise);
  read("max_attempts", m.options.max_attempts);
  read("question_vocab", m.question_vocab);
  read("answer_vocab", m.answer_vocab);
  read("semantic_vocab", m.semantic_vocab);
  read("spatial_vocab", m.spatial_vocab);
  read("train_file", m.train_file);
  read("val_file", m.val_file);
  m.validate();
  return m;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw UsageError("manifest not found: " + path.string());
  }
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
}

inline Vocabulary question_vocabulary() { return Vocabulary(question_words()); }

inline SceneInstance make_instance(const Scene& s, const Question& q,
                                   const Vocabulary& vocab, std::uint64_t seed) {
  SceneInstance inst;
  inst.features = s.features;
  for (const auto& o : s.objects) {
    inst.boxes.push_back({static_cast<float>(o.box.x1), static_cast<float>(o.box.y1),
                          static_cast<float>(o.box.x2), static_cast<float>(o.box.y2)});
  }
  inst.semantic_labels = s.semantic;
  for (const auto& w : q.words) inst.tokens.push_back(static_cast<std::uint16_t>(vocab.id(w)));
  inst.answer = answer_id(q.answer);
  inst.question_type = q.type;
  inst.seed = seed;
  return inst;
}

/// Generates one split. Question types cycle semantic, spatial, mixed.
inline std::vector<SceneInstance> generate_split(const CorpusManifest& man, Split split,
                                                 std::size_t count) {
  man.validate();
  const Vocabulary vocab = question_vocabulary();
  AnswerBalancer balancer;
  std::vector<SceneInstance> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    const std::uint64_t seed = scene_seed(man.seed, split, idx);
    Rng rng(seed);
    const auto type = static_cast<QuestionType>(idx % kNumQuestionTypes);
    bool done = false;
    for (int attempt = 0; attempt < man.options.max_attempts && !done; ++attempt) {
      const Scene scene = generate_scene(rng, man.options);
      const auto candidates = enumerate_questions(scene, type);
      if (candidates.empty()) continue;
      out.push_back(make_instance(scene, balancer.choose(candidates, rng), vocab, seed));
      done = true;
    }
    if (!done) {
      throw GeneratorError("no answerable question after " +
                           std::to_string(man.options.max_attempts) +
                           " scenes for seed " + std::to_string(seed));
    }
  }
  return out;
}

/// Little-endian corpus bytes:
///   "GFCP" u32 version u32 d_in u64 count
///   per record: u32 length, then u16 m, f32[m*d_in] features,
///   f32[m*4] boxes, u16[m*m] semantic labels, u16 n, u16[n] tokens,
///   u16 answer, u8 question type, u64 seed.
inline std::string encode_corpus(const std::vector<SceneInstance>& records,
                                 std::size_t d_in) {
  ByteWriter w;
  w.put_bytes(std::string(kCorpusMagic, 4));
  w.put(kCorpusFormatVersion);
  w.put(static_cast<std::uint32_t>(d_in));
  w.put(static_cast<std::uint64_t>(records.size()));
  for (const auto& r : records) {
    const std::size_t m = r.size();
    if (r.features.size() != m * d_in || r.semantic_labels.size() != m * m) {
      throw DataError("encode_corpus: record shapes inconsistent");
    }
    const std::size_t at = w.size();
    w.put(std::uint32_t{0});
    w.put(static_cast<std::uint16_t>(m));
    for (float f : r.features) w.put(f);
    for (const auto& b : r.boxes)
      for (float f : b) w.put(f);
    for (auto l : r.semantic_labels) w.put(l);
    w.put(static_cast<std::uint16_t>(r.tokens.size()));
    for (auto t : r.tokens) w.put(t);
    w.put(r.answer);
    w.put(static_cast<std::uint8_t>(r.question_type));
    w.put(r.seed);
    w.patch(at, static_cast<std::uint32_t>(w.size() - at - 4));
  }
  return w.bytes();
}

struct DecodedCorpus {
  std::size_t d_in = 0;
  std::vector<SceneInstance> records;
};

inline DecodedCorpus decode_corpus(const std::string& bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.get_bytes(4) != std::string(kCorpusMagic, 4)) r.fail_at(0, "bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCorpusFormatVersion) {
    r.fail_at(4, "unsupported format version " + std::to_string(version));
  }
  DecodedCorpus out;
  out.d_in = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::size_t start = r.offset();
    const auto len = r.get<std::uint32_t>();
    if (len > r.remaining()) r.fail_at(start, "record length exceeds file");
    const std::size_t body = r.offset();
    SceneInstance s;
    const std::size_t m = r.get<std::uint16_t>();
    if (m < 2) r.fail_at(body, "record with fewer than two objects");
    s.features.resize(m * out.d_in);
    for (float& f : s.features) f = r.get<float>();
    s.boxes.resize(m);
    for (auto& b : s.boxes)
      for (float& f : b) f = r.get<float>();
    s.semantic_labels.resize(m * m);
    for (auto& l : s.semantic_labels) {
      l = r.get<std::uint16_t>();
      if (l >= kNumSemanticLabels) r.fail("semantic label out of range");
    }
    s.tokens.resize(r.get<std::uint16_t>());
    if (s.tokens.empty()) r.fail("record with an empty question");
    for (auto& t : s.tokens) t = r.get<std::uint16_t>();
    s.answer = r.get<std::uint16_t>();
    const auto qt = r.get<std::uint8_t>();
    if (qt >= kNumQuestionTypes) r.fail("bad question type");
    s.question_type = static_cast<QuestionType>(qt);
    s.seed = r.get<std::uint64_t>();
    if (r.offset() - body != len) r.fail_at(start, "record length mismatch");
    out.records.push_back(std::move(s));
  }
  if (!r.done()) r.fail("trailing bytes after last record");
  return out;
}

struct Corpus {
  CorpusManifest manifest;
  Vocabulary questions;
  std::vector<std::string> answers;
  std::vector<std::string> semantic_labels;
  std::vector<std::string> spatial_labels;
  std::vector<SceneInstance> train;
  std::vector<SceneInstance> val;

  VocabSizes sizes() const {
    return {questions.size(), answers.size(), semantic_labels.size() + 1,
            spatial_labels.size() + 1};
  }
};

inline Corpus generate_corpus(const CorpusManifest& man) {
  Corpus c;
  c.manifest = man;
  c.questions = question_vocabulary();
  c.answers = answer_words();
  c.semantic_labels = semantic_label_names();
  c.spatial_labels = spatial_label_names();
  c.train = generate_split(man, Split::kTrain, man.train_size);
  c.val = generate_split(man, Split::kVal, man.val_size);
  return c;
}

inline std::string lines(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += w + "\n";
  return out;
}

inline void write_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t d_in = c.manifest.options.d_in;
  write_file_atomic(dir / c.manifest.question_vocab, c.questions.to_text());
  write_file_atomic(dir / c.manifest.answer_vocab, lines(c.answers));
  write_file_atomic(dir / c.manifest.semantic_vocab, lines(c.semantic_labels));
  write_file_atomic(dir / c.manifest.spatial_vocab, lines(c.spatial_labels));
  write_file_atomic(dir / c.manifest.train_file, encode_corpus(c.train, d_in));
  write_file_atomic(dir / c.manifest.val_file, encode_corpus(c.val, d_in));
  write_file_atomic(dir / "manifest.json", to_json(c.manifest).dump(2) + "\n");
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  return Vocabulary::load(path.string()).tokens();
}

inline Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.manifest = load_manifest(dir / "manifest.json");
  c.questions = Vocabulary::load((dir / c.manifest.question_vocab).string());
  c.answers = read_lines(dir / c.manifest.answer_vocab);
  c.semantic_labels = read_lines(dir / c.manifest.semantic_vocab);
  c.spatial_labels = read_lines(dir / c.manifest.spatial_vocab);
  for (auto [split, file] : {std::pair{&c.train, c.manifest.train_file},
                             std::pair{&c.val, c.manifest.val_file}}) {
    DecodedCorpus d = decode_corpus(read_file(dir / file), file);
    if (d.d_in != c.manifest.options.d_in) {
      throw FormatError(file + ": d_in disagrees with manifest");
    }
    *split = std::move(d.records);
  }
  return c;
}

/// Network input for one record; spatial labels are derived from the boxes.
inline ModelInput to_model_input(const SceneInstance& s, std::size_t d_in) {
  const std::size_t m = s.size();
  ModelInput in;
  in.features = Tensor({m, d_in},
                       std::vector<double>(s.features.begin(), s.features.end()));
  in.semantic_labels = s.semantic_labels;
  in.spatial_labels = synthesize_spatial_labels(s.box_list());
  in.tokens.assign(s.tokens.begin(), s.tokens.end());
  return in;
}

}  // namespace graphfuse::synth

#endif  // GRAPHFUSE_SYNTH_HPP_
