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

// End-to-end acceptance run. Prints one PASS or FAIL line per criterion
// and writes the same lines, plus sweep tables, to the working directory.
// The exit status reports whether the harness itself ran to completion;
// criterion outcomes are in the report.
//
// Usage: acceptance [criterion ...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "graphfuse/checkpoint.hpp"
#include "graphfuse/gradcheck.hpp"
#include "graphfuse/synth.hpp"
#include "graphfuse/trainer.hpp"
#include "qa_oracle.hpp"
#include "suites.hpp"

namespace graphfuse {
namespace {

namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pct(double a) { return fmt("%.1f%%", 100.0 * a); }

void log(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Trained runs keyed by config fingerprint, so shared runs train once.
struct TrainedRun {
  RunReport report;
  std::string checkpoint;
  std::string lines;
};

class RunCache {
 public:
  explicit RunCache(const synth::Corpus& corpus) : corpus_(corpus) {}

  const TrainedRun& get(const ModelConfig& cfg) {
    const std::uint64_t key = fingerprint(cfg);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    return runs_.emplace(key, fresh(cfg)).first->second;
  }

  TrainedRun fresh(const ModelConfig& cfg) {
    log("training seed " + std::to_string(cfg.seed) + " k=" + std::to_string(cfg.k) +
        " P=" + std::to_string(cfg.P) + " gfm=" + std::to_string(cfg.enable_gfm) +
        " of=" + std::to_string(cfg.enable_of));
    FusionNetwork net(cfg, corpus_.sizes());
    TrainedRun r;
    r.report = train(net, corpus_);
    r.checkpoint = encode_checkpoint(net);
    r.lines = r.report.to_lines(cfg);
    log("  train " + pct(r.report.final_train.overall()) + " val " +
        pct(r.report.final_val.overall()) + " in " + fmt("%.0fs", r.report.wall_seconds));
    return r;
  }

 private:
  const synth::Corpus& corpus_;
  std::map<std::uint64_t, TrainedRun> runs_;
};

synth::CorpusManifest reference_manifest() {
  synth::CorpusManifest man;
  man.seed = 7;
  man.train_size = 2000;
  man.val_size = 500;
  return man;
}

const synth::Corpus& reference_corpus() {
  static const synth::Corpus c = synth::generate_corpus(reference_manifest());
  return c;
}

RunCache& runs() {
  static RunCache cache(reference_corpus());
  return cache;
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t groups = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& rep : gradcheck_suite(seed)) {
      worst = std::max(worst, rep.max_error());
      groups += rep.groups.size();
    }
  }
  const double t = seconds_since(start);
  return {worst < 1e-3 && t < 60.0,
          "max rel err " + fmt("%.2e", worst) + " over " + std::to_string(groups) +
              " groups, 3 seeds, " + fmt("%.1fs", t)};
}

Outcome normalization_suite() {
  Rng rng(1001);
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) worst = std::max(worst, suites::normalization_case(rng));
  return {worst < 1e-9, "max |sum - 1| " + fmt("%.2e", worst) + " on 1000 instances"};
}

Outcome oracle_equivalence() {
  const std::vector<std::pair<const char*, double (*)(Rng&)>> cases = {
      {"top-k", suites::topk_case},         {"biased softmax", suites::edges_case},
      {"graph update", suites::gat_case},   {"fusion", suites::fusion_case},
      {"priority", suites::priority_case},  {"aggregation", suites::aggregation_case}};
  bool ok = true;
  std::string detail;
  std::uint64_t seed = 2001;
  for (const auto& [name, fn] : cases) {
    Rng rng(seed++);
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) worst = std::max(worst, fn(rng));
    ok = ok && worst < 1e-9;
    detail += std::string(detail.empty() ? "" : ", ") + name + " " + fmt("%.1e", worst);
  }
  return {ok, detail + " (100 cases each)"};
}

Outcome reduction_identities() {
  const std::vector<std::pair<const char*, double (*)(Rng&)>> cases = {
      {"zero label bias", suites::zero_bias_case},
      {"one-hot beta", suites::one_hot_beta_case},
      {"P >= m", suites::keep_all_case},
      {"zero value projection", suites::zero_value_case}};
  bool ok = true;
  std::string failed;
  std::uint64_t seed = 3001;
  for (const auto& [name, fn] : cases) {
    Rng rng(seed++);
    for (int c = 0; c < 100; ++c) {
      if (fn(rng) != 0.0) {
        ok = false;
        failed += std::string(" ") + name;
        break;
      }
    }
  }
  return {ok, ok ? "all four identities exact on 100 cases each" : "failed:" + failed};
}

Outcome learnability() {
  const synth::Corpus& corpus = reference_corpus();
  const ModelConfig cfg = desk_preset();

  // Untrained model against the rate of its own constant-ish guesses.
  FusionNetwork untrained(cfg, corpus.sizes());
  const Accuracy chance_acc = evaluate(untrained, corpus.val);
  const double n = static_cast<double>(chance_acc.count());
  const double chance = 1.0 / static_cast<double>(corpus.answers.size());
  const double sigma = std::sqrt(chance * (1.0 - chance) / n);
  const bool at_chance = std::abs(chance_acc.overall() - chance) <= 3.0 * sigma;

  const TrainedRun& run = runs().get(cfg);
  const RunReport& r = run.report;
  const double train_acc = r.final_train.overall(), val_acc = r.final_val.overall();
  const bool ok = train_acc >= 0.90 && val_acc >= 0.75 && r.epochs.size() <= 30 &&
                  r.wall_seconds < 1800.0 && at_chance;
  return {ok, "train " + pct(train_acc) + " (need 90%), val " + pct(val_acc) +
                  " (need 75%), " + std::to_string(r.epochs.size()) + " epochs in " +
                  fmt("%.0fs", r.wall_seconds) + "; untrained " + pct(chance_acc.overall()) +
                  " vs chance " + pct(chance) + " +/- " + pct(3.0 * sigma)};
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Outcome ablation_direction() {
  const char* names[4] = {"FULL", "FULL-GFM", "FULL-OF", "FULL-OF-GFM"};
  double med[4];
  for (int variant = 0; variant < 4; ++variant) {
    std::vector<double> accs;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ModelConfig cfg = desk_preset();
      cfg.seed = seed;
      cfg.enable_gfm = !(variant & 1);
      cfg.enable_of = !(variant & 2);
      accs.push_back(runs().get(cfg).report.final_val.overall());
    }
    med[variant] = median3(accs);
  }
  const bool ok = med[0] >= med[1] && med[0] >= med[2] && med[0] >= med[3] &&
                  med[0] - med[3] >= 0.01;
  std::string detail = "median val";
  for (int v = 0; v < 4; ++v) detail += std::string(" ") + names[v] + " " + pct(med[v]);
  return {ok, detail};
}

Outcome sensitivity_sweeps() {
  bool ok = true;
  std::string detail;
  for (const auto& [param, values] :
       {std::pair<SweepParam, std::vector<std::size_t>>{SweepParam::kK, {1, 2, 4, 8}},
        {SweepParam::kP, {1, 2, 4, 6, 10}}}) {
    SweepResult res;
    res.param = param == SweepParam::kK ? "k" : "P";
    for (std::size_t v : values) {
      ModelConfig cfg = desk_preset();
      (param == SweepParam::kK ? cfg.k : cfg.P) = v;
      const RunReport& r = runs().get(cfg).report;
      res.rows.push_back({v, r.final_train.overall(), r.final_val});
    }
    const std::string stem = "sweep_" + res.param;
    write_file_atomic(stem + ".txt", res.table());
    write_file_atomic(stem + ".tsv", res.tsv());
    std::cout << res.table();
    ok = ok && res.rows.size() == values.size() && fs::exists(stem + ".tsv");
    detail += std::string(detail.empty() ? "" : "; ") + res.param + " peak " + res.peak();
  }
  return {ok, detail + " (tables in sweep_k.*, sweep_P.*)"};
}

Outcome determinism() {
  const synth::CorpusManifest man = reference_manifest();
  const synth::Corpus a = synth::generate_corpus(man), b = synth::generate_corpus(man);
  const bool corpora = synth::encode_corpus(a.train, man.options.d_in) ==
                           synth::encode_corpus(b.train, man.options.d_in) &&
                       synth::encode_corpus(a.val, man.options.d_in) ==
                           synth::encode_corpus(b.val, man.options.d_in);
  const ModelConfig cfg = desk_preset();
  const TrainedRun& first = runs().get(cfg);
  const TrainedRun second = runs().fresh(cfg);
  const bool ckpt = first.checkpoint == second.checkpoint;
  const bool report = first.lines == second.lines;
  return {corpora && ckpt && report,
          std::string("corpora ") + (corpora ? "identical" : "differ") + ", checkpoints " +
              (ckpt ? "identical" : "differ") + ", reports " + (report ? "identical" : "differ")};
}

Outcome corpus_soundness() {
  synth::CorpusManifest man;
  man.seed = 8;
  man.train_size = 8000;
  man.val_size = 2000;
  const synth::Corpus c = synth::generate_corpus(man);
  std::size_t agree = 0, total = 0;
  for (const auto* split : {&c.train, &c.val})
    for (const auto& r : *split) {
      agree += oracle::qa_agrees(r, c);
      ++total;
    }
  const fs::path dir = fs::temp_directory_path() / "graphfuse_acceptance_corpus";
  fs::remove_all(dir);
  synth::write_corpus(c, dir);
  const synth::Corpus back = synth::read_corpus(dir);
  const bool round_trip =
      back.train == c.train && back.val == c.val &&
      fnv1a64(synth::encode_corpus(back.train, man.options.d_in)) ==
          fnv1a64(read_file(dir / man.train_file)) &&
      fnv1a64(synth::encode_corpus(back.val, man.options.d_in)) ==
          fnv1a64(read_file(dir / man.val_file));
  fs::remove_all(dir);
  return {agree == total && total == 10000 && round_trip,
          std::to_string(agree) + "/" + std::to_string(total) + " answers agree; round trip " +
              (round_trip ? "bit-exact" : "differs")};
}

}  // namespace
}  // namespace graphfuse

int main(int argc, char** argv) {
  using namespace graphfuse;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient", gradient_suite},   {"normalization", normalization_suite},
      {"oracle", oracle_equivalence}, {"reduction", reduction_identities},
      {"learnability", learnability}, {"ablation", ablation_direction},
      {"sweeps", sensitivity_sweeps}, {"determinism", determinism},
      {"corpus", corpus_soundness}};
  std::set<std::string> only(argv + 1, argv + argc);
  for (const auto& name : only) {
    if (std::none_of(criteria.begin(), criteria.end(),
                     [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 2;
    }
  }
  std::string report;
  std::size_t passed = 0, ran = 0;
  try {
    for (const auto& [name, fn] : criteria) {
      if (!only.empty() && !only.count(name)) continue;
      const auto start = Clock::now();
      const Outcome o = fn();
      const std::string line = std::string(o.pass ? "PASS" : "FAIL") + "  " + name + ": " +
                               o.detail + fmt(" [%.0fs]", seconds_since(start));
      std::cout << line << std::endl;
      report += line + "\n";
      passed += o.pass;
      ++ran;
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance harness error: " << e.what() << "\n";
    return 1;
  }
  const std::string summary =
      std::to_string(passed) + " of " + std::to_string(ran) + " criteria pass";
  std::cout << summary << std::endl;
  write_file_atomic("acceptance_report.txt", report + summary + "\n");
  return 0;
}
