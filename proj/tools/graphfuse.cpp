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

// graphfuse command-line driver.
//
// Exit status: 0 on success, 2 on usage or configuration errors, 1 on any
// other failure. GRAPHFUSE_LOG=quiet|info|debug sets stderr verbosity.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "graphfuse/checkpoint.hpp"
#include "graphfuse/gradcheck.hpp"
#include "graphfuse/synth.hpp"
#include "graphfuse/trainer.hpp"

namespace {

using namespace graphfuse;
namespace fs = std::filesystem;

enum class LogLevel { kQuiet, kInfo, kDebug };

LogLevel log_level() {
  const char* v = std::getenv("GRAPHFUSE_LOG");
  if (!v) return LogLevel::kInfo;
  const std::string s(v);
  if (s == "quiet") return LogLevel::kQuiet;
  if (s == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log(LogLevel level, const std::string& msg) {
  if (log_level() >= level) std::cerr << msg << "\n";
}

struct ModelFlags {
  std::string config;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  bool ablate_gfm = false;
  bool ablate_of = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON model configuration");
    app->add_option("--preset", preset, "Base configuration")
        ->check(CLI::IsMember({"desk", "paper"}));
    app->add_option("--seed", seed, "Override the configuration seed");
    app->add_flag("--ablate-gfm", ablate_gfm, "Disable the graph fusion module");
    app->add_flag("--ablate-of", ablate_of, "Disable the object filter");
  }

  ModelConfig resolve() const {
    ModelConfig cfg = preset_by_name(preset);
    if (!config.empty()) cfg = load_config(config, cfg);
    if (seed) cfg.seed = *seed;
    if (ablate_gfm) cfg.enable_gfm = false;
    if (ablate_of) cfg.enable_of = false;
    cfg.validate();
    return cfg;
  }
};

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " list entry: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

synth::Corpus open_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("corpus directory not found: " + dir);
  return synth::read_corpus(dir);
}

const std::vector<synth::SceneInstance>& pick_split(const synth::Corpus& c,
                                                    const std::string& split) {
  return split == "train" ? c.train : c.val;
}

void check_corpus_fits(const FusionNetwork& net, const synth::Corpus& c) {
  if (!(net.sizes() == c.sizes()) || net.config().d_in != c.manifest.options.d_in) {
    throw CheckpointError("checkpoint vocabulary or feature width does not match corpus");
  }
}

int cmd_gen(const std::string& manifest_path, const std::string& out,
            std::optional<std::uint64_t> seed) {
  synth::CorpusManifest man = synth::load_manifest(manifest_path);
  if (seed) man.seed = *seed;
  man.validate();
  const synth::Corpus corpus = synth::generate_corpus(man);
  synth::write_corpus(corpus, out);
  std::cout << "train " << corpus.train.size() << " records\n"
            << "val " << corpus.val.size() << " records\n";
  return 0;
}

int cmd_train(const ModelFlags& flags, const std::string& corpus_dir,
              const std::string& out, std::string report_path) {
  const ModelConfig cfg = flags.resolve();
  const synth::Corpus corpus = open_corpus(corpus_dir);
  FusionNetwork net(cfg, corpus.sizes());
  log(LogLevel::kInfo, "training " + std::to_string(net.params().scalar_count()) +
                           " parameters, fingerprint " + hex64(fingerprint(cfg)));
  const RunReport rep = train(net, corpus, [](const EpochRecord& e) {
    char line[200];
    std::snprintf(line, sizeof line,
                  "epoch %2d lr %.2e loss %.5f train %.4f val %.4f", e.epoch, e.lr,
                  e.train_loss, e.train.overall(), e.val.overall());
    log(LogLevel::kInfo, line);
  });
  save_checkpoint(net, out);
  if (report_path.empty()) report_path = out + ".report.jsonl";
  write_file_atomic(report_path, rep.to_lines(cfg));
  std::printf("train accuracy %.4f\nval accuracy %.4f\nwall time %.1fs\n",
              rep.final_train.overall(), rep.final_val.overall(), rep.wall_seconds);
  return 0;
}

int cmd_eval(const ModelFlags& flags, bool check_config, const std::string& checkpoint,
             const std::string& corpus_dir, const std::string& split,
             const std::string& out) {
  const auto net = load_checkpoint(checkpoint);
  if (check_config) require_fingerprint(*net, flags.resolve());
  const synth::Corpus corpus = open_corpus(corpus_dir);
  check_corpus_fits(*net, corpus);
  const Accuracy acc = evaluate(*net, pick_split(corpus, split));
  nlohmann::json j = {{"kind", "eval"},
                      {"fingerprint", hex64(fingerprint(net->config()))},
                      {"split", split},
                      {"accuracy", to_json(acc)}};
  const std::string text = j.dump() + "\n";
  if (!out.empty()) write_file_atomic(out, text);
  std::cout << text;
  return 0;
}

int cmd_sweep(const ModelFlags& flags, const std::string& corpus_dir,
              const std::string& param, const std::string& values, const std::string& out) {
  const ModelConfig cfg = flags.resolve();
  const auto list = parse_list(values, "value");
  const SweepParam which = sweep_param_from(param);
  for (std::size_t v : list) {
    ModelConfig probe = cfg;
    (which == SweepParam::kK ? probe.k : probe.P) = v;
    probe.validate();
  }
  const synth::Corpus corpus = open_corpus(corpus_dir);
  const SweepResult res = sweep(cfg, corpus, which, list, [&](const SweepRow& r) {
    log(LogLevel::kInfo, param + "=" + std::to_string(r.value) +
                             " val " + std::to_string(r.val.overall()));
  });
  const std::string table = res.table();
  std::cout << table << "peak: " << res.peak() << "\n";
  if (!out.empty()) {
    write_file_atomic(out + ".txt", table);
    write_file_atomic(out + ".tsv", res.tsv());
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  GradCheckOptions opt;
  opt.tolerance = tolerance;
  bool ok = true;
  for (const auto& rep : gradcheck_suite(seed, opt)) {
    for (const auto& g : rep.groups) {
      const bool pass = g.max_rel_error < opt.tolerance;
      ok = ok && pass;
      std::printf("%-4s %-12s %-34s max_rel_err %.3e (%zu entries)\n", pass ? "ok" : "FAIL",
                  rep.variant.c_str(), g.group.c_str(), g.max_rel_error, g.checked);
    }
  }
  std::printf("%s\n", ok ? "all groups pass" : "gradient check failed");
  return ok ? 0 : 1;
}

int cmd_dump(const std::string& checkpoint, const std::string& corpus_dir,
             const std::string& split, const std::string& ids, const std::string& out) {
  const auto net = load_checkpoint(checkpoint);
  const synth::Corpus corpus = open_corpus(corpus_dir);
  check_corpus_fits(*net, corpus);
  const auto& records = pick_split(corpus, split);
  const auto list = parse_list(ids, "id");
  for (std::size_t id : list) {
    if (id >= records.size()) {
      throw UsageError("example id " + std::to_string(id) + " out of range (split has " +
                       std::to_string(records.size()) + ")");
    }
  }
  std::string text;
  for (std::size_t id : list) text += attention_record(*net, records[id], id).dump() + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Question-driven graph fusion for relational question answering"};
  app.require_subcommand(1);

  std::string manifest, out, corpus, checkpoint, split = "val", param, values, ids, report;
  std::optional<std::uint64_t> seed;
  std::uint64_t gc_seed = 1;
  double tolerance = 1e-3;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen->add_option("--manifest", manifest, "Corpus manifest (JSON)")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the manifest seed");

  ModelFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_flags.attach(train_cmd);
  train_cmd->add_option("--corpus", corpus, "Corpus directory")->required();
  train_cmd->add_option("--out", out, "Checkpoint path")->required();
  train_cmd->add_option("--report", report, "Report path (default: <out>.report.jsonl)");

  ModelFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--corpus", corpus, "Corpus directory")->required();
  eval_cmd->add_option("--split", split, "train or val")
      ->check(CLI::IsMember({"train", "val"}));
  eval_cmd->add_option("--out", out, "Report path");

  ModelFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep k or P");
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--corpus", corpus, "Corpus directory")->required();
  sweep_cmd->add_option("--param", param, "k or P")
      ->required()
      ->check(CLI::IsMember({"k", "P"}));
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required();
  sweep_cmd->add_option("--out", out, "Output prefix for .txt and .tsv tables");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--seed", gc_seed, "Fixture seed");
  gc->add_option("--tolerance", tolerance, "Maximum relative error");

  auto* dump = app.add_subcommand("dump-attention", "Write attention records");
  dump->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  dump->add_option("--corpus", corpus, "Corpus directory")->required();
  dump->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
  dump->add_option("--ids", ids, "Comma-separated example ids")->required();
  dump->add_option("--out", out, "Output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(manifest, out, seed);
    if (train_cmd->parsed()) return cmd_train(train_flags, corpus, out, report);
    if (eval_cmd->parsed()) {
      const bool check = !eval_flags.config.empty() || eval_cmd->count("--preset") > 0 ||
                         eval_flags.seed || eval_flags.ablate_gfm || eval_flags.ablate_of;
      return cmd_eval(eval_flags, check, checkpoint, corpus, split, out);
    }
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, corpus, param, values, out);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, tolerance);
    if (dump->parsed()) return cmd_dump(checkpoint, corpus, split, ids, out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
