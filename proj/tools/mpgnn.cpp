#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpgnn/bench.hpp"
#include "mpgnn/errors.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<int> passes;
  std::optional<std::string> stage;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::optional<std::string> corpus;
  std::optional<std::string> checkpoint;
  std::optional<int> epochs;
  std::optional<int> count;
  std::vector<std::string> instances;
  std::vector<std::string> variants;
  bool resume = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "Run configuration (JSON)");
  sub->add_option("--seed", o.seed, "Global seed");
  sub->add_option("--k", o.k, "Number of colors");
  sub->add_option("--passes", o.passes, "Forward passes of iterative inference");
  sub->add_option("--stage", o.stage, "Last pipeline stage: inference-only | heuristic | full");
  sub->add_option("--jobs", o.jobs, "Worker threads (0 = all cores, capped by MP_ENGINE_THREADS)");
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--corpus", o.corpus, "Corpus directory");
  sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
}

mpgnn::RunConfig build_config(const std::string& command, const Overrides& o) {
  mpgnn::RunConfig cfg = o.config.empty() ? mpgnn::RunConfig{} : mpgnn::load_run_config(o.config);
  cfg.command = command;
  if (o.seed) cfg.seed = *o.seed;
  if (o.k) cfg.k = *o.k;
  if (o.passes) cfg.pipeline.inference.forward_passes = *o.passes;
  if (o.stage) {
    const std::string& s = *o.stage;
    if (s == "inference-only" || s == "inference") cfg.pipeline.stop_after = mpgnn::PipelineStage::Inference;
    else if (s == "heuristic") cfg.pipeline.stop_after = mpgnn::PipelineStage::Heuristic;
    else if (s == "full" || s == "csp") cfg.pipeline.stop_after = mpgnn::PipelineStage::Csp;
    else throw mpgnn::ConfigError("unknown stage '" + s + "' (inference-only, heuristic, full)");
  }
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.out) cfg.out_dir = *o.out;
  if (o.corpus) cfg.corpus_dir = *o.corpus;
  if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
  if (o.count) cfg.corpus.count = *o.count;
  if (o.epochs) {
    if (cfg.training.empty()) throw mpgnn::ConfigError("--epochs needs at least one training phase");
    cfg.training.back().epochs = *o.epochs;
  }
  if (!o.instances.empty()) cfg.instances = o.instances;
  if (!o.variants.empty()) cfg.variants = o.variants;
  if (o.resume) cfg.resume = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Balanced graph coloring with a message-passing GNN and refinement"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("generate", "Write a planted corpus and its manifest");
  add_common(gen, o);
  gen->add_option("--count", o.count, "Number of instances");

  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  add_common(train, o);
  train->add_option("--epochs", o.epochs, "Length of the last training phase");
  train->add_flag("--resume", o.resume, "Continue from <out>/checkpoint.json");

  auto* solve = app.add_subcommand("solve", "Color instances with the full pipeline");
  add_common(solve, o);
  solve->add_option("instances", o.instances, "Instance files (default: the corpus)");

  auto* bench = app.add_subcommand("bench", "Evaluate pipeline variants and baselines");
  add_common(bench, o);
  bench->add_option("--variant", o.variants, "Restrict to these variants");

  auto* verify = app.add_subcommand("verify", "Cross-check solvers against exhaustive search");
  add_common(verify, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mpgnn::kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  mpgnn::RunConfig cfg;
  try {
    cfg = build_config(command, o);
  } catch (const mpgnn::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return mpgnn::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return mpgnn::kExitConfig;
  }
  return mpgnn::run_command(cfg);
}
