#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpgnn/gnn.hpp"
#include "mpgnn/instance_io.hpp"
#include "mpgnn/losses.hpp"
#include "mpgnn/refinement.hpp"
#include "mpgnn/training.hpp"

namespace mpgnn {

// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitDivergence = 4,
};

struct TrainPhase {
  TrainStage stage = TrainStage::FineTune;
  TrainScheme scheme = TrainScheme::DynamicWeighting;
  int epochs = 500;
  double lr = 1e-3;
  std::optional<double> lr_balance;
  // Train only on corpus graphs with at most this many nodes (0 = every graph).
  int max_nodes = 0;
  bool normalize_by_edges = false;
};

struct ModelRef {
  std::string name;
  std::string checkpoint;
};

// Everything a command needs. Serialized next to every run's outputs; feeding
// that file back through --config repeats the run.
struct RunConfig {
  std::string command;
  std::string corpus_dir = "corpus";
  std::vector<std::string> instances;  // explicit instance files (solve); overrides corpus_dir
  std::string checkpoint = "model.json";
  std::string out_dir = "out";
  std::uint64_t seed = 42;
  int k = 3;
  int jobs = 1;  // 0 = hardware concurrency

  CorpusParams corpus;  // seed and k come from the global fields
  GnnArch arch;         // k comes from the global field
  LossConfig loss;
  std::vector<TrainPhase> training;
  bool resume = false;
  int checkpoint_every = 25;  // epochs between intermediate checkpoints (0 = only at the end)

  PipelineConfig pipeline;  // per-graph seeds are derived from `seed`

  std::vector<std::string> variants;  // empty = every variant
  std::vector<ModelRef> models;       // empty = {"gnn", checkpoint}
  std::vector<int> pass_sweep{1, 3, 7, 10};
  bool write_timings = true;  // wall times go to separate files

  int verify_count = 500;
  int verify_max_nodes = 10;

  RunConfig();

  nlohmann::json to_json() const;
  // Throws ConfigError on unknown keys, wrong types or invalid values.
  static RunConfig from_json(const nlohmann::json& j);
  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Seeds of the per-graph work, keyed by the instance position so results do
// not depend on scheduling.
std::uint64_t model_init_seed(std::uint64_t global);
std::uint64_t training_seed(std::uint64_t global);
PipelineConfig pipeline_for_instance(const RunConfig& cfg, std::size_t index);

// Worker count after applying MP_ENGINE_THREADS.
int effective_jobs(int requested);
// Calls fn(i) for i in [0, count) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

inline const std::vector<std::string>& bench_variant_names() {
  static const std::vector<std::string> names = {
      "gnn", "gnn+sa", "gnn+heuristic", "gnn+heuristic+sa", "full", "full+sa", "dsatur", "welsh_powell"};
  return names;
}

struct BenchRow {
  std::string model;
  std::string variant;
  std::string graph;
  int nodes = 0;
  std::size_t edges = 0;
  std::string stage;  // producing stage ("-" for baselines)
  std::size_t conflicts = 0;
  int max_spread = 0;
  double squared_deviation = 0.0;
  double wall_ms = 0.0;
};

struct BenchAggregate {
  std::string model;
  std::string variant;
  int instances = 0;
  int solved = 0;
  double solve_rate = 0.0;  // percent
  double mean_spread = 0.0;
  double std_spread = 0.0;  // population standard deviation
};

struct SweepRow {
  std::string model;
  int passes = 0;
  double solve_inference = 0.0;  // percent
  double solve_heuristic = 0.0;  // percent
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchAggregate> aggregates;
  std::vector<SweepRow> sweep;

  std::string rows_csv(bool include_times) const;
  std::string summary_csv() const;
  std::string sweep_csv() const;
  std::string sweep_dat() const;  // whitespace-separated, one model block per index
  nlohmann::json to_json() const;
};

// Groups rows by (model, variant) in first-seen order.
std::vector<BenchAggregate> aggregate_rows(const std::vector<BenchRow>& rows);

struct NamedModel {
  std::string name;
  GnnModel model;
};

BenchReport run_bench(const RunConfig& cfg, const std::vector<std::string>& ids,
                      const std::vector<ConflictGraph>& graphs,
                      const std::vector<NamedModel>& models);

struct VerifySummary {
  int instances = 0;
  int csp_mismatches = 0;
  int lower_bound_violations = 0;
  int sa_violations = 0;
  bool ok() const { return csp_mismatches == 0 && lower_bound_violations == 0 && sa_violations == 0; }
  nlohmann::json to_json() const;
};

// Oracle cross-checks on random small graphs (model optional).
VerifySummary run_verify(const RunConfig& cfg, const GnnModel* model);

GnnModel load_model(const std::filesystem::path& checkpoint, int k);

int cmd_generate(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_solve(const RunConfig& cfg);
int cmd_bench(const RunConfig& cfg);
int cmd_verify(const RunConfig& cfg);

// Dispatches on cfg.command and maps exceptions to exit codes (message on stderr).
int run_command(const RunConfig& cfg);

}  // namespace mpgnn
