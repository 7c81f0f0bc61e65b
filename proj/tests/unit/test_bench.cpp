#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpgnn/bench.hpp"
#include "mpgnn/errors.hpp"
#include "mpgnn/instance_io.hpp"

using namespace mpgnn;
namespace fs = std::filesystem;


namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.corpus.count = 4;
  cfg.corpus.n_min = 12;
  cfg.corpus.n_max = 20;
  cfg.corpus_dir = (root / "corpus").string();
  cfg.training = {TrainPhase{TrainStage::JointInit, TrainScheme::DynamicWeighting, 2, 1e-3, {}},
                  TrainPhase{TrainStage::FineTune, TrainScheme::DynamicWeighting, 3, 1e-3, {}}};
  cfg.checkpoint_every = 2;
  cfg.pass_sweep = {1, 3};
  cfg.verify_count = 30;
  cfg.verify_max_nodes = 7;
  return cfg;
}

}  // namespace

TEST_CASE("run config round trips through json") {
  RunConfig cfg = small_config("/tmp/x");
  cfg.variants = {"gnn", "dsatur"};
  cfg.models = {{"a", "a.json"}};
  cfg.pipeline.inference.forward_passes = 7;
  cfg.training[1].lr_balance = 1e-4;
  const auto j = cfg.to_json();
  const RunConfig back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.to_json().dump() == j.dump());
}

TEST_CASE("run config rejects unknown keys, variants and bad values") {
  auto j = RunConfig{}.to_json();
  j["bogus"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  RunConfig cfg;
  cfg.variants = {"gnn+magic"};
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gnn+magic") != std::string::npos);
    CHECK(msg.find("full+sa") != std::string::npos);  // lists the valid choices
  }
  cfg = RunConfig{};
  cfg.pipeline.inference.forward_passes = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.verify_max_nodes = 20;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("aggregates are recomputable from rows") {
  std::vector<BenchRow> rows;
  const int spreads[] = {0, 2, 1, 1};
  const std::size_t conflicts[] = {0, 0, 3, 0};
  for (int i = 0; i < 4; ++i) {
    BenchRow r;
    r.model = "m";
    r.variant = "gnn";
    r.graph = "g" + std::to_string(i);
    r.conflicts = conflicts[i];
    r.max_spread = spreads[i];
    rows.push_back(r);
  }
  rows.push_back(BenchRow{"baseline", "dsatur", "g0", 3, 2, "-", 0, 1, 0.0, 0.0});
  const auto agg = aggregate_rows(rows);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].variant == "gnn");
  CHECK(agg[0].instances == 4);
  CHECK(agg[0].solved == 3);
  CHECK(agg[0].solve_rate == doctest::Approx(75.0));
  CHECK(agg[0].mean_spread == doctest::Approx(1.0));
  CHECK(agg[0].std_spread == doctest::Approx(std::sqrt(0.5)));
  CHECK(agg[1].solve_rate == 100.0);
}

TEST_CASE("seeds are keyed by instance position") {
  RunConfig cfg;
  const auto a = pipeline_for_instance(cfg, 3);
  const auto b = pipeline_for_instance(cfg, 3);
  const auto c = pipeline_for_instance(cfg, 4);
  CHECK(a.inference.init_seed == b.inference.init_seed);
  CHECK(a.inference.init_seed != c.inference.init_seed);
  CHECK(a.sa.seed != a.inference.init_seed);
  CHECK(model_init_seed(1) != model_init_seed(2));
}

TEST_CASE("commands: generate, train, resume, solve, bench, verify") {
  const fs::path root = fs::temp_directory_path() / "mpgnn_bench_cmds";
  fs::remove_all(root);
  RunConfig cfg = small_config(root);

  cfg.command = "generate";
  cfg.out_dir = cfg.corpus_dir;
  CHECK(run_command(cfg) == kExitOk);
  CHECK(fs::exists(root / "corpus" / "manifest.json"));

  cfg.command = "train";
  cfg.out_dir = (root / "train").string();
  CHECK(run_command(cfg) == kExitOk);
  const std::string ckpt = slurp(root / "train" / "checkpoint.json");
  const std::string hist = slurp(root / "train" / "history.csv");
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 6);

  // identical seeds give byte-identical checkpoints
  cfg.out_dir = (root / "train2").string();
  CHECK(run_command(cfg) == kExitOk);
  CHECK(slurp(root / "train2" / "checkpoint.json") == ckpt);

  // interrupted after the first phase and resumed: same final checkpoint and history
  RunConfig part = cfg;
  part.out_dir = (root / "train3").string();
  part.training.resize(1);
  CHECK(run_command(part) == kExitOk);
  RunConfig rest = cfg;
  rest.out_dir = part.out_dir;
  rest.resume = true;
  CHECK(run_command(rest) == kExitOk);
  CHECK(slurp(root / "train3" / "checkpoint.json") == ckpt);
  CHECK(slurp(root / "train3" / "history.csv") == hist);

  cfg.checkpoint = (root / "train" / "checkpoint.json").string();
  cfg.command = "solve";
  cfg.out_dir = (root / "solve").string();
  CHECK(run_command(cfg) == kExitOk);
  const std::string summary = slurp(root / "solve" / "solve_summary.json");
  CHECK(summary.find("\"solved\": 4") != std::string::npos);
  cfg.out_dir = (root / "solve2").string();
  CHECK(run_command(cfg) == kExitOk);
  CHECK(slurp(root / "solve2" / "solve_summary.json") == summary);
  CHECK(fs::exists(root / "solve" / "run_config.solve.json"));

  // the persisted config reproduces the run
  RunConfig again = load_run_config(root / "solve" / "run_config.solve.json");
  again.out_dir = (root / "solve3").string();
  CHECK(run_command(again) == kExitOk);
  CHECK(slurp(root / "solve3" / "solve_summary.json") == summary);

  cfg.command = "bench";
  cfg.out_dir = (root / "bench").string();
  CHECK(run_command(cfg) == kExitOk);
  const std::string rows = slurp(root / "bench" / "bench_rows.csv");
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 4 * 8);
  cfg.out_dir = (root / "bench2").string();
  CHECK(run_command(cfg) == kExitOk);
  CHECK(slurp(root / "bench2" / "bench_rows.csv") == rows);
  CHECK(slurp(root / "bench2" / "bench.json") == slurp(root / "bench" / "bench.json"));
  CHECK(fs::exists(root / "bench" / "pass_sweep.dat"));

  cfg.command = "verify";
  cfg.out_dir = (root / "verify").string();
  CHECK(run_command(cfg) == kExitOk);

  fs::remove_all(root);
}

TEST_CASE("exit codes") {
  const fs::path root = fs::temp_directory_path() / "mpgnn_bench_exit";
  fs::remove_all(root);
  RunConfig cfg = small_config(root);
  cfg.command = "solve";
  cfg.checkpoint = (root / "missing.json").string();
  CHECK(run_command(cfg) == kExitConfig);
  cfg.command = "nonsense";
  CHECK(run_command(cfg) == kExitConfig);
  cfg.command = "train";
  cfg.corpus_dir = (root / "no_corpus").string();
  CHECK(run_command(cfg) == kExitIo);
  CHECK_THROWS_AS(load_run_config(root / "nope.json"), IoError);
  fs::remove_all(root);
}
