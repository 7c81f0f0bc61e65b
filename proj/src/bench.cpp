#include "mpgnn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mpgnn/baselines.hpp"
#include "mpgnn/errors.hpp"
#include "mpgnn/rng.hpp"

namespace mpgnn {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered = nlohmann::ordered_json;

namespace {

// ---- config (de)serialization ------------------------------------------------

template <typename T>
T take(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config key '") + key + "': " + ex.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::string resort_name(ResortMode m) {
  return m == ResortMode::OnShrink ? "on_shrink" : "listing_literal";
}

ResortMode resort_from(const std::string& s) {
  if (s == "on_shrink") return ResortMode::OnShrink;
  if (s == "listing_literal") return ResortMode::ListingLiteral;
  throw ConfigError("unknown resort mode '" + s + "' (on_shrink, listing_literal)");
}

std::string objective_name(CspObjective o) {
  return o == CspObjective::DeviationCount ? "deviation_count" : "absolute_difference";
}

CspObjective objective_from(const std::string& s) {
  if (s == "deviation_count") return CspObjective::DeviationCount;
  if (s == "absolute_difference") return CspObjective::AbsoluteDifference;
  throw ConfigError("unknown CSP objective '" + s + "' (deviation_count, absolute_difference)");
}

PipelineStage stage_from(const std::string& s) {
  if (s == "inference" || s == "inference-only") return PipelineStage::Inference;
  if (s == "heuristic") return PipelineStage::Heuristic;
  if (s == "csp" || s == "full") return PipelineStage::Csp;
  throw ConfigError("unknown stage '" + s + "' (inference-only, heuristic, full)");
}

ordered loss_to_json(const LossConfig& lc) {
  ordered weights = ordered::object();
  for (const auto& [term, w] : lc.weights) weights[std::string(loss_name(term))] = w;
  return {{"weights", weights},
          {"harsh_delta", lc.harsh_delta},
          {"beta",
           {{"initial", lc.beta.initial},
            {"decay", lc.beta.decay},
            {"patience", lc.beta.patience},
            {"minimum", lc.beta.minimum},
            {"tolerance", lc.beta.tolerance}}}};
}

LossConfig loss_from_json(const json& j) {
  reject_unknown(j, {"weights", "harsh_delta", "beta"}, "loss");
  LossConfig lc;
  if (j.contains("weights")) {
    lc.weights.clear();
    for (const auto& [name, w] : j.at("weights").items()) {
      auto term = loss_from_name(name);
      if (!term) throw ConfigError("unknown loss term '" + name + "'");
      lc.weights[*term] = w.get<double>();
    }
  }
  lc.harsh_delta = take(j, "harsh_delta", lc.harsh_delta);
  if (j.contains("beta")) {
    const auto& b = j.at("beta");
    reject_unknown(b, {"initial", "decay", "patience", "minimum", "tolerance"}, "loss.beta");
    lc.beta.initial = take(b, "initial", lc.beta.initial);
    lc.beta.decay = take(b, "decay", lc.beta.decay);
    lc.beta.patience = take(b, "patience", lc.beta.patience);
    lc.beta.minimum = take(b, "minimum", lc.beta.minimum);
    lc.beta.tolerance = take(b, "tolerance", lc.beta.tolerance);
  }
  return lc;
}

ordered phase_to_json(const TrainPhase& p) {
  ordered j = {{"stage", std::string(stage_name(p.stage))},
               {"scheme", std::string(scheme_name(p.scheme))},
               {"epochs", p.epochs},
               {"lr", p.lr}};
  j["lr_balance"] = p.lr_balance ? ordered(*p.lr_balance) : ordered(nullptr);
  j["max_nodes"] = p.max_nodes;
  j["normalize_by_edges"] = p.normalize_by_edges;
  return j;
}

TrainPhase phase_from_json(const json& j) {
  reject_unknown(j, {"stage", "scheme", "epochs", "lr", "lr_balance", "max_nodes", "normalize_by_edges"},
                 "training phase");
  TrainPhase p;
  if (j.contains("stage")) {
    auto s = stage_from_name(j.at("stage").get<std::string>());
    if (!s) throw ConfigError("unknown training stage (joint_init, fine_tune)");
    p.stage = *s;
  }
  if (j.contains("scheme")) {
    auto s = scheme_from_name(j.at("scheme").get<std::string>());
    if (!s)
      throw ConfigError(
          "unknown training scheme (dynamic_weighting, gradient_reweighting, dual_optimizer)");
    p.scheme = *s;
  }
  p.epochs = take(j, "epochs", p.epochs);
  p.lr = take(j, "lr", p.lr);
  if (j.contains("lr_balance") && !j.at("lr_balance").is_null())
    p.lr_balance = j.at("lr_balance").get<double>();
  p.max_nodes = take(j, "max_nodes", p.max_nodes);
  p.normalize_by_edges = take(j, "normalize_by_edges", p.normalize_by_edges);
  return p;
}

ordered pipeline_to_json(const PipelineConfig& pc) {
  return {{"forward_passes", pc.inference.forward_passes},
          {"init_noise", pc.inference.init_noise},
          {"stop_after", std::string(pipeline_stage_name(pc.stop_after))},
          {"use_sa", pc.use_sa},
          {"heuristic",
           {{"resort", resort_name(pc.heuristic.resort)},
            {"never_worse_than_argmax", pc.heuristic.never_worse_than_argmax}}},
          {"csp",
           {{"time_budget_s", pc.csp.time_budget_s},
            {"objective", objective_name(pc.csp.objective)},
            {"balance_term", pc.csp.balance_term},
            {"balance_weight", pc.csp.balance_weight},
            {"optimize", pc.csp.optimize},
            {"node_limit", pc.csp.node_limit}}},
          {"sa",
           {{"iterations", pc.sa.iterations},
            {"proposal", std::string(sa_proposal_name(pc.sa.proposal))},
            {"initial_temperature", pc.sa.initial_temperature},
            {"final_temperature", pc.sa.final_temperature},
            {"cooling", pc.sa.cooling}}}};
}

PipelineConfig pipeline_from_json(const json& j) {
  reject_unknown(j, {"forward_passes", "init_noise", "stop_after", "use_sa", "heuristic", "csp", "sa"},
                 "pipeline");
  PipelineConfig pc;
  pc.inference.forward_passes = take(j, "forward_passes", pc.inference.forward_passes);
  pc.inference.init_noise = take(j, "init_noise", pc.inference.init_noise);
  if (j.contains("stop_after")) pc.stop_after = stage_from(j.at("stop_after").get<std::string>());
  pc.use_sa = take(j, "use_sa", pc.use_sa);
  if (j.contains("heuristic")) {
    const auto& h = j.at("heuristic");
    reject_unknown(h, {"resort", "never_worse_than_argmax"}, "pipeline.heuristic");
    if (h.contains("resort")) pc.heuristic.resort = resort_from(h.at("resort").get<std::string>());
    pc.heuristic.never_worse_than_argmax =
        take(h, "never_worse_than_argmax", pc.heuristic.never_worse_than_argmax);
  }
  if (j.contains("csp")) {
    const auto& c = j.at("csp");
    reject_unknown(c, {"time_budget_s", "objective", "balance_term", "balance_weight", "optimize", "node_limit"},
                   "pipeline.csp");
    pc.csp.time_budget_s = take(c, "time_budget_s", pc.csp.time_budget_s);
    if (c.contains("objective")) pc.csp.objective = objective_from(c.at("objective").get<std::string>());
    pc.csp.balance_term = take(c, "balance_term", pc.csp.balance_term);
    pc.csp.balance_weight = take(c, "balance_weight", pc.csp.balance_weight);
    pc.csp.optimize = take(c, "optimize", pc.csp.optimize);
    pc.csp.node_limit = take(c, "node_limit", pc.csp.node_limit);
  }
  if (j.contains("sa")) {
    const auto& s = j.at("sa");
    reject_unknown(s, {"iterations", "proposal", "initial_temperature", "final_temperature", "cooling"},
                   "pipeline.sa");
    pc.sa.iterations = take(s, "iterations", pc.sa.iterations);
    if (s.contains("proposal")) pc.sa.proposal = sa_proposal_from_name(s.at("proposal").get<std::string>());
    pc.sa.initial_temperature = take(s, "initial_temperature", pc.sa.initial_temperature);
    pc.sa.final_temperature = take(s, "final_temperature", pc.sa.final_temperature);
    pc.sa.cooling = take(s, "cooling", pc.sa.cooling);
  }
  return pc;
}

// ---- small helpers -----------------------------------------------------------

std::string fmt(double x) {
  std::ostringstream ss;
  ss.precision(12);
  ss << x;
  return ss.str();
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct InstanceSet {
  std::vector<std::string> ids;
  std::vector<ConflictGraph> graphs;
};

InstanceSet load_instances(const RunConfig& cfg) {
  InstanceSet set;
  if (!cfg.instances.empty()) {
    for (const auto& path : cfg.instances) {
      ConflictGraph g = load_instance(path, cfg.k);
      if (g.k() != cfg.k) g = g.with_k(cfg.k);
      set.ids.push_back(fs::path(path).stem().string());
      set.graphs.push_back(std::move(g));
    }
    return set;
  }
  if (!fs::exists(fs::path(cfg.corpus_dir) / "manifest.json"))
    throw IoError("no corpus manifest at " + (fs::path(cfg.corpus_dir) / "manifest.json").string());
  auto corpus = load_corpus(cfg.corpus_dir);
  set.ids = std::move(corpus.ids);
  for (auto& g : corpus.graphs) set.graphs.push_back(g.k() == cfg.k ? std::move(g) : g.with_k(cfg.k));
  return set;
}

void write_run_config(const RunConfig& cfg) {
  write_file_atomic(fs::path(cfg.out_dir) / ("run_config." + cfg.command + ".json"),
                    cfg.to_json().dump(2) + "\n");
}

std::string loss_fingerprint(const RunConfig& cfg) {
  std::string fp = cfg.loss.fingerprint();
  for (const auto& p : cfg.training)
    fp += ";phase=" + std::string(stage_name(p.stage)) + "/" + std::string(scheme_name(p.scheme)) +
          "/" + std::to_string(p.epochs) + "/" + std::to_string(p.max_nodes) + (p.normalize_by_edges ? "/norm" : "");
  return fp;
}

}  // namespace

// ---- RunConfig -----------------------------------------------------------------

RunConfig::RunConfig() {
  loss.weights = {{LossTerm::Pairwise, 1.0}, {LossTerm::BalanceJs, 1.0}};
  // Size curriculum: dense corpus graphs give no usable signal to an untrained
  // model, so the joint phase sees only the smaller graphs; the fine-tune phase
  // then runs on everything at a reduced step size.
  training = {TrainPhase{TrainStage::JointInit, TrainScheme::DynamicWeighting, 100, 1e-3, {}, 60, false},
              TrainPhase{TrainStage::FineTune, TrainScheme::DynamicWeighting, 400, 1e-4, {}, 0, false}};
}

json RunConfig::to_json() const {
  ordered j;
  j["command"] = command;
  j["corpus_dir"] = corpus_dir;
  j["instances"] = instances;
  j["checkpoint"] = checkpoint;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  j["k"] = k;
  j["jobs"] = jobs;
  j["corpus"] = {{"count", corpus.count},
                 {"n_min", corpus.n_min},
                 {"n_max", corpus.n_max},
                 {"density", corpus.density},
                 {"uncolorable", corpus.uncolorable}};
  j["arch"] = {{"d_embed", arch.d_embed},
               {"attention_hidden", arch.attention_hidden},
               {"update_hidden", arch.update_hidden}};
  j["loss"] = loss_to_json(loss);
  ordered phases = ordered::array();
  for (const auto& p : training) phases.push_back(phase_to_json(p));
  j["training"] = phases;
  j["resume"] = resume;
  j["checkpoint_every"] = checkpoint_every;
  j["pipeline"] = pipeline_to_json(pipeline);
  j["variants"] = variants;
  ordered ms = ordered::array();
  for (const auto& m : models) ms.push_back({{"name", m.name}, {"checkpoint", m.checkpoint}});
  j["models"] = ms;
  j["pass_sweep"] = pass_sweep;
  j["write_timings"] = write_timings;
  j["verify_count"] = verify_count;
  j["verify_max_nodes"] = verify_max_nodes;
  return json::parse(j.dump());
}

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"command", "corpus_dir", "instances", "checkpoint", "out_dir", "seed", "k", "jobs",
                  "corpus", "arch", "loss", "training", "resume", "checkpoint_every", "pipeline",
                  "variants", "models", "pass_sweep", "write_timings", "verify_count",
                  "verify_max_nodes"},
                 "run config");
  RunConfig c;
  c.command = take(j, "command", c.command);
  c.corpus_dir = take(j, "corpus_dir", c.corpus_dir);
  c.instances = take(j, "instances", c.instances);
  c.checkpoint = take(j, "checkpoint", c.checkpoint);
  c.out_dir = take(j, "out_dir", c.out_dir);
  c.seed = take(j, "seed", c.seed);
  c.k = take(j, "k", c.k);
  c.jobs = take(j, "jobs", c.jobs);
  if (j.contains("corpus")) {
    const auto& p = j.at("corpus");
    reject_unknown(p, {"count", "n_min", "n_max", "density", "uncolorable"}, "corpus");
    c.corpus.count = take(p, "count", c.corpus.count);
    c.corpus.n_min = take(p, "n_min", c.corpus.n_min);
    c.corpus.n_max = take(p, "n_max", c.corpus.n_max);
    c.corpus.density = take(p, "density", c.corpus.density);
    c.corpus.uncolorable = take(p, "uncolorable", c.corpus.uncolorable);
  }
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    reject_unknown(a, {"d_embed", "attention_hidden", "update_hidden"}, "arch");
    c.arch.d_embed = take(a, "d_embed", c.arch.d_embed);
    c.arch.attention_hidden = take(a, "attention_hidden", c.arch.attention_hidden);
    c.arch.update_hidden = take(a, "update_hidden", c.arch.update_hidden);
  }
  if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"));
  if (j.contains("training")) {
    c.training.clear();
    for (const auto& p : j.at("training")) c.training.push_back(phase_from_json(p));
  }
  c.resume = take(j, "resume", c.resume);
  c.checkpoint_every = take(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("pipeline")) c.pipeline = pipeline_from_json(j.at("pipeline"));
  c.variants = take(j, "variants", c.variants);
  if (j.contains("models")) {
    for (const auto& m : j.at("models")) {
      reject_unknown(m, {"name", "checkpoint"}, "models entry");
      c.models.push_back({m.at("name").get<std::string>(), m.at("checkpoint").get<std::string>()});
    }
  }
  c.pass_sweep = take(j, "pass_sweep", c.pass_sweep);
  c.write_timings = take(j, "write_timings", c.write_timings);
  c.verify_count = take(j, "verify_count", c.verify_count);
  c.verify_max_nodes = take(j, "verify_max_nodes", c.verify_max_nodes);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  try {
    if (k < 1 || k > 64) throw ConfigError("k must be in [1, 64]");
    if (jobs < 0) throw ConfigError("jobs must be non-negative");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
    loss.validate();
    for (const auto& p : training) {
      if (p.epochs < 0) throw ConfigError("training phase epochs must be non-negative");
      if (p.max_nodes < 0) throw ConfigError("training phase max_nodes must be non-negative");
      TrainConfig tc;
      tc.stage = p.stage;
      tc.scheme = p.scheme;
      tc.lr = p.lr;
      tc.lr_balance = p.lr_balance;
      tc.forward_passes = pipeline.inference.forward_passes;
      tc.init_noise = pipeline.inference.init_noise;
      tc.validate();
    }
    pipeline.sa.validate();
    if (pipeline.inference.forward_passes < 1) throw ConfigError("passes must be >= 1");
    if (!(pipeline.csp.time_budget_s > 0.0)) throw ConfigError("CSP time budget must be positive");
    for (const auto& v : variants) {
      const auto& names = bench_variant_names();
      if (std::find(names.begin(), names.end(), v) == names.end()) {
        std::string list;
        for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
        throw ConfigError("unknown variant '" + v + "'; valid variants: " + list);
      }
    }
    for (int p : pass_sweep)
      if (p < 1) throw ConfigError("pass sweep entries must be >= 1");
    if (verify_max_nodes < 1 || verify_max_nodes > 12)
      throw ConfigError("verify_max_nodes must be in [1, 12]");
  } catch (const InvalidParameter& ex) {
    throw ConfigError(ex.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ConfigError("cannot parse " + path.string() + ": " + ex.what());
  }
  return RunConfig::from_json(j);
}

// ---- seeds and workers ---------------------------------------------------------

std::uint64_t model_init_seed(std::uint64_t global) { return derive_seed(global, "model"); }
std::uint64_t training_seed(std::uint64_t global) { return derive_seed(global, "train"); }

PipelineConfig pipeline_for_instance(const RunConfig& cfg, std::size_t index) {
  PipelineConfig pc = cfg.pipeline;
  pc.inference.init_seed = derive_seed(cfg.seed, "inference", index);
  pc.sa.seed = derive_seed(cfg.seed, "anneal", index);
  return pc;
}

int effective_jobs(int requested) {
  int jobs = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("MP_ENGINE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end != cap && *end == '\0' && v > 0) jobs = std::min<long>(jobs, v);
  }
  return std::max(jobs, 1);
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---- reports -------------------------------------------------------------------

std::vector<BenchAggregate> aggregate_rows(const std::vector<BenchRow>& rows) {
  std::vector<BenchAggregate> out;
  std::vector<std::vector<int>> spreads;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const BenchAggregate& a) {
      return a.model == r.model && a.variant == r.variant;
    });
    if (it == out.end()) {
      out.push_back({r.model, r.variant});
      spreads.emplace_back();
      it = out.end() - 1;
    }
    ++it->instances;
    if (r.conflicts == 0) ++it->solved;
    spreads[static_cast<std::size_t>(it - out.begin())].push_back(r.max_spread);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& a = out[i];
    const auto& s = spreads[i];
    a.solve_rate = 100.0 * a.solved / a.instances;
    double sum = 0.0;
    for (int x : s) sum += x;
    a.mean_spread = sum / static_cast<double>(s.size());
    double sq = 0.0;
    for (int x : s) sq += (x - a.mean_spread) * (x - a.mean_spread);
    a.std_spread = std::sqrt(sq / static_cast<double>(s.size()));
  }
  return out;
}

std::string BenchReport::rows_csv(bool include_times) const {
  std::ostringstream ss;
  ss << "model,variant,graph,nodes,edges,stage,conflicts,max_spread,squared_deviation";
  if (include_times) ss << ",wall_ms";
  ss << "\n";
  for (const auto& r : rows) {
    ss << r.model << "," << r.variant << "," << r.graph << "," << r.nodes << "," << r.edges << ","
       << r.stage << "," << r.conflicts << "," << r.max_spread << "," << fmt(r.squared_deviation);
    if (include_times) ss << "," << fmt(r.wall_ms);
    ss << "\n";
  }
  return ss.str();
}

std::string BenchReport::summary_csv() const {
  std::ostringstream ss;
  ss << "model,variant,instances,solved,solve_pct,avg_error,std_error\n";
  for (const auto& a : aggregates)
    ss << a.model << "," << a.variant << "," << a.instances << "," << a.solved << ","
       << fmt(a.solve_rate) << "," << fmt(a.mean_spread) << "," << fmt(a.std_spread) << "\n";
  return ss.str();
}

std::string BenchReport::sweep_csv() const {
  std::ostringstream ss;
  ss << "model,passes,solve_pct_inference,solve_pct_heuristic\n";
  for (const auto& s : sweep)
    ss << s.model << "," << s.passes << "," << fmt(s.solve_inference) << ","
       << fmt(s.solve_heuristic) << "\n";
  return ss.str();
}

std::string BenchReport::sweep_dat() const {
  std::ostringstream ss;
  std::string current;
  for (const auto& s : sweep) {
    if (s.model != current) {
      if (!current.empty()) ss << "\n\n";
      ss << "# model " << s.model << "\n# passes solve_pct_inference solve_pct_heuristic\n";
      current = s.model;
    }
    ss << s.passes << " " << fmt(s.solve_inference) << " " << fmt(s.solve_heuristic) << "\n";
  }
  return ss.str();
}

json BenchReport::to_json() const {
  ordered j;
  ordered aggs = ordered::array();
  for (const auto& a : aggregates)
    aggs.push_back({{"model", a.model},
                    {"variant", a.variant},
                    {"instances", a.instances},
                    {"solved", a.solved},
                    {"solve_pct", a.solve_rate},
                    {"avg_error", a.mean_spread},
                    {"std_error", a.std_spread}});
  ordered rs = ordered::array();
  for (const auto& r : rows)
    rs.push_back({{"model", r.model},
                  {"variant", r.variant},
                  {"graph", r.graph},
                  {"nodes", r.nodes},
                  {"edges", r.edges},
                  {"stage", r.stage},
                  {"conflicts", r.conflicts},
                  {"max_spread", r.max_spread},
                  {"squared_deviation", r.squared_deviation}});
  ordered sw = ordered::array();
  for (const auto& s : sweep)
    sw.push_back({{"model", s.model},
                  {"passes", s.passes},
                  {"solve_pct_inference", s.solve_inference},
                  {"solve_pct_heuristic", s.solve_heuristic}});
  j["format"] = "mpgnn-bench/1";
  j["aggregates"] = aggs;
  j["rows"] = rs;
  j["pass_sweep"] = sw;
  return json::parse(j.dump());
}

json VerifySummary::to_json() const {
  return {{"instances", instances},
          {"csp_mismatches", csp_mismatches},
          {"lower_bound_violations", lower_bound_violations},
          {"sa_violations", sa_violations},
          {"ok", ok()}};
}

// ---- bench ---------------------------------------------------------------------

namespace {

struct GraphBench {
  std::vector<BenchRow> rows;             // variant rows for this graph (models x variants)
  std::vector<std::vector<char>> solved;  // [model][sweep idx * 2 + {inference, heuristic}]
};

BenchRow make_row(const std::string& model, const std::string& variant, const std::string& id,
                  const ConflictGraph& g, const Coloring& c, std::string stage, double ms) {
  const auto b = balance_stats(g, c);
  return {model, variant, id, g.node_count(), g.edge_count(), std::move(stage),
          conflict_count(g, c), b.max_spread, b.squared_deviation, ms};
}

bool wanted(const std::vector<std::string>& variants, const std::string& v) {
  return variants.empty() || std::find(variants.begin(), variants.end(), v) != variants.end();
}

}  // namespace

BenchReport run_bench(const RunConfig& cfg, const std::vector<std::string>& ids,
                      const std::vector<ConflictGraph>& graphs,
                      const std::vector<NamedModel>& models) {
  cfg.validate();
  std::vector<GraphBench> per_graph(graphs.size());

  parallel_for(graphs.size(), effective_jobs(cfg.jobs), [&](std::size_t i) {
    const auto& g = graphs[i];
    const auto& id = ids[i];
    auto& out = per_graph[i];
    const PipelineConfig base = pipeline_for_instance(cfg, i);

    for (const auto& nm : models) {
      PipelineConfig pc = base;
      pc.use_sa = false;
      pc.stop_after = PipelineStage::Csp;
      const auto res = full_pipeline(g, nm.model, pc);
      const auto& rep = res.report;
      const double t_inf = rep.times.inference_ms;
      const double t_heu = t_inf + rep.times.heuristic_ms;
      const double t_full = t_heu + rep.times.csp_ms;
      const std::string heu_stage =
          rep.conflicts_inference == 0 ? "inference" : "heuristic";

      auto with_sa = [&](const Coloring& c, double& ms) {
        if (conflict_count(g, c) != 0) return c;
        const auto t0 = Clock::now();
        Coloring balanced = sa_balance(g, c, base.sa);
        ms += ms_since(t0);
        return balanced;
      };

      if (wanted(cfg.variants, "gnn"))
        out.rows.push_back(make_row(nm.name, "gnn", id, g, res.inference, "inference", t_inf));
      if (wanted(cfg.variants, "gnn+sa")) {
        double ms = t_inf;
        const Coloring c = with_sa(res.inference, ms);
        out.rows.push_back(make_row(nm.name, "gnn+sa", id, g, c, "inference", ms));
      }
      if (wanted(cfg.variants, "gnn+heuristic"))
        out.rows.push_back(make_row(nm.name, "gnn+heuristic", id, g, res.heuristic, heu_stage, t_heu));
      if (wanted(cfg.variants, "gnn+heuristic+sa")) {
        double ms = t_heu;
        const Coloring c = with_sa(res.heuristic, ms);
        out.rows.push_back(make_row(nm.name, "gnn+heuristic+sa", id, g, c, heu_stage, ms));
      }
      const std::string full_stage(pipeline_stage_name(rep.stage));
      if (wanted(cfg.variants, "full"))
        out.rows.push_back(make_row(nm.name, "full", id, g, res.coloring, full_stage, t_full));
      if (wanted(cfg.variants, "full+sa")) {
        double ms = t_full;
        const Coloring c = with_sa(res.coloring, ms);
        out.rows.push_back(make_row(nm.name, "full+sa", id, g, c, full_stage, ms));
      }

      std::vector<char> solved;
      for (int passes : cfg.pass_sweep) {
        PipelineConfig sp = base;
        sp.inference.forward_passes = passes;
        sp.stop_after = PipelineStage::Heuristic;
        sp.use_sa = false;
        const auto r = full_pipeline(g, nm.model, sp);
        solved.push_back(r.report.conflicts_inference == 0);
        solved.push_back(r.report.conflicts_final == 0);
      }
      out.solved.push_back(std::move(solved));
    }

    for (const std::string name : {"dsatur", "welsh_powell"}) {
      if (!wanted(cfg.variants, name)) continue;
      const auto t0 = Clock::now();
      const auto r = name == "dsatur" ? dsatur(g, g.k()) : welsh_powell(g, g.k());
      out.rows.push_back(make_row("baseline", name, id, g, r.coloring, "-", ms_since(t0)));
    }
  });

  BenchReport report;
  // rows grouped by (model, variant), graphs in corpus order
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& gb : per_graph)
    for (const auto& r : gb.rows)
      if (std::find(keys.begin(), keys.end(), std::make_pair(r.model, r.variant)) == keys.end())
        keys.emplace_back(r.model, r.variant);
  for (const auto& key : keys)
    for (const auto& gb : per_graph)
      for (const auto& r : gb.rows)
        if (r.model == key.first && r.variant == key.second) report.rows.push_back(r);
  report.aggregates = aggregate_rows(report.rows);

  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t s = 0; s < cfg.pass_sweep.size(); ++s) {
      int inf = 0;
      int heu = 0;
      for (const auto& gb : per_graph) {
        inf += gb.solved[m][2 * s];
        heu += gb.solved[m][2 * s + 1];
      }
      const double n = static_cast<double>(std::max<std::size_t>(graphs.size(), 1));
      report.sweep.push_back({models[m].name, cfg.pass_sweep[s], 100.0 * inf / n, 100.0 * heu / n});
    }
  }
  return report;
}

// ---- verify --------------------------------------------------------------------

VerifySummary run_verify(const RunConfig& cfg, const GnnModel* model) {
  cfg.validate();
  VerifySummary sum;
  sum.instances = cfg.verify_count;
  std::vector<VerifySummary> parts(static_cast<std::size_t>(cfg.verify_count));
  parallel_for(parts.size(), effective_jobs(cfg.jobs), [&](std::size_t i) {
    auto& part = parts[i];
    Rng rng(derive_seed(cfg.seed, "verify", i));
    const int n = static_cast<int>(rng.range(1, cfg.verify_max_nodes));
    const double density = rng.uniform01();
    std::vector<Edge> edges;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng.bernoulli(density)) edges.push_back({u, v});
    const ConflictGraph g(n, cfg.k, std::move(edges));

    const auto oracle = brute_force(g, cfg.k, BruteForceMode::MinConflicts);
    const bool colorable = oracle.min_conflicts == 0;

    Coloring start;
    start.colors.assign(static_cast<std::size_t>(n), 0);
    CspConfig cc = cfg.pipeline.csp;
    const auto csp = csp_repair(g, start, cc);
    const bool csp_ok = csp.status == CspStatus::Feasible
                            ? colorable && conflict_count(g, *csp.coloring) == 0
                            : csp.status == CspStatus::Infeasible && !colorable;
    if (!csp_ok) ++part.csp_mismatches;

    auto check_bound = [&](const Coloring& c) {
      if (conflict_count(g, c) < oracle.min_conflicts) ++part.lower_bound_violations;
    };
    check_bound(dsatur(g, cfg.k).coloring);
    check_bound(welsh_powell(g, cfg.k).coloring);
    check_bound(gnn_heuristic_refine(g, SoftAssignment::uniform(n, cfg.k)));
    if (model && model->k() == cfg.k) check_bound(full_pipeline(g, *model, pipeline_for_instance(cfg, i)).coloring);

    if (colorable) {
      const Coloring proper = *brute_force(g, cfg.k, BruteForceMode::Feasibility).coloring;
      SaConfig sc = cfg.pipeline.sa;
      sc.seed = derive_seed(cfg.seed, "verify-anneal", i);
      const Coloring out = sa_balance(g, proper, sc);
      if (conflict_count(g, out) != 0 ||
          balance_stats(g, out).max_spread > balance_stats(g, proper).max_spread)
        ++part.sa_violations;
    }
  });
  for (const auto& p : parts) {
    sum.csp_mismatches += p.csp_mismatches;
    sum.lower_bound_violations += p.lower_bound_violations;
    sum.sa_violations += p.sa_violations;
  }
  return sum;
}

// ---- commands ------------------------------------------------------------------

GnnModel load_model(const fs::path& checkpoint, int k) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
  json j;
  try {
    j = json::parse(read_file(checkpoint));
  } catch (const json::exception& ex) {
    throw ConfigError("cannot parse checkpoint " + checkpoint.string() + ": " + ex.what());
  }
  try {
    GnnModel m = model_from_checkpoint(j);
    if (m.k() != k)
      throw ConfigError("checkpoint " + checkpoint.string() + " was trained for k=" +
                        std::to_string(m.k()) + ", run uses k=" + std::to_string(k));
    return m;
  } catch (const ContractViolation& ex) {
    throw ConfigError(checkpoint.string() + ": " + ex.what());
  }
}

int cmd_generate(const RunConfig& cfg) {
  CorpusParams p = cfg.corpus;
  p.seed = cfg.seed;
  p.k = cfg.k;
  const auto manifest = write_corpus(cfg.out_dir, p);
  write_run_config(cfg);
  std::cerr << "wrote " << manifest.instances.size() << " instances to " << cfg.out_dir << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  const InstanceSet set = load_instances(cfg);
  GnnArch arch = cfg.arch;
  arch.k = cfg.k;

  const fs::path ckpt_path = fs::path(cfg.out_dir) / "checkpoint.json";
  const fs::path history_path = fs::path(cfg.out_dir) / "history.csv";
  GnnModel model(arch, model_init_seed(cfg.seed));
  std::optional<TrainingState> state;
  std::size_t phase = 0;
  int phase_done = 0;
  std::vector<EpochRecord> history;
  std::string previous_history;

  if (cfg.resume && fs::exists(ckpt_path)) {
    const json j = json::parse(read_file(ckpt_path));
    try {
      model = model_from_checkpoint(j, arch);
    } catch (const ContractViolation& ex) {
      throw ConfigError(ckpt_path.string() + ": " + ex.what());
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      phase = t.at("phase").get<std::size_t>();
      phase_done = t.at("phase_epochs_done").get<int>();
      state = TrainingState::from_json(t.at("state"), model.params(), cfg.loss.beta);
    }
    if (fs::exists(history_path)) previous_history = read_file(history_path);
  }

  auto save = [&](const TrainingState& st, std::size_t ph, int done) {
    json training = {{"phase", ph}, {"phase_epochs_done", done}, {"state", st.to_json()}};
    write_file_atomic(ckpt_path, checkpoint_to_json(model, loss_fingerprint(cfg), training).dump() + "\n");
    std::string csv = history_to_csv(history, cfg.loss);
    if (!previous_history.empty()) csv = previous_history + csv.substr(csv.find('\n') + 1);
    write_file_atomic(history_path, csv);
  };

  for (; phase < cfg.training.size(); ++phase, phase_done = 0) {
    const auto& p = cfg.training[phase];
    TrainConfig tc;
    tc.stage = p.stage;
    tc.scheme = p.scheme;
    tc.lr = p.lr;
    tc.lr_balance = p.lr_balance;
    tc.seed = training_seed(cfg.seed);
    tc.forward_passes = cfg.pipeline.inference.forward_passes;
    tc.init_noise = cfg.pipeline.inference.init_noise;
    tc.normalize_by_edges = p.normalize_by_edges;
    std::vector<ConflictGraph> subset;
    if (p.max_nodes > 0) {
      for (const auto& g : set.graphs)
        if (g.node_count() <= p.max_nodes) subset.push_back(g);
      if (subset.empty())
        throw ConfigError("no corpus graph has at most " + std::to_string(p.max_nodes) + " nodes");
    }
    const std::vector<ConflictGraph>& graphs = p.max_nodes > 0 ? subset : set.graphs;
    int remaining = p.epochs - phase_done;
    while (remaining > 0) {
      const int chunk = cfg.checkpoint_every > 0 ? std::min(remaining, cfg.checkpoint_every) : remaining;
      tc.epochs = chunk;
      auto result = train(model, graphs, cfg.loss, tc, state, [&](const EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " " << stage_name(p.stage) << " l1=" << r.l1
                  << " l2=" << r.l2 << " beta=" << r.beta << "\n";
      });
      history.insert(history.end(), result.history.begin(), result.history.end());
      state = std::move(result.state);
      remaining -= chunk;
      phase_done += chunk;
      save(*state, phase, phase_done);
    }
  }
  if (!state) save(TrainingState{0, BetaController(cfg.loss.beta), {}, {}}, cfg.training.size(), 0);
  write_run_config(cfg);
  return kExitOk;
}

int cmd_solve(const RunConfig& cfg) {
  const GnnModel model = load_model(cfg.checkpoint, cfg.k);
  const InstanceSet set = load_instances(cfg);
  std::vector<PipelineResult> results(set.graphs.size());
  parallel_for(set.graphs.size(), effective_jobs(cfg.jobs), [&](std::size_t i) {
    results[i] = full_pipeline(set.graphs[i], model, pipeline_for_instance(cfg, i));
  });

  const fs::path out(cfg.out_dir);
  ordered summary_rows = ordered::array();
  std::ostringstream timings;
  timings << "graph,inference_ms,heuristic_ms,csp_ms,sa_ms\n";
  int solved = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& id = set.ids[i];
    const auto& r = results[i];
    write_file_atomic(out / "colorings" / (id + ".coloring"), export_coloring(r.coloring));
    write_file_atomic(out / "reports" / (id + ".json"), r.report.to_json(false).dump(2) + "\n");
    solved += r.report.conflicts_final == 0;
    summary_rows.push_back({{"graph", id},
                            {"stage", std::string(pipeline_stage_name(r.report.stage))},
                            {"conflicts", r.report.conflicts_final},
                            {"max_spread", r.report.balance_after_sa.max_spread},
                            {"uncolorable", r.report.uncolorable}});
    const auto& t = r.report.times;
    timings << id << "," << fmt(t.inference_ms) << "," << fmt(t.heuristic_ms) << "," << fmt(t.csp_ms)
            << "," << fmt(t.sa_ms) << "\n";
  }
  ordered summary;
  summary["instances"] = results.size();
  summary["solved"] = solved;
  summary["solve_pct"] = results.empty() ? 0.0 : 100.0 * solved / static_cast<double>(results.size());
  summary["graphs"] = summary_rows;
  write_file_atomic(out / "solve_summary.json", summary.dump(2) + "\n");
  if (cfg.write_timings) write_file_atomic(out / "solve_timings.csv", timings.str());
  write_run_config(cfg);
  std::cerr << "solved " << solved << "/" << results.size() << "\n";
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg) {
  cfg.validate();
  const InstanceSet set = load_instances(cfg);
  std::vector<NamedModel> models;
  if (cfg.models.empty()) {
    models.push_back({"gnn", load_model(cfg.checkpoint, cfg.k)});
  } else {
    for (const auto& m : cfg.models) models.push_back({m.name, load_model(m.checkpoint, cfg.k)});
  }
  const BenchReport report = run_bench(cfg, set.ids, set.graphs, models);
  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "bench_rows.csv", report.rows_csv(false));
  write_file_atomic(out / "bench_summary.csv", report.summary_csv());
  write_file_atomic(out / "pass_sweep.csv", report.sweep_csv());
  write_file_atomic(out / "pass_sweep.dat", report.sweep_dat());
  write_file_atomic(out / "bench.json", report.to_json().dump(2) + "\n");
  if (cfg.write_timings) write_file_atomic(out / "bench_timings.csv", report.rows_csv(true));
  write_run_config(cfg);
  std::cerr << report.summary_csv();
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg) {
  std::optional<GnnModel> model;
  if (!cfg.checkpoint.empty() && fs::exists(cfg.checkpoint)) model = load_model(cfg.checkpoint, cfg.k);
  const VerifySummary s = run_verify(cfg, model ? &*model : nullptr);
  write_file_atomic(fs::path(cfg.out_dir) / "verify.json", s.to_json().dump(2) + "\n");
  write_run_config(cfg);
  std::cerr << s.to_json().dump() << "\n";
  return s.ok() ? kExitOk : kExitFailure;
}

int run_command(const RunConfig& cfg) {
  try {
    cfg.validate();
    if (cfg.command == "generate") return cmd_generate(cfg);
    if (cfg.command == "train") return cmd_train(cfg);
    if (cfg.command == "solve") return cmd_solve(cfg);
    if (cfg.command == "bench") return cmd_bench(cfg);
    if (cfg.command == "verify") return cmd_verify(cfg);
    throw ConfigError("unknown command '" + cfg.command + "' (generate, train, solve, bench, verify)");
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const InvalidParameter& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const IoError& ex) {
    std::cerr << "i/o error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const ParseError& ex) {
    std::cerr << "i/o error: line " << ex.line() << ": " << ex.what() << "\n";
    return kExitIo;
  } catch (const TrainingDivergence& ex) {
    std::cerr << "training diverged at epoch " << ex.epoch() << ": " << ex.what() << "\n";
    return kExitDivergence;
  } catch (const fs::filesystem_error& ex) {
    std::cerr << "i/o error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace mpgnn
