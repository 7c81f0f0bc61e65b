#include <algorithm>
#include <chrono>

#include "mpgnn/errors.hpp"
#include "mpgnn/refinement.hpp"

namespace mpgnn {

std::string_view pipeline_stage_name(PipelineStage s) {
  switch (s) {
    case PipelineStage::Inference: return "inference";
    case PipelineStage::Heuristic: return "heuristic";
    case PipelineStage::Csp: return "csp";
  }
  return "?";
}

nlohmann::json balance_to_json(const BalanceStats& s) {
  return {{"counts", s.counts},
          {"max_spread", s.max_spread},
          {"squared_deviation", s.squared_deviation}};
}

nlohmann::json StageReport::to_json(bool include_times) const {
  nlohmann::json conflicts = {{"inference", conflicts_inference}, {"final", conflicts_final}};
  conflicts["heuristic"] = conflicts_heuristic ? nlohmann::json(*conflicts_heuristic) : nlohmann::json(nullptr);
  conflicts["csp"] = conflicts_csp ? nlohmann::json(*conflicts_csp) : nlohmann::json(nullptr);
  nlohmann::json j = {
      {"stage", std::string(pipeline_stage_name(stage))},
      {"conflicts", std::move(conflicts)},
      {"csp_status", csp_status ? nlohmann::json(std::string(csp_status_name(*csp_status))) : nlohmann::json(nullptr)},
      {"csp_nodes_changed", csp_nodes_changed},
      {"uncolorable", uncolorable},
      {"sa_applied", sa_applied},
      {"balance", {{"before_sa", balance_to_json(balance_before_sa)},
                   {"after_sa", balance_to_json(balance_after_sa)}}},
  };
  if (include_times)
    j["wall_ms"] = {{"inference", times.inference_ms},
                    {"heuristic", times.heuristic_ms},
                    {"csp", times.csp_ms},
                    {"sa", times.sa_ms}};
  return j;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Steepest single-node descent on the conflict count; used for the best-effort
// answer when the search could not produce a proper coloring.
std::size_t min_conflict_descent(const ConflictGraph& g, Coloring& c) {
  const int k = g.k();
  std::vector<int> clash(static_cast<std::size_t>(k));
  bool improved = true;
  while (improved) {
    improved = false;
    for (int v = 0; v < g.node_count(); ++v) {
      if (g.anchor(v)) continue;
      std::fill(clash.begin(), clash.end(), 0);
      for (int u : g.neighbors(v)) ++clash[static_cast<std::size_t>(c[u])];
      int best = c[v];
      for (int col = 0; col < k; ++col)
        if (clash[static_cast<std::size_t>(col)] < clash[static_cast<std::size_t>(best)]) best = col;
      if (best != c[v]) {
        c.colors[static_cast<std::size_t>(v)] = best;
        improved = true;
      }
    }
  }
  return conflict_count(g, c);
}

}  // namespace

PipelineResult full_pipeline(const ConflictGraph& g, const GnnModel& model,
                             const PipelineConfig& cfg) {
  PipelineResult out;
  auto& rep = out.report;

  auto t0 = Clock::now();
  const SoftAssignment probs = iterative_inference(model, g, cfg.inference);
  out.inference = harden(probs);
  rep.times.inference_ms = ms_since(t0);
  rep.conflicts_inference = conflict_count(g, out.inference);
  rep.stage = PipelineStage::Inference;

  out.heuristic = out.inference;
  Coloring current = out.inference;
  std::size_t conflicts = rep.conflicts_inference;

  if (conflicts > 0 && cfg.stop_after != PipelineStage::Inference) {
    t0 = Clock::now();
    out.heuristic = gnn_heuristic_refine(g, probs, cfg.heuristic);
    rep.times.heuristic_ms = ms_since(t0);
    rep.conflicts_heuristic = conflict_count(g, out.heuristic);
    if (*rep.conflicts_heuristic <= conflicts) {
      current = out.heuristic;
      conflicts = *rep.conflicts_heuristic;
      rep.stage = PipelineStage::Heuristic;
    }
  }

  if (conflicts > 0 && cfg.stop_after == PipelineStage::Csp) {
    t0 = Clock::now();
    const CspResult csp = csp_repair(g, current, cfg.csp, &probs);
    rep.times.csp_ms = ms_since(t0);
    rep.csp_status = csp.status;
    if (csp.status == CspStatus::Feasible) {
      current = *csp.coloring;
      conflicts = 0;
      rep.conflicts_csp = 0;
      rep.csp_nodes_changed = csp.nodes_changed;
      rep.stage = PipelineStage::Csp;
    } else {
      rep.uncolorable = csp.status == CspStatus::Infeasible;
      conflicts = min_conflict_descent(g, current);
    }
  }

  rep.balance_before_sa = balance_stats(g, current);
  out.heuristic_balanced = out.heuristic;
  if (cfg.use_sa && conflicts == 0) {
    t0 = Clock::now();
    current = sa_balance(g, current, cfg.sa);
    rep.times.sa_ms = ms_since(t0);
    rep.sa_applied = true;
    if (rep.stage != PipelineStage::Csp) out.heuristic_balanced = current;
  }
  rep.balance_after_sa = balance_stats(g, current);
  rep.conflicts_final = conflicts;
  out.coloring = std::move(current);
  return out;
}

}  // namespace mpgnn
