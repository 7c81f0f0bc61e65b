#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mpgnn/gnn.hpp"
#include "mpgnn/graph.hpp"

namespace mpgnn {

enum class ResortMode {
  OnShrink,        // re-rank after every assignment that shrinks a neighbor's safe set
  ListingLiteral,  // re-rank only after a fallback (non-argmax) assignment
};

struct HeuristicConfig {
  ResortMode resort = ResortMode::OnShrink;
  // Return the argmax decode instead when it has strictly fewer conflicts.
  bool never_worse_than_argmax = true;
};

// Most-constrained-first greedy decode of the GNN probabilities (ties: highest
// uncertainty 1 - max_c p, then lowest index). Each node takes its argmax color
// when no assigned neighbor uses it, else the most probable safe color, else
// the argmax (recording a conflict). Anchored nodes are assigned up front.
Coloring gnn_heuristic_refine(const ConflictGraph& g, const SoftAssignment& probs,
                              const HeuristicConfig& cfg = {});

enum class CspObjective {
  DeviationCount,      // sum_v [x_v != x0_v]
  AbsoluteDifference,  // sum_v |x_v - x0_v|, colors read as numbers
};

struct CspConfig {
  double time_budget_s = 10.0;
  CspObjective objective = CspObjective::DeviationCount;
  // adds weight * sum_c |n_c - N/K| to the objective
  bool balance_term = false;
  double balance_weight = 1.0;
  // keep searching for lower-cost solutions after the first feasible one
  bool optimize = true;
  std::uint64_t node_limit = 0;  // 0 = unlimited
};

enum class CspStatus { Feasible, Infeasible, Timeout };
std::string_view csp_status_name(CspStatus s);

struct CspResult {
  CspStatus status = CspStatus::Timeout;
  std::optional<Coloring> coloring;  // set iff feasible
  int nodes_changed = 0;             // deviations of coloring from the initial assignment
  bool optimal = false;              // search space exhausted for the reported objective
  std::uint64_t search_nodes = 0;
};

// Backtracking branch-and-bound over k colors with anchors fixed. Exhausting the
// search without a solution proves the instance is not k-colorable.
CspResult csp_repair(const ConflictGraph& g, const Coloring& initial, const CspConfig& cfg = {},
                     const SoftAssignment* probs = nullptr);

// How a step picks its (node, color) candidate. ConflictFree draws uniformly from
// the single-node recolorings that keep the coloring proper (and leave anchors
// alone); Uniform draws any node and any other color and rejects clashing moves,
// which on dense graphs wastes nearly every step.
enum class SaProposal { ConflictFree, Uniform };
std::string_view sa_proposal_name(SaProposal p);
SaProposal sa_proposal_from_name(std::string_view name);

struct SaConfig {
  int iterations = 0;  // 0 = node count
  SaProposal proposal = SaProposal::ConflictFree;
  double initial_temperature = 1.0;
  double final_temperature = 0.01;
  double cooling = 0.0;  // 0 = geometric factor reaching final_temperature at the cap
  std::uint64_t seed = 0;

  void validate() const;
};

// Conflict-preserving balancing. Throws ContractViolation when c has conflicts.
// Returns the best coloring visited, so max_spread never exceeds the input's.
Coloring sa_balance(const ConflictGraph& g, const Coloring& c, const SaConfig& cfg = {});

enum class PipelineStage { Inference, Heuristic, Csp };
std::string_view pipeline_stage_name(PipelineStage s);

struct PipelineConfig {
  InferenceConfig inference;
  HeuristicConfig heuristic;
  CspConfig csp;
  SaConfig sa;
  PipelineStage stop_after = PipelineStage::Csp;
  bool use_sa = true;
};

struct StageTimes {
  double inference_ms = 0.0;
  double heuristic_ms = 0.0;
  double csp_ms = 0.0;
  double sa_ms = 0.0;
};

struct StageReport {
  PipelineStage stage = PipelineStage::Inference;  // stage that produced the final coloring
  std::size_t conflicts_inference = 0;
  std::optional<std::size_t> conflicts_heuristic;
  std::optional<std::size_t> conflicts_csp;
  std::size_t conflicts_final = 0;
  std::optional<CspStatus> csp_status;
  int csp_nodes_changed = 0;
  bool uncolorable = false;
  bool sa_applied = false;
  BalanceStats balance_before_sa;
  BalanceStats balance_after_sa;
  StageTimes times;

  nlohmann::json to_json(bool include_times) const;
};

struct PipelineResult {
  Coloring coloring;
  Coloring inference;            // argmax decode of the GNN output
  Coloring heuristic;            // after Algorithm-1 style repair (== inference if not needed)
  Coloring heuristic_balanced;   // heuristic + SA when conflict-free, else heuristic
  StageReport report;
};

// inference -> harden -> (conflicts) heuristic repair -> (conflicts) CSP -> SA.
// An infeasible CSP verdict flags the instance uncolorable and keeps the
// lowest-conflict coloring seen.
PipelineResult full_pipeline(const ConflictGraph& g, const GnnModel& model,
                             const PipelineConfig& cfg);

nlohmann::json balance_to_json(const BalanceStats& s);

}  // namespace mpgnn
