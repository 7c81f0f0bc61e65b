#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpgnn/graph.hpp"

namespace mpgnn {

// Node-index sets that are cliques of the graph (triangles for the built-in enumeration).
struct CliqueSet {
  std::vector<std::vector<int>> cliques;

  std::size_t size() const noexcept { return cliques.size(); }
  bool empty() const noexcept { return cliques.empty(); }
};

// All triangles u < v < w, found by intersecting sorted neighbor lists.
CliqueSet enumerate_triangles(const ConflictGraph& g);
bool is_valid_clique_set(const ConflictGraph& g, const CliqueSet& cs);

// Every loss takes the soft assignment as an n x k matrix. When `grad` is given
// it is overwritten with dLoss/dP (same shape as P).

// sum over edges of p_u . p_v
double loss_pairwise(const ConflictGraph& g, const Matrix& p, Matrix* grad = nullptr);
// sum over cliques and colors of prod_{v in C} p_{v,c}
double loss_clique(const CliqueSet& cs, const Matrix& p, Matrix* grad = nullptr);
// sum over cliques and colors of |sum_{v in C} p_{v,c} - 1|
double loss_unique(const CliqueSet& cs, const Matrix& p, Matrix* grad = nullptr);
// Jensen-Shannon divergence between the mean color usage and uniform (natural log)
double loss_balance_js(const Matrix& p, Matrix* grad = nullptr);
// sum_c max(0, |sum_v p_{v,c} - N/K| - delta)^2
double loss_balance_harsh(const Matrix& p, double delta_loss, Matrix* grad = nullptr);
// mean per-node Shannon entropy
double loss_entropy(const Matrix& p, Matrix* grad = nullptr);
// mean over anchored nodes of -ln p_{v, anchor(v)}; 0 without anchors
double loss_anchor(const ConflictGraph& g, const Matrix& p, Matrix* grad = nullptr);

enum class LossTerm { Pairwise, Clique, Unique, BalanceJs, BalanceHarsh, Entropy, Anchor };

inline constexpr std::array<LossTerm, 7> kAllLossTerms = {
    LossTerm::Pairwise, LossTerm::Clique,  LossTerm::Unique, LossTerm::BalanceJs,
    LossTerm::BalanceHarsh, LossTerm::Entropy, LossTerm::Anchor};

// Coloring (L1) terms drive feasibility, Balance (L2) terms are scaled by beta,
// Auxiliary terms (entropy, anchor) are added at their fixed weight alongside L1.
enum class LossGroup { Coloring, Balance, Auxiliary };

LossGroup loss_group(LossTerm t);
std::string_view loss_name(LossTerm t);
std::optional<LossTerm> loss_from_name(std::string_view name);

struct BetaSettings {
  double initial = 1.0;
  double decay = 0.5;
  int patience = 3;
  double minimum = 1e-3;
  // relative slack: an epoch counts as a regression when L1 > best * (1 + tolerance)
  double tolerance = 0.0;
};

struct LossConfig {
  std::map<LossTerm, double> weights{{LossTerm::Pairwise, 1.0}};  // enabled terms
  double harsh_delta = 1.0;
  BetaSettings beta;

  bool enabled(LossTerm t) const { return weights.count(t) != 0; }
  bool needs_cliques() const { return enabled(LossTerm::Clique) || enabled(LossTerm::Unique); }
  // Throws InvalidParameter: no L1 term, negative weight, bad beta settings.
  void validate() const;
  std::string fingerprint() const;
};

struct LossBreakdown {
  std::map<LossTerm, double> terms;  // unweighted values of enabled terms
  double l1 = 0.0;                   // weighted coloring + auxiliary terms
  double l2 = 0.0;                   // weighted balance terms (before beta)
};

// Evaluates all enabled terms. grad_primary receives d(l1)/dP, grad_balance d(l2)/dP.
LossBreakdown evaluate_losses(const LossConfig& cfg, const ConflictGraph& g, const CliqueSet& cs,
                              const Matrix& p, Matrix* grad_primary = nullptr,
                              Matrix* grad_balance = nullptr);

}  // namespace mpgnn
