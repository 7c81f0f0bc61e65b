#pragma once

#include <optional>
#include <string_view>

#include "mpgnn/graph.hpp"

namespace mpgnn {

struct BaselineResult {
  Coloring coloring;         // k-limited coloring (clamped)
  int colors_used = 0;       // colors the unbounded algorithm needed
  std::size_t conflicts_at_k = 0;
  BalanceStats balance;
};

// Saturation-degree-first greedy (ties: higher degree, then lower index).
BaselineResult dsatur(const ConflictGraph& g, int k);

// Degree-descending color-class construction (ties: lower index).
BaselineResult welsh_powell(const ConflictGraph& g, int k);

inline constexpr int kBruteForceMaxNodes = 16;

enum class BruteForceMode { Feasibility, MinConflicts, BestBalanced };

struct BruteForceResult {
  bool colorable = false;
  std::size_t min_conflicts = 0;       // set in MinConflicts mode
  std::optional<Coloring> coloring;    // witness / optimum, when one exists
};

// Exhaustive k^n enumeration with anchors honored. Throws InvalidParameter when
// node_count exceeds kBruteForceMaxNodes.
BruteForceResult brute_force(const ConflictGraph& g, int k, BruteForceMode mode);

std::string_view brute_force_mode_name(BruteForceMode m);

}  // namespace mpgnn
