#include "mpgnn/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "mpgnn/errors.hpp"

namespace mpgnn {

namespace {

// Lowest color in [0, k) unused by colored neighbors, else the least-clashing
// in-range color (ties: lowest index). Also reports the unbounded choice.
struct Pick {
  int unbounded;
  int clamped;
};

Pick pick_color(const ConflictGraph& g, const std::vector<int>& unbounded,
                const std::vector<int>& clamped, int v, int k) {
  std::vector<char> used(static_cast<std::size_t>(g.degree(v)) + 2, 0);
  std::vector<int> clash(static_cast<std::size_t>(k), 0);
  for (int u : g.neighbors(v)) {
    const int cu = unbounded[static_cast<std::size_t>(u)];
    if (cu >= 0 && cu < static_cast<int>(used.size())) used[static_cast<std::size_t>(cu)] = 1;
    const int ck = clamped[static_cast<std::size_t>(u)];
    if (ck >= 0) ++clash[static_cast<std::size_t>(ck)];
  }
  int first_free = 0;
  while (used[static_cast<std::size_t>(first_free)]) ++first_free;
  int best = 0;
  for (int c = 1; c < k; ++c)
    if (clash[static_cast<std::size_t>(c)] < clash[static_cast<std::size_t>(best)]) best = c;
  return {first_free, best};
}

BaselineResult finish(const ConflictGraph& g, const std::vector<int>& unbounded,
                      std::vector<int> clamped) {
  BaselineResult r;
  r.colors_used = unbounded.empty() ? 0 : *std::max_element(unbounded.begin(), unbounded.end()) + 1;
  r.coloring.colors = std::move(clamped);
  r.conflicts_at_k = conflict_count(g, r.coloring);
  r.balance = balance_stats(g, r.coloring);
  return r;
}

void check_k(const ConflictGraph& g, int k) {
  if (k < 1) throw InvalidParameter("k must be at least 1");
  if (k != g.k()) throw InvalidParameter("k does not match the graph's color count");
}

}  // namespace

BaselineResult dsatur(const ConflictGraph& g, int k) {
  check_k(g, k);
  const int n = g.node_count();
  std::vector<int> unbounded(static_cast<std::size_t>(n), -1);
  std::vector<int> clamped(static_cast<std::size_t>(n), -1);
  // distinct neighbor colors (unbounded run) per node
  std::vector<std::vector<char>> seen(static_cast<std::size_t>(n));
  std::vector<int> saturation(static_cast<std::size_t>(n), 0);

  for (int step = 0; step < n; ++step) {
    int v = -1;
    for (int u = 0; u < n; ++u) {
      if (unbounded[static_cast<std::size_t>(u)] >= 0) continue;
      if (v < 0) {
        v = u;
        continue;
      }
      const int su = saturation[static_cast<std::size_t>(u)];
      const int sv = saturation[static_cast<std::size_t>(v)];
      if (su > sv || (su == sv && g.degree(u) > g.degree(v))) v = u;
    }
    const Pick p = pick_color(g, unbounded, clamped, v, k);
    unbounded[static_cast<std::size_t>(v)] = p.unbounded;
    clamped[static_cast<std::size_t>(v)] = p.unbounded < k ? p.unbounded : p.clamped;
    for (int u : g.neighbors(v)) {
      auto& s = seen[static_cast<std::size_t>(u)];
      if (static_cast<int>(s.size()) <= p.unbounded) s.resize(static_cast<std::size_t>(p.unbounded) + 1, 0);
      if (!s[static_cast<std::size_t>(p.unbounded)]) {
        s[static_cast<std::size_t>(p.unbounded)] = 1;
        ++saturation[static_cast<std::size_t>(u)];
      }
    }
  }
  return finish(g, unbounded, std::move(clamped));
}

BaselineResult welsh_powell(const ConflictGraph& g, int k) {
  check_k(g, k);
  const int n = g.node_count();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return g.degree(a) > g.degree(b); });

  std::vector<int> unbounded(static_cast<std::size_t>(n), -1);
  int color = 0;
  int remaining = n;
  while (remaining > 0) {
    for (int v : order) {
      if (unbounded[static_cast<std::size_t>(v)] >= 0) continue;
      bool ok = true;
      for (int u : g.neighbors(v)) {
        if (unbounded[static_cast<std::size_t>(u)] == color) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      unbounded[static_cast<std::size_t>(v)] = color;
      --remaining;
    }
    ++color;
  }

  // Clamp: out-of-range nodes are placed in the same degree order, each taking
  // the least-conflicting color against everything placed so far.
  std::vector<int> clamped(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v)
    if (unbounded[static_cast<std::size_t>(v)] < k) clamped[static_cast<std::size_t>(v)] = unbounded[static_cast<std::size_t>(v)];
  for (int v : order) {
    if (clamped[static_cast<std::size_t>(v)] >= 0) continue;
    std::vector<int> clash(static_cast<std::size_t>(k), 0);
    for (int u : g.neighbors(v))
      if (clamped[static_cast<std::size_t>(u)] >= 0) ++clash[static_cast<std::size_t>(clamped[static_cast<std::size_t>(u)])];
    clamped[static_cast<std::size_t>(v)] =
        static_cast<int>(std::min_element(clash.begin(), clash.end()) - clash.begin());
  }
  return finish(g, unbounded, std::move(clamped));
}

std::string_view brute_force_mode_name(BruteForceMode m) {
  switch (m) {
    case BruteForceMode::Feasibility: return "feasibility";
    case BruteForceMode::MinConflicts: return "min_conflicts";
    case BruteForceMode::BestBalanced: return "best_balanced";
  }
  return "?";
}

BruteForceResult brute_force(const ConflictGraph& g, int k, BruteForceMode mode) {
  check_k(g, k);
  const int n = g.node_count();
  if (n > kBruteForceMaxNodes)
    throw InvalidParameter("brute_force refuses graphs with more than 16 nodes");

  std::vector<int> free_nodes;
  Coloring c;
  c.colors.assign(static_cast<std::size_t>(n), 0);
  for (int v = 0; v < n; ++v) {
    if (auto a = g.anchor(v)) c.colors[static_cast<std::size_t>(v)] = *a;
    else free_nodes.push_back(v);
  }

  BruteForceResult r;
  std::size_t best_conflicts = static_cast<std::size_t>(-1);
  int best_spread = n + 1;
  double best_sq = 0.0;

  // odometer over the free nodes
  while (true) {
    const std::size_t conflicts = conflict_count(g, c);
    if (conflicts == 0) r.colorable = true;
    switch (mode) {
      case BruteForceMode::Feasibility:
        if (conflicts == 0) {
          r.coloring = c;
          return r;
        }
        break;
      case BruteForceMode::MinConflicts:
        if (conflicts < best_conflicts) {
          best_conflicts = conflicts;
          r.coloring = c;
        }
        break;
      case BruteForceMode::BestBalanced:
        if (conflicts == 0) {
          const auto s = balance_stats(g, c);
          if (s.max_spread < best_spread ||
              (s.max_spread == best_spread && s.squared_deviation < best_sq - 1e-12)) {
            best_spread = s.max_spread;
            best_sq = s.squared_deviation;
            r.coloring = c;
          }
        }
        break;
    }
    std::size_t i = 0;
    for (; i < free_nodes.size(); ++i) {
      int& x = c.colors[static_cast<std::size_t>(free_nodes[i])];
      if (++x < k) break;
      x = 0;
    }
    if (i == free_nodes.size()) break;
  }
  if (mode == BruteForceMode::MinConflicts) r.min_conflicts = best_conflicts;
  return r;
}

}  // namespace mpgnn
