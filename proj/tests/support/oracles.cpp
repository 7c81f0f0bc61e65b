#include "oracles.hpp"

#include <cstdint>
#include <numeric>
#include <unordered_set>

namespace oracle {

namespace {

int pair_index(int a, int b) {
  if (a > b) std::swap(a, b);
  return b * (b - 1) / 2 + a;
}

std::uint64_t canonical_code(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::uint64_t best = ~std::uint64_t{0};
  do {
    std::uint64_t code = 0;
    for (const auto& [u, v] : edges) code |= std::uint64_t{1} << pair_index(perm[u], perm[v]);
    best = std::min(best, code);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<std::pair<int, int>> decode(int n, std::uint64_t code) {
  std::vector<std::pair<int, int>> edges;
  for (int b = 1; b < n; ++b)
    for (int a = 0; a < b; ++a)
      if (code >> pair_index(a, b) & 1) edges.emplace_back(a, b);
  return edges;
}

}  // namespace

std::vector<ConflictGraph> connected_graphs_up_to_iso(int n) {
  // Every connected graph has a vertex whose removal keeps it connected, so
  // connected graphs on n nodes all arise from connected graphs on n - 1 nodes
  // plus one vertex joined to a non-empty subset.
  std::vector<std::uint64_t> level = {0};  // the single-node graph
  for (int m = 2; m <= n; ++m) {
    std::unordered_set<std::uint64_t> next;
    for (std::uint64_t code : level) {
      const auto base = decode(m - 1, code);
      for (int mask = 1; mask < (1 << (m - 1)); ++mask) {
        auto edges = base;
        for (int u = 0; u < m - 1; ++u)
          if (mask >> u & 1) edges.emplace_back(u, m - 1);
        next.insert(canonical_code(m, edges));
      }
    }
    level.assign(next.begin(), next.end());
    std::sort(level.begin(), level.end());
  }
  std::vector<ConflictGraph> out;
  for (std::uint64_t code : level) {
    std::vector<Edge> edges;
    for (const auto& [u, v] : decode(n, code)) edges.push_back({u, v});
    out.emplace_back(n, 3, std::move(edges));
  }
  return out;
}

}  // namespace oracle
