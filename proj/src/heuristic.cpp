#include <algorithm>
#include <set>
#include <tuple>

#include "mpgnn/errors.hpp"
#include "mpgnn/refinement.hpp"

namespace mpgnn {

namespace {

int argmax_row(const Matrix& p, int v) {
  int best = 0;
  for (int c = 1; c < p.cols(); ++c)
    if (p(v, c) > p(v, best)) best = c;
  return best;
}

class SafeSets {
 public:
  SafeSets(const ConflictGraph& g, int k)
      : g_(g), k_(k), blocked_(static_cast<std::size_t>(g.node_count()) * k, 0),
        safe_size_(g.node_count(), k), colors_(g.node_count(), -1) {}

  bool assigned(int v) const { return colors_[v] >= 0; }
  bool safe(int v, int c) const { return blocked_[idx(v, c)] == 0; }
  int safe_size(int v) const { return safe_size_[v]; }
  const std::vector<int>& colors() const { return colors_; }

  // Assigns c to v; calls on_shrink(u) for each unassigned neighbor whose safe set shrank.
  template <typename Fn>
  void assign(int v, int c, Fn&& on_shrink) {
    colors_[v] = c;
    for (int u : g_.neighbors(v)) {
      if (blocked_[idx(u, c)]++ == 0) {
        --safe_size_[u];
        if (!assigned(u)) on_shrink(u);
      }
    }
  }

 private:
  std::size_t idx(int v, int c) const { return static_cast<std::size_t>(v) * k_ + c; }

  const ConflictGraph& g_;
  int k_;
  std::vector<int> blocked_;  // assigned neighbors of v using color c
  std::vector<int> safe_size_;
  std::vector<int> colors_;
};

}  // namespace

Coloring gnn_heuristic_refine(const ConflictGraph& g, const SoftAssignment& probs,
                              const HeuristicConfig& cfg) {
  const int n = g.node_count();
  const int k = g.k();
  const Matrix& p = probs.probs();
  if (probs.node_count() != n || probs.k() != k)
    throw ContractViolation("probabilities must be node_count x k");

  std::vector<double> uncertainty(n);
  for (int v = 0; v < n; ++v) uncertainty[v] = 1.0 - p.row(v).maxCoeff();

  SafeSets state(g, k);
  using Key = std::tuple<int, double, int>;  // (safe size, -uncertainty, node)
  auto key = [&](int v) { return Key{state.safe_size(v), -uncertainty[v], v}; };

  // Chooses v's color per the argmax / safe-fallback rule; returns true on fallback.
  auto choose = [&](int v, int& color) {
    const int best = argmax_row(p, v);
    if (state.safe(v, best)) {
      color = best;
      return false;
    }
    int safe_best = -1;
    for (int c = 0; c < k; ++c)
      if (state.safe(v, c) && (safe_best < 0 || p(v, c) > p(v, safe_best))) safe_best = c;
    color = safe_best >= 0 ? safe_best : best;  // empty safe set: keep argmax, conflict recorded
    return true;
  };

  if (cfg.resort == ResortMode::OnShrink) {
    std::set<Key> queue;
    std::vector<Key> current(n);
    for (const auto& [v, color] : g.anchors()) state.assign(v, color, [](int) {});
    for (int v = 0; v < n; ++v) {
      if (state.assigned(v)) continue;
      current[v] = key(v);
      queue.insert(current[v]);
    }
    while (!queue.empty()) {
      const int v = std::get<2>(*queue.begin());
      queue.erase(queue.begin());
      int color = 0;
      choose(v, color);
      state.assign(v, color, [&](int u) {
        queue.erase(current[u]);
        current[u] = key(u);
        queue.insert(current[u]);
      });
    }
  } else {
    for (const auto& [v, color] : g.anchors()) state.assign(v, color, [](int) {});
    std::vector<int> order;
    for (int v = 0; v < n; ++v)
      if (!state.assigned(v)) order.push_back(v);
    auto by_key = [&](int a, int b) { return key(a) < key(b); };
    std::sort(order.begin(), order.end(), by_key);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int v = order[i];
      int color = 0;
      const bool fallback = choose(v, color);
      state.assign(v, color, [](int) {});
      if (fallback) std::sort(order.begin() + static_cast<std::ptrdiff_t>(i) + 1, order.end(), by_key);
    }
  }

  Coloring refined{state.colors()};
  if (cfg.never_worse_than_argmax) {
    Coloring decoded = harden(probs);
    for (const auto& [v, color] : g.anchors()) decoded.colors[v] = color;
    if (conflict_count(g, decoded) < conflict_count(g, refined)) return decoded;
  }
  return refined;
}

}  // namespace mpgnn
