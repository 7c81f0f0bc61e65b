#include "mpgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpgnn/errors.hpp"

namespace mpgnn {

ConflictGraph::ConflictGraph(int node_count, int k, std::vector<Edge> edges,
                             std::map<int, int> anchors)
    : node_count_(node_count), k_(k), edges_(std::move(edges)), anchors_(std::move(anchors)) {
  if (node_count < 0) throw InvalidParameter("node_count must be non-negative");
  if (k < 1) throw InvalidParameter("k must be positive");
  for (auto& e : edges_) {
    if (e.u == e.v) throw InvalidParameter("self-loop on node " + std::to_string(e.u));
    if (e.u < 0 || e.v < 0 || e.u >= node_count || e.v >= node_count)
      throw InvalidParameter("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                             ") out of range for " + std::to_string(node_count) + " nodes");
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  for (const auto& [v, color] : anchors_) {
    if (v < 0 || v >= node_count)
      throw InvalidParameter("anchor node " + std::to_string(v) + " out of range");
    if (color < 0 || color >= k)
      throw InvalidParameter("anchor color " + std::to_string(color) + " out of range for k=" +
                             std::to_string(k));
  }

  std::vector<int> degree(node_count, 0);
  for (const auto& e : edges_) {
    ++degree[e.u];
    ++degree[e.v];
  }
  offsets_.assign(node_count + 1, 0);
  for (int v = 0; v < node_count; ++v) offsets_[v + 1] = offsets_[v] + degree[v];
  adjacency_.resize(offsets_.back());
  std::vector<int> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& e : edges_) {
    adjacency_[cursor[e.u]++] = e.v;
    adjacency_[cursor[e.v]++] = e.u;
  }
  // edges are sorted by (u, v), so each list is already ascending except for the
  // interleaving of "smaller" and "larger" neighbors
  for (int v = 0; v < node_count; ++v)
    std::sort(adjacency_.begin() + offsets_[v], adjacency_.begin() + offsets_[v + 1]);
}

bool ConflictGraph::has_edge(int u, int v) const {
  if (u < 0 || v < 0 || u >= node_count_ || v >= node_count_) return false;
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::optional<int> ConflictGraph::anchor(int v) const {
  auto it = anchors_.find(v);
  if (it == anchors_.end()) return std::nullopt;
  return it->second;
}

ConflictGraph ConflictGraph::with_k(int k) const {
  return ConflictGraph(node_count_, k, edges_, anchors_);
}

ConflictGraph ConflictGraph::with_anchors(std::map<int, int> anchors) const {
  return ConflictGraph(node_count_, k_, edges_, std::move(anchors));
}

bool is_row_stochastic(const Matrix& probs, double tolerance) {
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    if ((probs.row(r).array() < 0.0).any() || !probs.row(r).allFinite()) return false;
    if (std::abs(probs.row(r).sum() - 1.0) > tolerance) return false;
  }
  return true;
}

SoftAssignment::SoftAssignment(Matrix probs) : probs_(std::move(probs)) {
  if (!is_row_stochastic(probs_))
    throw ContractViolation("soft assignment rows must be non-negative and sum to 1");
}

SoftAssignment SoftAssignment::uniform(int node_count, int k) {
  return SoftAssignment(Matrix::Constant(node_count, k, 1.0 / k));
}

SoftAssignment SoftAssignment::one_hot(const Coloring& c, int k) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(c.size()), k);
  for (std::size_t v = 0; v < c.size(); ++v) {
    if (c[v] < 0 || c[v] >= k) throw ContractViolation("color out of range");
    m(static_cast<Eigen::Index>(v), c[v]) = 1.0;
  }
  return SoftAssignment(std::move(m));
}

int BalanceStats::node_count() const {
  int total = 0;
  for (int n : counts) total += n;
  return total;
}

namespace {

void check_coloring(const ConflictGraph& g, const Coloring& c) {
  if (static_cast<int>(c.size()) != g.node_count())
    throw ContractViolation("coloring has " + std::to_string(c.size()) + " entries, graph has " +
                            std::to_string(g.node_count()) + " nodes");
}

}  // namespace

std::size_t conflict_count(const ConflictGraph& g, const Coloring& c) {
  check_coloring(g, c);
  std::size_t conflicts = 0;
  for (const auto& e : g.edges())
    if (c[e.u] == c[e.v]) ++conflicts;
  return conflicts;
}

std::vector<int> node_conflicts(const ConflictGraph& g, const Coloring& c) {
  check_coloring(g, c);
  std::vector<int> out(g.node_count(), 0);
  for (const auto& e : g.edges()) {
    if (c[e.u] == c[e.v]) {
      ++out[e.u];
      ++out[e.v];
    }
  }
  return out;
}

BalanceStats balance_stats_from_counts(std::vector<int> counts) {
  BalanceStats s;
  s.counts = std::move(counts);
  if (s.counts.empty()) return s;
  const int n = s.node_count();
  s.ideal = static_cast<double>(n) / static_cast<double>(s.counts.size());
  for (int count : s.counts) {
    const double d = count - s.ideal;
    s.squared_deviation += d * d;
  }
  const auto [lo, hi] = std::minmax_element(s.counts.begin(), s.counts.end());
  s.max_spread = *hi - *lo;
  return s;
}

BalanceStats balance_stats(const ConflictGraph& g, const Coloring& c) {
  check_coloring(g, c);
  std::vector<int> counts(g.k(), 0);
  for (int color : c.colors) {
    if (color < 0 || color >= g.k()) throw ContractViolation("color out of range");
    ++counts[color];
  }
  return balance_stats_from_counts(std::move(counts));
}

bool hard_bound_satisfied(const BalanceStats& stats, double delta) {
  // small slack so that e.g. |3 - 8/3| <= 1/3 is not lost to rounding
  constexpr double kSlack = 1e-12;
  return std::all_of(stats.counts.begin(), stats.counts.end(), [&](int count) {
    return std::abs(count - stats.ideal) <= delta + kSlack;
  });
}

std::size_t anchor_violations(const ConflictGraph& g, const Coloring& c) {
  check_coloring(g, c);
  std::size_t violated = 0;
  for (const auto& [v, color] : g.anchors())
    if (c[v] != color) ++violated;
  return violated;
}

std::size_t total_violations(const ConflictGraph& g, const Coloring& c, double delta) {
  const auto stats = balance_stats(g, c);
  std::size_t violated = conflict_count(g, c) + anchor_violations(g, c);
  for (int count : stats.counts)
    if (std::abs(count - stats.ideal) > delta + 1e-12) ++violated;
  return violated;
}

Coloring harden(const Matrix& probs) {
  Coloring out;
  out.colors.resize(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index v = 0; v < probs.rows(); ++v) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(v, c) > probs(v, best)) best = c;
    out.colors[static_cast<std::size_t>(v)] = static_cast<int>(best);
  }
  return out;
}

Coloring harden(const SoftAssignment& s) { return harden(s.probs()); }

}  // namespace mpgnn
