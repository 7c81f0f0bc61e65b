#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mpgnn/matrix.hpp"

namespace mpgnn {

struct Edge {
  int u = 0;
  int v = 0;  // u < v after normalization

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Undirected conflict graph with a fixed number of masks (colors) k and
// optional anchor nodes pinned to a color. Immutable after construction.
class ConflictGraph {
 public:
  ConflictGraph() = default;

  // Edges are normalized (u < v), sorted and deduplicated. Throws
  // InvalidParameter on self-loops, out-of-range endpoints or anchors.
  ConflictGraph(int node_count, int k, std::vector<Edge> edges,
                std::map<int, int> anchors = {});

  int node_count() const noexcept { return node_count_; }
  int k() const noexcept { return k_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  std::span<const Edge> edges() const noexcept { return edges_; }

  // Sorted neighbor list of v.
  std::span<const int> neighbors(int v) const noexcept {
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
  }
  int degree(int v) const noexcept { return offsets_[v + 1] - offsets_[v]; }
  bool has_edge(int u, int v) const;

  const std::map<int, int>& anchors() const noexcept { return anchors_; }
  std::optional<int> anchor(int v) const;

  ConflictGraph with_k(int k) const;
  ConflictGraph with_anchors(std::map<int, int> anchors) const;

  friend bool operator==(const ConflictGraph& a, const ConflictGraph& b) {
    return a.node_count_ == b.node_count_ && a.k_ == b.k_ && a.edges_ == b.edges_ &&
           a.anchors_ == b.anchors_;
  }

 private:
  int node_count_ = 0;
  int k_ = 1;
  std::vector<Edge> edges_;
  std::map<int, int> anchors_;
  std::vector<int> offsets_{0};
  std::vector<int> adjacency_;
};

// Hard assignment of each node to a color in [0, k).
struct Coloring {
  std::vector<int> colors;

  std::size_t size() const noexcept { return colors.size(); }
  int operator[](std::size_t v) const { return colors[v]; }

  friend bool operator==(const Coloring&, const Coloring&) = default;
};

// Per-node probability distribution over the k colors (rows sum to 1).
class SoftAssignment {
 public:
  static constexpr double kRowTolerance = 1e-6;

  SoftAssignment() = default;
  // Throws ContractViolation unless probs is non-negative and row-stochastic.
  explicit SoftAssignment(Matrix probs);

  static SoftAssignment uniform(int node_count, int k);
  static SoftAssignment one_hot(const Coloring& c, int k);

  const Matrix& probs() const noexcept { return probs_; }
  int node_count() const noexcept { return static_cast<int>(probs_.rows()); }
  int k() const noexcept { return static_cast<int>(probs_.cols()); }
  double operator()(int v, int c) const { return probs_(v, c); }

 private:
  Matrix probs_;
};

bool is_row_stochastic(const Matrix& probs, double tolerance = SoftAssignment::kRowTolerance);

struct BalanceStats {
  std::vector<int> counts;
  double ideal = 0.0;              // N / K
  double squared_deviation = 0.0;  // sum_c (n_c - N/K)^2
  int max_spread = 0;              // max_c n_c - min_c n_c

  int node_count() const;
};

// Throws ContractViolation if the coloring length differs from node_count.
std::size_t conflict_count(const ConflictGraph& g, const Coloring& c);

// Per-node count of same-colored neighbors.
std::vector<int> node_conflicts(const ConflictGraph& g, const Coloring& c);

BalanceStats balance_stats(const ConflictGraph& g, const Coloring& c);
BalanceStats balance_stats_from_counts(std::vector<int> counts);

// |n_c - N/K| <= delta for every color.
bool hard_bound_satisfied(const BalanceStats& stats, double delta);

constexpr double kDefaultBalanceDelta = 1.0;

// One per conflicting edge, one per color class outside the delta bound,
// one per anchored node not on its anchor color.
std::size_t total_violations(const ConflictGraph& g, const Coloring& c,
                             double delta = kDefaultBalanceDelta);

std::size_t anchor_violations(const ConflictGraph& g, const Coloring& c);

// Row-wise argmax, ties broken towards the lowest color index.
Coloring harden(const SoftAssignment& s);
Coloring harden(const Matrix& probs);

}  // namespace mpgnn
