#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mpgnn/errors.hpp"
#include "mpgnn/refinement.hpp"
#include "mpgnn/rng.hpp"

namespace mpgnn {

void SaConfig::validate() const {
  if (iterations < 0) throw InvalidParameter("SA iterations must be non-negative");
  if (!(initial_temperature > 0.0) || !(final_temperature > 0.0))
    throw InvalidParameter("SA temperatures must be positive");
  if (cooling != 0.0 && !(cooling > 0.0 && cooling < 1.0))
    throw InvalidParameter("SA cooling factor must be in (0, 1)");
}

std::string_view sa_proposal_name(SaProposal p) {
  return p == SaProposal::ConflictFree ? "conflict_free" : "uniform";
}

SaProposal sa_proposal_from_name(std::string_view name) {
  if (name == "conflict_free") return SaProposal::ConflictFree;
  if (name == "uniform") return SaProposal::Uniform;
  throw InvalidParameter("unknown SA proposal '" + std::string(name) + "' (conflict_free, uniform)");
}

namespace {

// Legal single-node moves of a proper coloring, kept in sync as nodes recolor.
// A move (v, c) is legal when v is free, c != color(v) and no neighbor has c.
class MoveSet {
 public:
  MoveSet(const ConflictGraph& g, const Coloring& c) : g_(g), k_(g.k()) {
    const int n = g.node_count();
    clash_.assign(static_cast<std::size_t>(n) * k_, 0);
    slot_.assign(static_cast<std::size_t>(n) * k_, -1);
    for (int v = 0; v < n; ++v)
      for (int u : g.neighbors(v)) ++clash_[idx(v, c[u])];
    for (int v = 0; v < n; ++v)
      for (int col = 0; col < k_; ++col)
        if (legal(v, col, c[v])) add(v, col);
  }

  bool empty() const { return moves_.empty(); }
  std::size_t size() const { return moves_.size(); }
  std::pair<int, int> at(std::size_t i) const { return moves_[i]; }

  // Applies v: from -> to and refreshes every affected move.
  void recolor(const Coloring& after, int v, int from, int to) {
    remove(v, to);
    if (legal(v, from, to)) add(v, from);
    for (int u : g_.neighbors(v)) {
      --clash_[idx(u, from)];
      ++clash_[idx(u, to)];
      remove(u, to);
      if (legal(u, from, after[u])) add(u, from);
    }
  }

 private:
  std::size_t idx(int v, int col) const { return static_cast<std::size_t>(v) * k_ + col; }
  bool legal(int v, int col, int current) const {
    return !g_.anchor(v) && col != current && clash_[idx(v, col)] == 0;
  }
  void add(int v, int col) {
    if (slot_[idx(v, col)] >= 0) return;
    slot_[idx(v, col)] = static_cast<int>(moves_.size());
    moves_.push_back({v, col});
  }
  void remove(int v, int col) {
    const int s = slot_[idx(v, col)];
    if (s < 0) return;
    const auto last = moves_.back();
    moves_[s] = last;
    slot_[idx(last.first, last.second)] = s;
    moves_.pop_back();
    slot_[idx(v, col)] = -1;
  }

  const ConflictGraph& g_;
  int k_;
  std::vector<int> clash_;  // neighbors of v holding each color
  std::vector<int> slot_;   // position in moves_, -1 when absent
  std::vector<std::pair<int, int>> moves_;
};

struct BalanceKey {
  int spread;
  double sq_dev;

  bool better_than(const BalanceKey& o) const {
    if (spread != o.spread) return spread < o.spread;
    return sq_dev < o.sq_dev - 1e-9;
  }
};

BalanceKey balance_key(const std::vector<int>& counts, double ideal) {
  int lo = counts[0];
  int hi = counts[0];
  double sq = 0.0;
  for (int c : counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
    sq += (c - ideal) * (c - ideal);
  }
  return {hi - lo, sq};
}

}  // namespace

Coloring sa_balance(const ConflictGraph& g, const Coloring& c, const SaConfig& cfg) {
  cfg.validate();
  if (conflict_count(g, c) != 0)
    throw ContractViolation("sa_balance requires a conflict-free input coloring");
  const int n = g.node_count();
  const int k = g.k();
  auto stats = balance_stats(g, c);
  if (n == 0 || k == 1) return c;

  const int iterations = cfg.iterations > 0 ? cfg.iterations : n;
  const double alpha = cfg.cooling > 0.0
                           ? cfg.cooling
                           : std::pow(cfg.final_temperature / cfg.initial_temperature,
                                      1.0 / static_cast<double>(iterations));
  double temperature = cfg.initial_temperature;
  Rng rng(cfg.seed);

  Coloring current = c;
  std::vector<int> counts = stats.counts;
  BalanceKey current_key = balance_key(counts, stats.ideal);
  Coloring best = current;
  BalanceKey best_key = current_key;

  std::optional<MoveSet> legal;
  if (cfg.proposal == SaProposal::ConflictFree) legal.emplace(g, current);

  for (int it = 0; it < iterations; ++it, temperature *= alpha) {
    int v = 0;
    int to = 0;
    if (legal) {
      if (legal->empty()) break;  // the coloring is frozen
      std::tie(v, to) = legal->at(rng.below(legal->size()));
    } else {
      v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      to = (current[v] + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)))) % k;
      if (g.anchor(v)) continue;
      bool clash = false;
      for (int u : g.neighbors(v)) {
        if (current[u] == to) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
    }
    const int from = current[v];

    --counts[from];
    ++counts[to];
    const BalanceKey next = balance_key(counts, stats.ideal);
    bool accept = next.better_than(current_key);
    if (!accept) {
      const int delta = next.spread - current_key.spread;  // measured in max_spread units
      accept = delta <= 0 || rng.uniform01() < std::exp(-delta / temperature);
    }
    if (!accept) {
      ++counts[from];
      --counts[to];
      continue;
    }
    current.colors[v] = to;
    if (legal) legal->recolor(current, v, from, to);
    current_key = next;
    if (current_key.better_than(best_key)) {
      best = current;
      best_key = current_key;
    }
  }
  return best;
}

}  // namespace mpgnn
