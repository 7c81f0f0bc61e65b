#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "mpgnn/errors.hpp"
#include "mpgnn/refinement.hpp"

namespace mpgnn {

std::string_view csp_status_name(CspStatus s) {
  switch (s) {
    case CspStatus::Feasible: return "feasible";
    case CspStatus::Infeasible: return "infeasible";
    case CspStatus::Timeout: return "timeout";
  }
  return "?";
}

namespace {

using Mask = std::uint64_t;

class CspSearch {
 public:
  CspSearch(const ConflictGraph& g, const Coloring& initial, const CspConfig& cfg,
            const SoftAssignment* probs)
      : g_(g), cfg_(cfg), n_(g.node_count()), k_(g.k()), initial_(initial.colors),
        colors_(n_, -1), domain_(n_, full_mask()), counts_(k_, 0), value_order_(n_) {
    ideal_ = n_ == 0 ? 0.0 : static_cast<double>(n_) / k_;
    start_ = std::chrono::steady_clock::now();
    for (int v = 0; v < n_; ++v) {
      std::vector<int> order(k_);
      std::iota(order.begin(), order.end(), 0);
      const int x0 = initial_[v];
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if ((a == x0) != (b == x0)) return a == x0;
        if (probs && (*probs)(v, a) != (*probs)(v, b)) return (*probs)(v, a) > (*probs)(v, b);
        return false;
      });
      value_order_[v] = std::move(order);
    }
    for (const auto& [v, color] : g.anchors()) domain_[v] = Mask{1} << color;
    for (int v = 0; v < n_; ++v) lower_bound_ += min_cost(v);
  }

  CspResult run() {
    CspResult result;
    // anchors adjacent on the same color can never be repaired
    bool consistent = true;
    for (const auto& [v, color] : g_.anchors())
      for (int u : g_.neighbors(v))
        if (auto a = g_.anchor(u); a && *a == color) consistent = false;
    if (consistent) search(0);
    result.search_nodes = nodes_;
    if (best_) {
      result.status = CspStatus::Feasible;
      result.coloring = Coloring{*best_};
      for (int v = 0; v < n_; ++v)
        if (best_->at(v) != initial_[v]) ++result.nodes_changed;
      result.optimal = !aborted_;
    } else {
      result.status = aborted_ ? CspStatus::Timeout : CspStatus::Infeasible;
    }
    return result;
  }

 private:
  Mask full_mask() const { return k_ >= 64 ? ~Mask{0} : (Mask{1} << k_) - 1; }

  double cost(int v, int c) const {
    if (cfg_.objective == CspObjective::DeviationCount) return c != initial_[v] ? 1.0 : 0.0;
    return std::abs(c - initial_[v]);
  }

  // an emptied domain contributes nothing; the branch is abandoned anyway
  double contribution(int v) const { return domain_[v] == 0 ? 0.0 : min_cost(v); }

  double min_cost(int v) const {
    double best = std::numeric_limits<double>::infinity();
    for (Mask m = domain_[v]; m; m &= m - 1) best = std::min(best, cost(v, std::countr_zero(m)));
    return best;
  }

  // Over-full classes can only grow, so sum_c max(0, count_c - N/K) bounds the final term.
  double balance_bound() const {
    if (!cfg_.balance_term) return 0.0;
    double b = 0.0;
    for (int c = 0; c < k_; ++c) b += std::max(0.0, counts_[c] - ideal_);
    return cfg_.balance_weight * b;
  }

  double balance_cost() const {
    if (!cfg_.balance_term) return 0.0;
    double b = 0.0;
    for (int c = 0; c < k_; ++c) b += std::abs(counts_[c] - ideal_);
    return cfg_.balance_weight * b;
  }

  bool out_of_budget() {
    if (aborted_) return true;
    if (cfg_.node_limit && nodes_ >= cfg_.node_limit) aborted_ = true;
    if ((nodes_ & 1023) == 0) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
      if (elapsed.count() > cfg_.time_budget_s) aborted_ = true;
    }
    return aborted_;
  }

  int select_variable() const {
    int best = -1;
    int best_size = std::numeric_limits<int>::max();
    for (int v = 0; v < n_; ++v) {
      if (colors_[v] >= 0) continue;
      const int size = std::popcount(domain_[v]);
      if (size < best_size || (size == best_size && g_.degree(v) > g_.degree(best))) {
        best = v;
        best_size = size;
      }
    }
    return best;
  }

  bool done() const { return best_ && (!cfg_.optimize || best_cost_ <= 0.0); }

  void search(int depth) {
    ++nodes_;
    if (out_of_budget() || done()) return;
    if (best_ && assigned_cost_ + lower_bound_ + balance_bound() >= best_cost_ - 1e-9) return;
    if (depth == n_) {
      const double total = assigned_cost_ + balance_cost();
      if (!best_ || total < best_cost_ - 1e-9) {
        best_ = colors_;
        best_cost_ = total;
      }
      return;
    }
    const int v = select_variable();
    const double v_bound = min_cost(v);
    for (int c : value_order_[v]) {
      if (!(domain_[v] >> c & 1)) continue;
      // assign and forward-check
      colors_[v] = c;
      ++counts_[c];
      assigned_cost_ += cost(v, c);
      lower_bound_ -= v_bound;
      const std::size_t trail_mark = trail_.size();
      bool wiped = false;
      for (int u : g_.neighbors(v)) {
        if (colors_[u] >= 0 || !(domain_[u] >> c & 1)) continue;
        trail_.push_back({u, domain_[u]});
        lower_bound_ -= contribution(u);
        domain_[u] &= ~(Mask{1} << c);
        lower_bound_ += contribution(u);
        if (domain_[u] == 0) {
          wiped = true;
          break;
        }
      }
      if (!wiped) search(depth + 1);
      // undo
      while (trail_.size() > trail_mark) {
        const auto [u, mask] = trail_.back();
        trail_.pop_back();
        lower_bound_ -= contribution(u);
        domain_[u] = mask;
        lower_bound_ += contribution(u);
      }
      lower_bound_ += v_bound;
      assigned_cost_ -= cost(v, c);
      --counts_[c];
      colors_[v] = -1;
      if (aborted_ || done()) return;
    }
  }

  const ConflictGraph& g_;
  const CspConfig& cfg_;
  int n_;
  int k_;
  double ideal_ = 0.0;
  std::vector<int> initial_;
  std::vector<int> colors_;
  std::vector<Mask> domain_;
  std::vector<int> counts_;
  std::vector<std::vector<int>> value_order_;
  std::vector<std::pair<int, Mask>> trail_;
  double assigned_cost_ = 0.0;
  double lower_bound_ = 0.0;  // sum over unassigned nodes of their cheapest remaining color
  std::optional<std::vector<int>> best_;
  double best_cost_ = 0.0;
  std::uint64_t nodes_ = 0;
  bool aborted_ = false;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

CspResult csp_repair(const ConflictGraph& g, const Coloring& initial, const CspConfig& cfg,
                     const SoftAssignment* probs) {
  if (static_cast<int>(initial.size()) != g.node_count())
    throw ContractViolation("initial coloring length does not match the graph");
  if (g.k() > 64) throw ContractViolation("csp_repair supports at most 64 colors");
  for (int c : initial.colors)
    if (c < 0 || c >= g.k()) throw ContractViolation("initial color out of range");
  if (probs && (probs->node_count() != g.node_count() || probs->k() != g.k()))
    throw ContractViolation("probabilities must be node_count x k");
  CspSearch search(g, initial, cfg, probs);
  return search.run();
}

}  // namespace mpgnn
