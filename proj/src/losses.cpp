#include "mpgnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <sstream>

#include "mpgnn/errors.hpp"

namespace mpgnn {

namespace {

// Probabilities below this are treated as this value inside logarithms.
constexpr double kLogFloor = 1e-300;

void reset(Matrix* grad, const Matrix& p) {
  if (grad) grad->setZero(p.rows(), p.cols());
}

}  // namespace

CliqueSet enumerate_triangles(const ConflictGraph& g) {
  CliqueSet cs;
  std::vector<int> common;
  for (const auto& e : g.edges()) {
    auto a = g.neighbors(e.u);
    auto b = g.neighbors(e.v);
    common.clear();
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    for (int w : common)
      if (w > e.v) cs.cliques.push_back({e.u, e.v, w});
  }
  return cs;
}

bool is_valid_clique_set(const ConflictGraph& g, const CliqueSet& cs) {
  for (const auto& c : cs.cliques)
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j)
        if (!g.has_edge(c[i], c[j])) return false;
  return true;
}

double loss_pairwise(const ConflictGraph& g, const Matrix& p, Matrix* grad) {
  reset(grad, p);
  double total = 0.0;
  for (const auto& e : g.edges()) {
    total += p.row(e.u).dot(p.row(e.v));
    if (grad) {
      grad->row(e.u) += p.row(e.v);
      grad->row(e.v) += p.row(e.u);
    }
  }
  return total;
}

double loss_clique(const CliqueSet& cs, const Matrix& p, Matrix* grad) {
  reset(grad, p);
  double total = 0.0;
  for (const auto& clique : cs.cliques) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      double prod = 1.0;
      for (int v : clique) prod *= p(v, c);
      total += prod;
      if (!grad) continue;
      for (std::size_t i = 0; i < clique.size(); ++i) {
        double others = 1.0;
        for (std::size_t j = 0; j < clique.size(); ++j)
          if (j != i) others *= p(clique[j], c);
        (*grad)(clique[i], c) += others;
      }
    }
  }
  return total;
}

double loss_unique(const CliqueSet& cs, const Matrix& p, Matrix* grad) {
  reset(grad, p);
  double total = 0.0;
  for (const auto& clique : cs.cliques) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      double mass = 0.0;
      for (int v : clique) mass += p(v, c);
      const double r = mass - 1.0;
      total += std::abs(r);
      if (grad && r != 0.0) {
        const double s = r > 0.0 ? 1.0 : -1.0;
        for (int v : clique) (*grad)(v, c) += s;
      }
    }
  }
  return total;
}

double loss_balance_js(const Matrix& p, Matrix* grad) {
  reset(grad, p);
  const auto n = p.rows();
  const auto k = p.cols();
  if (n == 0) return 0.0;
  const RowVector u = p.colwise().sum() / static_cast<double>(n);
  const double target = 1.0 / static_cast<double>(k);
  double js = 0.0;
  RowVector d_u(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double m = 0.5 * (u(c) + target);
    if (u(c) > 0.0) js += 0.5 * u(c) * std::log(u(c) / m);
    js += 0.5 * target * std::log(target / m);
    // d/du_c of the two KL terms collapses to 0.5 * ln(u_c / m_c)
    d_u(c) = 0.5 * std::log(std::max(u(c), kLogFloor) / m);
  }
  if (grad) grad->rowwise() = d_u / static_cast<double>(n);
  return std::max(js, 0.0);
}

double loss_balance_harsh(const Matrix& p, double delta_loss, Matrix* grad) {
  reset(grad, p);
  const auto n = p.rows();
  const auto k = p.cols();
  if (n == 0) return 0.0;
  const double ideal = static_cast<double>(n) / static_cast<double>(k);
  const RowVector mass = p.colwise().sum();
  double total = 0.0;
  RowVector d_mass = RowVector::Zero(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double dev = mass(c) - ideal;
    const double hinge = std::abs(dev) - delta_loss;
    if (hinge <= 0.0) continue;
    total += hinge * hinge;
    d_mass(c) = 2.0 * hinge * (dev > 0.0 ? 1.0 : -1.0);
  }
  if (grad) grad->rowwise() = d_mass;
  return total;
}

double loss_entropy(const Matrix& p, Matrix* grad) {
  reset(grad, p);
  const auto n = p.rows();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index v = 0; v < n; ++v) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double x = p(v, c);
      if (x > 0.0) total -= x * std::log(x);
      if (grad) (*grad)(v, c) = -(std::log(std::max(x, kLogFloor)) + 1.0) / static_cast<double>(n);
    }
  }
  return total / static_cast<double>(n);
}

double loss_anchor(const ConflictGraph& g, const Matrix& p, Matrix* grad) {
  reset(grad, p);
  if (g.anchors().empty()) return 0.0;
  const double count = static_cast<double>(g.anchors().size());
  double total = 0.0;
  for (const auto& [v, color] : g.anchors()) {
    const double x = std::max(p(v, color), kLogFloor);
    total -= std::log(x);
    if (grad) (*grad)(v, color) = -1.0 / (count * x);
  }
  return total / count;
}

LossGroup loss_group(LossTerm t) {
  switch (t) {
    case LossTerm::Pairwise:
    case LossTerm::Clique:
    case LossTerm::Unique:
      return LossGroup::Coloring;
    case LossTerm::BalanceJs:
    case LossTerm::BalanceHarsh:
      return LossGroup::Balance;
    case LossTerm::Entropy:
    case LossTerm::Anchor:
      return LossGroup::Auxiliary;
  }
  return LossGroup::Auxiliary;
}

std::string_view loss_name(LossTerm t) {
  switch (t) {
    case LossTerm::Pairwise: return "pairwise";
    case LossTerm::Clique: return "clique";
    case LossTerm::Unique: return "unique";
    case LossTerm::BalanceJs: return "balance_js";
    case LossTerm::BalanceHarsh: return "balance_harsh";
    case LossTerm::Entropy: return "entropy";
    case LossTerm::Anchor: return "anchor";
  }
  return "?";
}

std::optional<LossTerm> loss_from_name(std::string_view name) {
  for (auto t : kAllLossTerms)
    if (loss_name(t) == name) return t;
  return std::nullopt;
}

void LossConfig::validate() const {
  bool has_coloring = false;
  for (const auto& [term, w] : weights) {
    if (!(w >= 0.0)) throw InvalidParameter("loss weight for " + std::string(loss_name(term)) +
                                            " must be non-negative");
    if (loss_group(term) == LossGroup::Coloring) has_coloring = true;
  }
  if (!has_coloring) throw InvalidParameter("at least one coloring (L1) loss term must be enabled");
  if (harsh_delta < 0.0) throw InvalidParameter("harsh_delta must be non-negative");
  if (beta.initial < 0.0 || beta.minimum < 0.0) throw InvalidParameter("beta must be non-negative");
  if (!(beta.decay > 0.0 && beta.decay <= 1.0)) throw InvalidParameter("beta decay must be in (0, 1]");
  if (beta.patience < 1) throw InvalidParameter("beta patience must be >= 1");
}

std::string LossConfig::fingerprint() const {
  std::ostringstream ss;
  ss << "losses";
  for (const auto& [term, w] : weights) ss << ";" << loss_name(term) << "=" << w;
  ss << ";harsh_delta=" << harsh_delta << ";beta=" << beta.initial << "/" << beta.decay << "/"
     << beta.patience << "/" << beta.minimum << "/" << beta.tolerance;
  return ss.str();
}

LossBreakdown evaluate_losses(const LossConfig& cfg, const ConflictGraph& g, const CliqueSet& cs,
                              const Matrix& p, Matrix* grad_primary, Matrix* grad_balance) {
  LossBreakdown out;
  if (grad_primary) grad_primary->setZero(p.rows(), p.cols());
  if (grad_balance) grad_balance->setZero(p.rows(), p.cols());
  const bool want_grad = grad_primary || grad_balance;
  Matrix term_grad;
  for (const auto& [term, w] : cfg.weights) {
    Matrix* tg = want_grad ? &term_grad : nullptr;
    double value = 0.0;
    switch (term) {
      case LossTerm::Pairwise: value = loss_pairwise(g, p, tg); break;
      case LossTerm::Clique: value = loss_clique(cs, p, tg); break;
      case LossTerm::Unique: value = loss_unique(cs, p, tg); break;
      case LossTerm::BalanceJs: value = loss_balance_js(p, tg); break;
      case LossTerm::BalanceHarsh: value = loss_balance_harsh(p, cfg.harsh_delta, tg); break;
      case LossTerm::Entropy: value = loss_entropy(p, tg); break;
      case LossTerm::Anchor: value = loss_anchor(g, p, tg); break;
    }
    out.terms[term] = value;
    const bool balance = loss_group(term) == LossGroup::Balance;
    (balance ? out.l2 : out.l1) += w * value;
    Matrix* target = balance ? grad_balance : grad_primary;
    if (target) *target += w * term_grad;
  }
  return out;
}

}  // namespace mpgnn
