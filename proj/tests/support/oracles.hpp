#pragma once

// Independent reference computations used by the tests. Nothing here calls the
// library routine it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "mpgnn/graph.hpp"
#include "mpgnn/matrix.hpp"
#include "mpgnn/nn.hpp"
#include "mpgnn/rng.hpp"

namespace oracle {

using mpgnn::ConflictGraph;
using mpgnn::Coloring;
using mpgnn::Edge;
using mpgnn::Matrix;

inline ConflictGraph random_graph(mpgnn::Rng& rng, int n, double density, int k = 3) {
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.uniform01() < density) edges.push_back({u, v});
  return ConflictGraph(n, k, std::move(edges));
}

inline Coloring random_coloring(mpgnn::Rng& rng, int n, int k) {
  Coloring c;
  for (int v = 0; v < n; ++v) c.colors.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
  return c;
}

inline Matrix random_stochastic(mpgnn::Rng& rng, int n, int k) {
  Matrix p(n, k);
  for (int v = 0; v < n; ++v) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += p(v, c) = 0.05 + rng.uniform01();
    p.row(v) /= s;
  }
  return p;
}

// Edge-by-edge scan over the (u, v) edge list.
inline std::size_t conflicts(const ConflictGraph& g, const Coloring& c) {
  std::size_t n = 0;
  for (const auto& e : g.edges()) n += c.colors[e.u] == c.colors[e.v];
  return n;
}

inline int spread(const Coloring& c, int k) {
  std::vector<int> counts(k, 0);
  for (int x : c.colors) ++counts[x];
  return *std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end());
}

// Enumerates all k^n colorings honoring anchors.
inline void for_each_coloring(const ConflictGraph& g, int k, const std::function<void(const Coloring&)>& fn) {
  const int n = g.node_count();
  Coloring c;
  c.colors.assign(n, 0);
  std::function<void(int)> rec = [&](int v) {
    if (v == n) {
      fn(c);
      return;
    }
    for (int col = 0; col < k; ++col) {
      if (auto a = g.anchor(v); a && *a != col) continue;
      c.colors[v] = col;
      rec(v + 1);
    }
  };
  rec(0);
}

inline std::size_t min_conflicts(const ConflictGraph& g, int k) {
  std::size_t best = g.edge_count() + 1;
  for_each_coloring(g, k, [&](const Coloring& c) { best = std::min(best, conflicts(g, c)); });
  return best;
}

inline bool colorable(const ConflictGraph& g, int k) { return min_conflicts(g, k) == 0; }

// Central differences of a scalar function of a matrix.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-4) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double keep = x(i, j);
      x(i, j) = keep + h;
      const double up = f(x);
      x(i, j) = keep - h;
      const double down = f(x);
      x(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

inline double leaky(double x) { return x > 0 ? x : mpgnn::kLeakySlope * x; }

// Straight-line recomputation of an MLP with explicit loops.
inline Matrix reference_mlp(const mpgnn::ParamSet& ps, const mpgnn::Mlp& mlp, const Matrix& x) {
  Matrix a = x;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    const Matrix& w = ps[mlp.weight_index(l)].value;
    const Matrix& b = ps[mlp.bias_index(l)].value;
    Matrix z(a.rows(), w.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        double s = b(0, j);
        for (Eigen::Index i = 0; i < w.rows(); ++i) s += a(r, i) * w(i, j);
        z(r, j) = s;
      }
    if (l + 1 < mlp.layer_count()) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = leaky(z.data()[i]);
    } else if (mlp.output_activation() == mpgnn::Activation::Softmax) {
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        double mx = z(r, 0), s = 0;
        for (Eigen::Index j = 1; j < z.cols(); ++j) mx = std::max(mx, z(r, j));
        for (Eigen::Index j = 0; j < z.cols(); ++j) s += std::exp(z(r, j) - mx);
        for (Eigen::Index j = 0; j < z.cols(); ++j) z(r, j) = std::exp(z(r, j) - mx) / s;
      }
    } else if (mlp.output_activation() == mpgnn::Activation::Sigmoid) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = 1.0 / (1.0 + std::exp(-z.data()[i]));
    }
    a = z;
  }
  return a;
}

// Relative error with a floor on the denominator so exact zeros compare sanely.
inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// All connected graphs up to isomorphism on n nodes, by exhaustive canonical
// forms (minimum adjacency bit string over all relabelings). Fine for n <= 7
// when grown one vertex at a time.
std::vector<ConflictGraph> connected_graphs_up_to_iso(int n);

}  // namespace oracle
