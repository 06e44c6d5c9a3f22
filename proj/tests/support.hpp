// Independent reference implementations used as test oracles. Nothing
// here calls into the library's loss, propagation or metric code.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "nocd/nocd.hpp"

namespace nocd::testing {

using EdgeSet = std::set<std::pair<Node, Node>>;

/// Random simple graph as an explicit unordered edge set (u < v).
inline EdgeSet random_edge_set(Node n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  EdgeSet e;
  for (Node u = 0; u < n; ++u)
    for (Node v = u + 1; v < n; ++v)
      if (coin(rng)) e.emplace(u, v);
  return e;
}

inline SparseGraph graph_of(Node n, const EdgeSet& e) {
  std::vector<std::pair<Node, Node>> list(e.begin(), e.end());
  return SparseGraph::from_edges(n, list);
}

inline Matrix random_nonneg(Index rows, Index cols, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

/// Balanced loss by direct enumeration of all unordered pairs.
inline double naive_balanced_loss(const Matrix& f, const EdgeSet& edges) {
  const Index n = f.rows();
  double edge_sum = 0.0, non_edge_sum = 0.0;
  std::size_t m = 0, mbar = 0;
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v) {
      double dot = 0.0;
      for (Index c = 0; c < f.cols(); ++c) dot += f(u, c) * f(v, c);
      if (edges.count({static_cast<Node>(u), static_cast<Node>(v)})) {
        edge_sum += -std::log(1.0 - std::exp(-std::max(dot, 1e-10)));
        ++m;
      } else {
        non_edge_sum += dot;
        ++mbar;
      }
    }
  return edge_sum / static_cast<double>(m) + non_edge_sum / static_cast<double>(mbar);
}

/// D^{-1/2} (A + I) D^{-1/2} as a plain dense matrix.
inline Matrix dense_normalized_adjacency(Node n, const EdgeSet& edges) {
  Matrix a = Matrix::Identity(n, n);
  for (auto [u, v] : edges) a(u, v) = a(v, u) = 1.0;
  std::vector<double> d(n, 0.0);
  for (Node u = 0; u < n; ++u)
    for (Node v = 0; v < n; ++v) d[u] += a(u, v);
  for (Node u = 0; u < n; ++u)
    for (Node v = 0; v < n; ++v) a(u, v) /= std::sqrt(d[u] * d[v]);
  return a;
}

/// Overlapping NMI from explicit 0/1 membership vectors, natural log.
/// Covers are given as lists of node lists; empty communities must
/// already be removed.
inline double reference_nmi(std::size_t n, const std::vector<std::vector<Node>>& x,
                            const std::vector<std::vector<Node>>& y) {
  auto bits = [n](const std::vector<Node>& c) {
    std::vector<int> b(n, 0);
    for (Node u : c) b[u] = 1;
    return b;
  };
  auto h = [n](double count) {
    if (count <= 0) return 0.0;
    const double p = count / static_cast<double>(n);
    return -p * std::log(p);
  };
  auto side = [&](const std::vector<std::vector<Node>>& xs, const std::vector<std::vector<Node>>& ys) {
    double cond = 0.0, marg = 0.0;
    for (const auto& xc : xs) {
      const auto xb = bits(xc);
      const double ones = static_cast<double>(std::count(xb.begin(), xb.end(), 1));
      const double hx = h(ones) + h(static_cast<double>(n) - ones);
      double best = hx;
      for (const auto& yc : ys) {
        const auto yb = bits(yc);
        double a = 0, b = 0, c = 0, d = 0;  // (x,y) = 00, 01, 10, 11
        for (std::size_t u = 0; u < n; ++u) {
          if (!xb[u] && !yb[u]) ++a;
          else if (!xb[u] && yb[u]) ++b;
          else if (xb[u] && !yb[u]) ++c;
          else ++d;
        }
        if (h(a) + h(d) >= h(b) + h(c)) best = std::min(best, h(a) + h(b) + h(c) + h(d) - h(b + d) - h(a + c));
      }
      cond += best;
      marg += hx;
    }
    return cond / marg;
  };
  return 1.0 - 0.5 * (side(x, y) + side(y, x));
}

/// Central differences of a scalar function with respect to every entry
/// of `m` (perturbed in place and restored).
template <class Mat>
Mat numeric_gradient(Mat& m, const std::function<double()>& fn, double h = 1e-6) {
  Mat g(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const double orig = m(i, j);
      m(i, j) = orig + h;
      const double up = fn();
      m(i, j) = orig - h;
      const double down = fn();
      m(i, j) = orig;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

/// Norm-wise relative error max|a - b| / max|b|.
template <class A, class B>
double relative_error(const A& analytic, const B& numeric) {
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-300);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace nocd::testing
