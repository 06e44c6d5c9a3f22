// Bernoulli-Poisson graph model: edge probabilities, the balanced
// negative log-likelihood (exact and sampled), its gradient with respect
// to the affiliation matrix, and a sampler for synthetic graphs.
//
// Pairs are unordered throughout. With F the N x C affiliation matrix,
//
//   L(F) = -mean_{(u,v) in E} log(1 - exp(-<F_u, F_v>))
//          + mean_{(u,v) not in E, u != v} <F_u, F_v>.
//
// The non-edge mean is evaluated in O(NC + MC) using the column sum
// s = sum_u F_u:  sum_{non-edges} <F_u,F_v> = (|s|^2 - sum_u |F_u|^2) / 2
// - sum_{edges} <F_u,F_v>.
#pragma once

#include <cmath>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "nocd/graph.hpp"

namespace nocd {

/// Non-negative N x C community affiliation matrix.
class AffiliationMatrix {
 public:
  AffiliationMatrix() = default;
  explicit AffiliationMatrix(Matrix values) : values_(std::move(values)) {
    if (!(values_.array() >= 0.0).all())
      throw Error("affiliation matrix must be non-negative and finite");
  }

  static AffiliationMatrix zeros(Index num_nodes, Index num_communities) {
    return AffiliationMatrix(Matrix::Zero(num_nodes, num_communities));
  }

  /// max(0, m) element-wise.
  static AffiliationMatrix projected(const Matrix& m) { return AffiliationMatrix(m.cwiseMax(0.0)); }

  Index num_nodes() const noexcept { return values_.rows(); }
  Index num_communities() const noexcept { return values_.cols(); }
  const Matrix& values() const noexcept { return values_; }
  double operator()(Index u, Index c) const { return values_(u, c); }
  auto row(Index u) const { return values_.row(u); }

 private:
  Matrix values_;
};

/// Edge and non-edge samples used by the stochastic loss.
struct PairBatch {
  std::vector<std::pair<Node, Node>> edges;
  std::vector<std::pair<Node, Node>> non_edges;
  std::size_t batch_size = 0;

  bool empty() const noexcept { return edges.empty() && non_edges.empty(); }
};

/// Lower clamp on <F_u, F_v> inside the edge log term; caps a single
/// edge's loss at -log(-expm1(-1e-10)) ~= 23.03.
inline constexpr double kMinEdgeDot = 1e-10;

/// 1 - exp(-<fu, fv>).
inline double edge_probability(const Eigen::Ref<const RowVector>& fu, const Eigen::Ref<const RowVector>& fv) {
  detail::require_shape(fu.size() == fv.size(), "edge_probability: length mismatch");
  return -std::expm1(-fu.dot(fv));
}

/// -log(1 - exp(-x)) with x clamped below at kMinEdgeDot.
inline double edge_nll(double dot) { return -std::log(-std::expm1(-std::max(dot, kMinEdgeDot))); }

/// -d edge_nll / d x, evaluated at the clamped argument:
/// exp(-x) / (1 - exp(-x)) = 1 / expm1(x).
inline double edge_pull(double dot) { return 1.0 / std::expm1(std::max(dot, kMinEdgeDot)); }

struct LossAndGradient {
  double loss = 0.0;
  Matrix gradient;  // N x C, dL/dF
};

namespace detail {

inline void check_full_loss_preconditions(Index f_nodes, const SparseGraph& g) {
  require_shape(f_nodes == static_cast<Index>(g.num_nodes()), "affiliation rows differ from graph node count");
  if (g.num_nodes() < 2) throw Error("balanced loss needs at least two nodes");
  if (g.num_edges() == 0) throw Error("balanced loss undefined: graph has no edges");
  if (g.num_non_edges() == 0) throw Error("balanced loss undefined: graph is complete");
}

inline double row_dot(const Matrix& f, Node u, Node v) { return f.row(u).dot(f.row(v)); }

}  // namespace detail

/// Exact balanced loss over all pairs, using the column-sum cache for the
/// non-edge term.
inline double full_balanced_loss(const AffiliationMatrix& f, const SparseGraph& g) {
  detail::check_full_loss_preconditions(f.num_nodes(), g);
  const Matrix& F = f.values();
  double edge_nll_sum = 0.0;
  double edge_dot_sum = 0.0;
  g.for_each_edge([&](Node u, Node v) {
    const double d = detail::row_dot(F, u, v);
    edge_nll_sum += edge_nll(d);
    edge_dot_sum += d;
  });
  const RowVector s = F.colwise().sum();
  const double non_edge_dot_sum = 0.5 * (s.squaredNorm() - F.squaredNorm()) - edge_dot_sum;
  return edge_nll_sum / static_cast<double>(g.num_edges()) +
         non_edge_dot_sum / static_cast<double>(g.num_non_edges());
}

/// Exact balanced loss and its gradient with respect to F.
inline LossAndGradient full_balanced_loss_and_gradient(const AffiliationMatrix& f, const SparseGraph& g) {
  detail::check_full_loss_preconditions(f.num_nodes(), g);
  const Matrix& F = f.values();
  const double inv_m = 1.0 / static_cast<double>(g.num_edges());
  const double inv_mbar = 1.0 / static_cast<double>(g.num_non_edges());
  const RowVector s = F.colwise().sum();

  LossAndGradient out{0.0, Matrix(F.rows(), F.cols())};
  double edge_nll_sum = 0.0;
  double edge_dot_sum_twice = 0.0;
  RowVector pull(F.cols()), nbr_sum(F.cols());
  for (Node u = 0; u < g.num_nodes(); ++u) {
    pull.setZero();
    nbr_sum.setZero();
    for (Node v : g.neighbors(u)) {
      const double d = detail::row_dot(F, u, v);
      if (u < v) edge_nll_sum += edge_nll(d);
      edge_dot_sum_twice += d;
      pull.noalias() += edge_pull(d) * F.row(v);
      nbr_sum += F.row(v);
    }
    out.gradient.row(u) = -inv_m * pull + inv_mbar * (s - F.row(u) - nbr_sum);
  }
  const double non_edge_dot_sum = 0.5 * (s.squaredNorm() - F.squaredNorm()) - 0.5 * edge_dot_sum_twice;
  out.loss = edge_nll_sum * inv_m + non_edge_dot_sum * inv_mbar;
  return out;
}

/// Sampled balanced loss: mean edge term over batch.edges plus mean
/// non-edge term over batch.non_edges (an empty list contributes 0).
inline double stochastic_balanced_loss(const AffiliationMatrix& f, const PairBatch& batch) {
  if (batch.empty()) throw Error("stochastic_balanced_loss: empty batch");
  const Matrix& F = f.values();
  double e = 0.0, n = 0.0;
  for (auto [u, v] : batch.edges) e += edge_nll(detail::row_dot(F, u, v));
  for (auto [u, v] : batch.non_edges) n += detail::row_dot(F, u, v);
  if (!batch.edges.empty()) e /= static_cast<double>(batch.edges.size());
  if (!batch.non_edges.empty()) n /= static_cast<double>(batch.non_edges.size());
  return e + n;
}

inline LossAndGradient stochastic_balanced_loss_and_gradient(const AffiliationMatrix& f, const PairBatch& batch) {
  if (batch.empty()) throw Error("stochastic_balanced_loss: empty batch");
  const Matrix& F = f.values();
  LossAndGradient out{0.0, Matrix::Zero(F.rows(), F.cols())};
  if (!batch.edges.empty()) {
    const double w = 1.0 / static_cast<double>(batch.edges.size());
    double e = 0.0;
    for (auto [u, v] : batch.edges) {
      const double d = detail::row_dot(F, u, v);
      e += edge_nll(d);
      const double c = w * edge_pull(d);
      out.gradient.row(u) -= c * F.row(v);
      out.gradient.row(v) -= c * F.row(u);
    }
    out.loss += e * w;
  }
  if (!batch.non_edges.empty()) {
    const double w = 1.0 / static_cast<double>(batch.non_edges.size());
    double n = 0.0;
    for (auto [u, v] : batch.non_edges) {
      n += detail::row_dot(F, u, v);
      out.gradient.row(u) += w * F.row(v);
      out.gradient.row(v) += w * F.row(u);
    }
    out.loss += n * w;
  }
  return out;
}

/// Draws `s` edges and `s` non-edges uniformly with replacement. Edges
/// come from a uniform CSR slot; non-edges by rejection over ordered
/// pairs. Both are returned as (min, max).
inline PairBatch sample_pair_batch(const SparseGraph& g, std::size_t s, Rng& rng) {
  PairBatch batch;
  batch.batch_size = s;
  if (s == 0) return batch;
  if (g.num_edges() == 0) throw Error("sample_pair_batch: graph has no edges");
  if (g.num_non_edges() == 0) throw Error("sample_pair_batch: graph has no non-edges");

  batch.edges.reserve(s);
  batch.non_edges.reserve(s);
  std::uniform_int_distribution<std::size_t> slot(0, 2 * g.num_edges() - 1);
  for (std::size_t i = 0; i < s; ++i) batch.edges.push_back(g.edge_at_slot(slot(rng)));

  std::uniform_int_distribution<Node> node(0, g.num_nodes() - 1);
  const std::size_t max_attempts = 1000 * s;
  std::size_t attempts = 0;
  while (batch.non_edges.size() < s) {
    if (++attempts > max_attempts)
      throw Error("sample_pair_batch: graph too dense for rejection sampling of non-edges");
    const Node u = node(rng);
    const Node v = node(rng);
    if (u == v || g.has_edge(u, v)) continue;
    batch.non_edges.emplace_back(std::min(u, v), std::max(u, v));
  }
  return batch;
}

/// Samples a graph from the Bernoulli-Poisson model: every unordered pair
/// u < v is an edge independently with probability 1 - exp(-<F_u, F_v>).
inline SparseGraph generate_bp_graph(const AffiliationMatrix& f, Rng& rng) {
  const Matrix& F = f.values();
  const Node n = static_cast<Node>(F.rows());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<Node, Node>> edges;
  for (Node u = 0; u < n; ++u)
    for (Node v = u + 1; v < n; ++v) {
      const double p = -std::expm1(-detail::row_dot(F, u, v));
      if (unif(rng) < p) edges.emplace_back(u, v);
    }
  return SparseGraph::from_edges(n, edges);
}

}  // namespace nocd
