// Graph, attribute and cover containers plus the normalizations the
// GCN and the Bernoulli-Poisson loss consume.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "nocd/types.hpp"

namespace nocd {

/// Undirected, unweighted graph in CSR form. Every unordered edge is
/// stored in both endpoint rows; column indices in a row are strictly
/// increasing and there are no self-loops.
class SparseGraph {
 public:
  SparseGraph() : offsets_(1, 0) {}

  /// Builds a graph from an arbitrary edge list. Duplicates and reversed
  /// repeats collapse to one edge; self-loops are dropped and counted in
  /// `*dropped_self_loops` when provided.
  static SparseGraph from_edges(Node num_nodes, std::span<const std::pair<Node, Node>> edges,
                                std::size_t* dropped_self_loops = nullptr) {
    std::vector<std::pair<Node, Node>> directed;
    directed.reserve(edges.size() * 2);
    std::size_t loops = 0;
    for (auto [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes)
        throw Error("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                    ") out of range for " + std::to_string(num_nodes) + " nodes");
      if (u == v) {
        ++loops;
        continue;
      }
      directed.emplace_back(u, v);
      directed.emplace_back(v, u);
    }
    std::sort(directed.begin(), directed.end());
    directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

    SparseGraph g;
    g.offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
    g.indices_.reserve(directed.size());
    for (auto [u, v] : directed) {
      ++g.offsets_[u + 1];
      g.indices_.push_back(v);
    }
    std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
    if (dropped_self_loops) *dropped_self_loops = loops;
    return g;
  }

  Node num_nodes() const noexcept { return static_cast<Node>(offsets_.size() - 1); }
  /// Number of unordered edges.
  std::size_t num_edges() const noexcept { return indices_.size() / 2; }
  std::size_t degree(Node u) const { return offsets_[u + 1] - offsets_[u]; }

  std::span<const Node> neighbors(Node u) const {
    return {indices_.data() + offsets_[u], degree(u)};
  }

  bool has_edge(Node u, Node v) const {
    auto row = neighbors(u);
    return std::binary_search(row.begin(), row.end(), v);
  }

  /// Number of unordered non-adjacent node pairs, N(N-1)/2 - M.
  std::size_t num_non_edges() const noexcept {
    const std::size_t n = num_nodes();
    return n * (n - (n > 0 ? 1 : 0)) / 2 - num_edges();
  }

  /// Unordered edge stored at CSR slot `slot` in [0, 2M), as (min, max).
  std::pair<Node, Node> edge_at_slot(std::size_t slot) const {
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), slot);
    const Node u = static_cast<Node>(std::distance(offsets_.begin(), it) - 1);
    const Node v = indices_[slot];
    return u < v ? std::pair{u, v} : std::pair{v, u};
  }

  /// Calls f(u, v) once per unordered edge with u < v.
  template <class F>
  void for_each_edge(F&& f) const {
    for (Node u = 0; u < num_nodes(); ++u)
      for (Node v : neighbors(u))
        if (u < v) f(u, v);
  }

  std::vector<std::pair<Node, Node>> edge_list() const {
    std::vector<std::pair<Node, Node>> out;
    out.reserve(num_edges());
    for_each_edge([&](Node u, Node v) { out.emplace_back(u, v); });
    return out;
  }

  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  const std::vector<Node>& indices() const noexcept { return indices_; }

  bool operator==(const SparseGraph&) const = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Node> indices_;
};

/// The symmetric GCN propagation matrix D^-1/2 (A + I) D^-1/2.
class NormalizedAdjacency {
 public:
  explicit NormalizedAdjacency(SparseMatrix m) : m_(std::move(m)) {}
  Index num_nodes() const noexcept { return m_.rows(); }
  const SparseMatrix& matrix() const noexcept { return m_; }

 private:
  SparseMatrix m_;
};

inline NormalizedAdjacency normalize_adjacency(const SparseGraph& g) {
  const Node n = g.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (Node u = 0; u < n; ++u) inv_sqrt[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1));

  SparseMatrix m(n, n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * g.num_edges() + n);
  for (Node u = 0; u < n; ++u) {
    bool diag_done = false;
    for (Node v : g.neighbors(u)) {
      if (!diag_done && v > u) {
        trip.emplace_back(u, u, inv_sqrt[u] * inv_sqrt[u]);
        diag_done = true;
      }
      trip.emplace_back(u, v, inv_sqrt[u] * inv_sqrt[v]);
    }
    if (!diag_done) trip.emplace_back(u, u, inv_sqrt[u] * inv_sqrt[u]);
  }
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return NormalizedAdjacency(std::move(m));
}

/// N x D node attributes, stored sparse or dense.
class FeatureMatrix {
 public:
  /// Density below which `from_dense_auto` picks sparse storage.
  static constexpr double kSparseDensity = 0.25;

  FeatureMatrix() : data_(Matrix()) {}
  explicit FeatureMatrix(Matrix dense) : data_(std::move(dense)) {}
  explicit FeatureMatrix(SparseMatrix sparse) : data_(std::move(sparse)) {
    std::get<SparseMatrix>(data_).makeCompressed();
  }

  static FeatureMatrix from_dense_auto(const Matrix& dense) {
    const double nnz = static_cast<double>((dense.array() != 0.0).count());
    const double total = static_cast<double>(std::max<Index>(1, dense.size()));
    if (nnz / total < kSparseDensity) return FeatureMatrix(SparseMatrix(dense.sparseView()));
    return FeatureMatrix(dense);
  }

  bool is_sparse() const noexcept { return std::holds_alternative<SparseMatrix>(data_); }
  const SparseMatrix& sparse() const { return std::get<SparseMatrix>(data_); }
  const Matrix& dense() const { return std::get<Matrix>(data_); }

  Index num_nodes() const {
    return std::visit([](const auto& m) { return m.rows(); }, data_);
  }
  Index num_features() const {
    return std::visit([](const auto& m) { return m.cols(); }, data_);
  }

  Matrix to_dense() const {
    if (is_sparse()) return Matrix(sparse());
    return dense();
  }

  /// Rows `rows` in the given order.
  FeatureMatrix select_rows(std::span<const Node> rows) const {
    if (!is_sparse()) {
      Matrix out(static_cast<Index>(rows.size()), num_features());
      for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = dense().row(rows[i]);
      return FeatureMatrix(std::move(out));
    }
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (SparseMatrix::InnerIterator it(sparse(), rows[i]); it; ++it)
        trip.emplace_back(static_cast<Index>(i), it.col(), it.value());
    SparseMatrix out(static_cast<Index>(rows.size()), num_features());
    out.setFromTriplets(trip.begin(), trip.end());
    return FeatureMatrix(std::move(out));
  }

  /// Columns `cols` in the given order.
  FeatureMatrix select_columns(std::span<const Node> cols) const {
    if (!is_sparse()) {
      Matrix out(num_nodes(), static_cast<Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = dense().col(cols[j]);
      return FeatureMatrix(std::move(out));
    }
    std::vector<Index> remap(static_cast<std::size_t>(num_features()), -1);
    for (std::size_t j = 0; j < cols.size(); ++j) remap[cols[j]] = static_cast<Index>(j);
    std::vector<Eigen::Triplet<double>> trip;
    for (Index r = 0; r < sparse().outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(sparse(), r); it; ++it)
        if (remap[static_cast<std::size_t>(it.col())] >= 0)
          trip.emplace_back(r, remap[static_cast<std::size_t>(it.col())], it.value());
    SparseMatrix out(num_nodes(), static_cast<Index>(cols.size()));
    out.setFromTriplets(trip.begin(), trip.end());
    return FeatureMatrix(std::move(out));
  }

  template <class F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), data_);
  }

 private:
  std::variant<Matrix, SparseMatrix> data_;
};

/// Divides every nonzero row by its L2 norm; zero rows stay zero.
inline FeatureMatrix row_normalize(const FeatureMatrix& x) {
  if (x.is_sparse()) {
    SparseMatrix m = x.sparse();
    for (Index r = 0; r < m.outerSize(); ++r) {
      double sq = 0.0;
      for (SparseMatrix::InnerIterator it(m, r); it; ++it) sq += it.value() * it.value();
      if (sq == 0.0) continue;
      const double inv = 1.0 / std::sqrt(sq);
      for (SparseMatrix::InnerIterator it(m, r); it; ++it) it.valueRef() *= inv;
    }
    return FeatureMatrix(std::move(m));
  }
  Matrix m = x.dense();
  for (Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm > 0.0) m.row(r) /= norm;
  }
  return FeatureMatrix(std::move(m));
}

/// The binary adjacency as an N x N sparse feature matrix (not normalized).
inline FeatureMatrix adjacency_as_features(const SparseGraph& g) {
  const Node n = g.num_nodes();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * g.num_edges());
  for (Node u = 0; u < n; ++u)
    for (Node v : g.neighbors(u)) trip.emplace_back(u, v, 1.0);
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  return FeatureMatrix(std::move(m));
}

struct Subgraph {
  SparseGraph graph;
  /// original_ids[new_id] is the node id in the parent graph.
  std::vector<Node> original_ids;
};

/// Subgraph induced by `keep` (sorted and deduplicated; new ids follow
/// ascending original id).
inline Subgraph induced_subgraph(const SparseGraph& g, std::span<const Node> keep) {
  if (keep.empty()) throw Error("induced_subgraph: empty node set");
  std::vector<Node> ids(keep.begin(), keep.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.back() >= g.num_nodes())
    throw Error("induced_subgraph: node " + std::to_string(ids.back()) + " out of range");

  constexpr Node kAbsent = static_cast<Node>(-1);
  std::vector<Node> remap(g.num_nodes(), kAbsent);
  for (std::size_t i = 0; i < ids.size(); ++i) remap[ids[i]] = static_cast<Node>(i);

  std::vector<std::pair<Node, Node>> edges;
  for (Node u : ids)
    for (Node v : g.neighbors(u))
      if (u < v && remap[v] != kAbsent) edges.emplace_back(remap[u], remap[v]);
  return {SparseGraph::from_edges(static_cast<Node>(ids.size()), edges), std::move(ids)};
}

/// A set of possibly overlapping, possibly empty communities over N nodes.
/// Each community is a strictly increasing list of node ids.
class Cover {
 public:
  Cover() = default;
  Cover(Node num_nodes, std::vector<std::vector<Node>> communities)
      : num_nodes_(num_nodes), communities_(std::move(communities)) {
    for (auto& c : communities_) {
      std::sort(c.begin(), c.end());
      c.erase(std::unique(c.begin(), c.end()), c.end());
      if (!c.empty() && c.back() >= num_nodes_)
        throw Error("cover: node " + std::to_string(c.back()) + " out of range for " +
                    std::to_string(num_nodes_) + " nodes");
    }
  }

  /// Builds a cover from an N x C 0/1 (or boolean-like) matrix.
  static Cover from_membership(const Eigen::Ref<const Matrix>& membership) {
    std::vector<std::vector<Node>> comms(static_cast<std::size_t>(membership.cols()));
    for (Index u = 0; u < membership.rows(); ++u)
      for (Index c = 0; c < membership.cols(); ++c)
        if (membership(u, c) != 0.0) comms[static_cast<std::size_t>(c)].push_back(static_cast<Node>(u));
    return Cover(static_cast<Node>(membership.rows()), std::move(comms));
  }

  Node num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_communities() const noexcept { return communities_.size(); }
  const std::vector<Node>& community(std::size_t c) const { return communities_[c]; }
  const std::vector<std::vector<Node>>& communities() const noexcept { return communities_; }

  bool contains(Node u, std::size_t c) const {
    return std::binary_search(communities_[c].begin(), communities_[c].end(), u);
  }

  std::size_t num_nonempty() const {
    return static_cast<std::size_t>(
        std::count_if(communities_.begin(), communities_.end(), [](const auto& c) { return !c.empty(); }));
  }

  Cover without_empty(std::size_t* dropped = nullptr) const {
    std::vector<std::vector<Node>> kept;
    for (const auto& c : communities_)
      if (!c.empty()) kept.push_back(c);
    if (dropped) *dropped = communities_.size() - kept.size();
    return Cover(num_nodes_, std::move(kept));
  }

  /// Restricts the cover to `nodes`, relabelling nodes[i] as i.
  Cover restricted_to(std::span<const Node> nodes) const {
    constexpr Node kAbsent = static_cast<Node>(-1);
    std::vector<Node> remap(num_nodes_, kAbsent);
    for (std::size_t i = 0; i < nodes.size(); ++i) remap[nodes[i]] = static_cast<Node>(i);
    std::vector<std::vector<Node>> out(communities_.size());
    for (std::size_t c = 0; c < communities_.size(); ++c)
      for (Node u : communities_[c])
        if (remap[u] != kAbsent) out[c].push_back(remap[u]);
    return Cover(static_cast<Node>(nodes.size()), std::move(out));
  }

  /// Dense N x C 0/1 membership matrix.
  Matrix membership_matrix() const {
    Matrix m = Matrix::Zero(num_nodes_, static_cast<Index>(communities_.size()));
    for (std::size_t c = 0; c < communities_.size(); ++c)
      for (Node u : communities_[c]) m(u, static_cast<Index>(c)) = 1.0;
    return m;
  }

  bool operator==(const Cover&) const = default;

 private:
  Node num_nodes_ = 0;
  std::vector<std::vector<Node>> communities_;
};

/// Ground-truth communities; at least one community is non-empty.
using GroundTruth = Cover;

}  // namespace nocd
