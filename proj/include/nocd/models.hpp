// The three ways of producing an affiliation matrix F: a two-layer GCN,
// a two-layer MLP, and F as a free non-negative variable. Plus the
// thresholding that turns F into a cover.
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nocd/bp.hpp"
#include "nocd/nn.hpp"

namespace nocd {

enum class ModelKind { gcn, mlp, free_variable };
enum class InputKind { attributes, adjacency, none };

class ModelVariant {
 public:
  constexpr ModelVariant(ModelKind kind, InputKind input) : kind_(kind), input_(input) {
    if ((kind == ModelKind::free_variable) != (input == InputKind::none))
      throw Error("free-variable model takes no input; neural models need one");
  }

  static constexpr ModelVariant nocd_x() { return {ModelKind::gcn, InputKind::attributes}; }
  static constexpr ModelVariant nocd_g() { return {ModelKind::gcn, InputKind::adjacency}; }
  static constexpr ModelVariant mlp_x() { return {ModelKind::mlp, InputKind::attributes}; }
  static constexpr ModelVariant mlp_g() { return {ModelKind::mlp, InputKind::adjacency}; }
  static constexpr ModelVariant free_variable() { return {ModelKind::free_variable, InputKind::none}; }

  static ModelVariant parse(std::string_view name) {
    if (name == "nocd-x") return nocd_x();
    if (name == "nocd-g") return nocd_g();
    if (name == "mlp-x") return mlp_x();
    if (name == "mlp-g") return mlp_g();
    if (name == "free") return free_variable();
    throw Error("unknown model variant '" + std::string(name) + "'");
  }

  std::string name() const {
    switch (kind_) {
      case ModelKind::gcn: return input_ == InputKind::attributes ? "nocd-x" : "nocd-g";
      case ModelKind::mlp: return input_ == InputKind::attributes ? "mlp-x" : "mlp-g";
      case ModelKind::free_variable: return "free";
    }
    return "?";
  }

  constexpr ModelKind kind() const noexcept { return kind_; }
  constexpr InputKind input() const noexcept { return input_; }
  constexpr bool is_neural() const noexcept { return kind_ != ModelKind::free_variable; }
  constexpr bool operator==(const ModelVariant&) const = default;

 private:
  ModelKind kind_;
  InputKind input_;
};

// ---------------------------------------------------------------------------
// Neural encoders
// ---------------------------------------------------------------------------

/// Intermediate values of one recorded forward pass, consumed by
/// encoder_backward. Dropout masks and batch statistics are replayed
/// exactly.
struct ForwardTape {
  bool recorded = false;
  const NormalizedAdjacency* propagation = nullptr;  // null for the MLP
  FeatureMatrix x_dropped;
  BatchNormCache bn;
  Matrix bn_out;      // pre-ReLU hidden activations
  Matrix hidden;      // dropped-out hidden activations fed to W2
  Matrix hidden_scale;
  Matrix out_pre;     // pre-ReLU output
};

namespace detail {

inline Matrix propagate(const NormalizedAdjacency* a_hat, Matrix x) {
  return a_hat ? spmm(*a_hat, x) : x;
}

/// dropout -> [A_hat] -> W1 -> batchnorm -> ReLU -> dropout -> [A_hat] -> W2 -> ReLU
inline AffiliationMatrix encoder_forward(const NormalizedAdjacency* a_hat, const FeatureMatrix& x, ParameterSet& p,
                                         Mode mode, double keep, Rng& rng, ForwardTape* tape) {
  detail::require_shape(x.num_features() == p.input_dim(), "encoder: feature dimension differs from W1 rows");
  if (a_hat) detail::require_shape(a_hat->num_nodes() == x.num_nodes(), "encoder: adjacency size differs from rows");
  p.validate();

  FeatureMatrix x_drop = dropout(x, keep, rng, mode);
  // (A_hat X) W1 == A_hat (X W1); the right-hand order keeps the sparse
  // product narrow.
  Matrix z1 = propagate(a_hat, dense_forward(x_drop, p.w1));
  BatchNormCache bn;
  Matrix b = batchnorm_forward(z1, p.bn_gamma, p.bn_beta, p.bn_running_mean, p.bn_running_var, mode, &bn);
  Matrix h_scale;
  Matrix h = dropout(relu(b), keep, rng, mode, &h_scale);
  Matrix z2 = propagate(a_hat, dense_forward(h, p.w2));
  AffiliationMatrix f(relu(z2));

  if (tape) {
    tape->recorded = true;
    tape->propagation = a_hat;
    tape->x_dropped = std::move(x_drop);
    tape->bn = std::move(bn);
    tape->bn_out = std::move(b);
    tape->hidden = std::move(h);
    tape->hidden_scale = std::move(h_scale);
    tape->out_pre = std::move(z2);
  }
  return f;
}

}  // namespace detail

/// F = ReLU(A_hat ReLU(BN(A_hat X W1)) W2) with dropout before each layer.
inline AffiliationMatrix gcn_forward(const NormalizedAdjacency& a_hat, const FeatureMatrix& x, ParameterSet& params,
                                     Mode mode, double keep, Rng& rng, ForwardTape* tape = nullptr) {
  return detail::encoder_forward(&a_hat, x, params, mode, keep, rng, tape);
}

/// F = ReLU(ReLU(BN(X W1)) W2) with the same dropout placement as the GCN.
inline AffiliationMatrix mlp_forward(const FeatureMatrix& x, ParameterSet& params, Mode mode, double keep, Rng& rng,
                                     ForwardTape* tape = nullptr) {
  return detail::encoder_forward(nullptr, x, params, mode, keep, rng, tape);
}

/// Reverse pass through a recorded forward. `grad_f` is dL/dF. The
/// returned gradients exclude weight decay (adam_step adds it).
inline ParameterGradients encoder_backward(const ForwardTape& tape, const ParameterSet& p, const Matrix& grad_f) {
  if (!tape.recorded) throw Error("backward called before a forward pass was recorded");
  detail::require_shape(grad_f.rows() == tape.out_pre.rows() && grad_f.cols() == tape.out_pre.cols(),
                        "backward: gradient shape differs from output");
  ParameterGradients g;
  Matrix g_p2 = detail::propagate(tape.propagation, relu_backward(grad_f, tape.out_pre));
  g.w2 = tape.hidden.transpose() * g_p2;
  Matrix g_hidden = (g_p2 * p.w2.transpose()).cwiseProduct(tape.hidden_scale);
  BatchNormGrad bn = batchnorm_backward(relu_backward(g_hidden, tape.bn_out), p.bn_gamma, tape.bn);
  g.bn_gamma = std::move(bn.gamma);
  g.bn_beta = std::move(bn.beta);
  g.w1 = dense_weight_grad(tape.x_dropped, detail::propagate(tape.propagation, std::move(bn.x)));
  return g;
}

// ---------------------------------------------------------------------------
// Free-variable model
// ---------------------------------------------------------------------------

namespace detail {

/// Conductance cut / min(vol(S), vol(V \ S)) of the closed neighborhood
/// of u. A neighborhood with an empty complement volume scores 0 when it
/// has no cut edges.
inline double neighborhood_conductance(const SparseGraph& g, Node u, std::vector<char>& mark) {
  auto nbrs = g.neighbors(u);
  mark[u] = 1;
  for (Node v : nbrs) mark[v] = 1;
  std::size_t vol = g.degree(u), cut = 0;
  for (Node v : nbrs) {
    vol += g.degree(v);
    for (Node w : g.neighbors(v)) cut += !mark[w];
  }
  mark[u] = 0;
  for (Node v : nbrs) mark[v] = 0;
  const std::size_t total = 2 * g.num_edges();
  const std::size_t denom = std::min(vol, total - vol);
  if (denom == 0) return cut == 0 ? 0.0 : 1.0;
  return static_cast<double>(cut) / static_cast<double>(denom);
}

}  // namespace detail

/// Number of random members given to a community that received no
/// locally minimal seed.
inline constexpr std::size_t kRandomSeedCommunitySize = 10;

/// Seeds F with locally minimal closed neighborhoods: N[u] is locally
/// minimal when its conductance is <= that of N[v] for every neighbor v.
/// Seeds are taken in ascending (conductance, id) order; choosing u makes
/// its neighbors ineligible. Columns left without a seed get
/// kRandomSeedCommunitySize random members. Entries are 0 or 1.
inline AffiliationMatrix free_variable_init(const SparseGraph& g, Index num_communities, Rng& rng) {
  if (num_communities < 1) throw Error("free_variable_init: need at least one community");
  if (g.num_edges() == 0) throw Error("free_variable_init: graph has no edges");
  const Node n = g.num_nodes();

  std::vector<double> phi(n, 1.0);
  std::vector<char> mark(n, 0);
  for (Node u = 0; u < n; ++u)
    if (g.degree(u) > 0) phi[u] = detail::neighborhood_conductance(g, u, mark);

  std::vector<Node> minima;
  for (Node u = 0; u < n; ++u) {
    if (g.degree(u) == 0) continue;
    auto nb = g.neighbors(u);
    if (std::all_of(nb.begin(), nb.end(), [&](Node v) { return phi[u] <= phi[v]; })) minima.push_back(u);
  }
  std::stable_sort(minima.begin(), minima.end(), [&](Node a, Node b) { return phi[a] < phi[b]; });

  Matrix f = Matrix::Zero(n, num_communities);
  std::vector<char> ineligible(n, 0);
  Index next = 0;
  for (Node u : minima) {
    if (next == num_communities) break;
    if (ineligible[u]) continue;
    f(u, next) = 1.0;
    for (Node v : g.neighbors(u)) {
      f(v, next) = 1.0;
      ineligible[v] = 1;
    }
    ++next;
  }
  std::vector<Node> order(n);
  for (; next < num_communities; ++next) {
    std::iota(order.begin(), order.end(), Node{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t take = std::min<std::size_t>(kRandomSeedCommunitySize, n);
    for (std::size_t i = 0; i < take; ++i) f(order[i], next) = 1.0;
  }
  return AffiliationMatrix(std::move(f));
}

/// F plus its Adam state, for projected gradient descent.
struct FreeVariableState {
  Matrix f;
  Moments<Matrix> moments;
  std::int64_t step_count = 0;

  explicit FreeVariableState(const AffiliationMatrix& init)
      : f(init.values()), moments(Moments<Matrix>::zeros_like(init.values())) {}

  AffiliationMatrix affiliations() const { return AffiliationMatrix(f); }
};

/// Adam step on F followed by the projection F = max(0, F).
inline void free_variable_step(FreeVariableState& state, const Matrix& grad, double lr) {
  detail::require_shape(grad.rows() == state.f.rows() && grad.cols() == state.f.cols(),
                        "free_variable_step: gradient shape differs from F");
  adam_update(state.f, grad, state.moments, lr, ++state.step_count);
  state.f = state.f.cwiseMax(0.0);
}

// ---------------------------------------------------------------------------
// Thresholding
// ---------------------------------------------------------------------------

struct CommunityAssignment {
  Cover cover;
  double threshold_used = 0.5;

  bool member(Node u, std::size_t c) const { return cover.contains(u, c); }
};

/// Node u joins community c iff F(u, c) >= rho.
inline CommunityAssignment assign_communities(const AffiliationMatrix& f, double rho) {
  if (!(rho > 0.0)) throw Error("assign_communities: threshold must be positive");
  const Matrix& F = f.values();
  std::vector<std::vector<Node>> comms(static_cast<std::size_t>(F.cols()));
  for (Index u = 0; u < F.rows(); ++u)
    for (Index c = 0; c < F.cols(); ++c)
      if (F(u, c) >= rho) comms[static_cast<std::size_t>(c)].push_back(static_cast<Node>(u));
  return {Cover(static_cast<Node>(F.rows()), std::move(comms)), rho};
}

}  // namespace nocd
