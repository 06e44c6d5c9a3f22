// Minimal differentiable layers for the two-layer GCN / MLP encoders:
// dense and sparse products, ReLU, batch normalization, inverted dropout,
// and Adam with L2 weight decay. Each layer exposes its forward map and a
// matching backward function; the model composes them by hand.
#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "nocd/graph.hpp"
#include "nocd/io.hpp"

namespace nocd {

enum class Mode { train, inference };

struct TrainConfig {
  std::size_t hidden_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double dropout_keep = 0.5;
  std::size_t batch_size = 1000;
  std::size_t max_epochs = 5000;
  std::size_t eval_every = 50;
  std::size_t patience_evals = 10;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  /// Learning rate used by the free-variable model.
  static constexpr double kFreeVariableLearningRate = 5e-2;

  void validate() const {
    if (hidden_size == 0) throw Error("hidden_size must be positive");
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw Error("weight_decay must be non-negative");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw Error("dropout_keep must lie in (0, 1]");
    if (batch_size == 0) throw Error("batch_size must be positive");
    if (eval_every == 0) throw Error("eval_every must be positive");
    if (patience_evals == 0) throw Error("patience_evals must be positive");
    if (!(threshold > 0.0)) throw Error("threshold must be positive");
  }
};

/// First and second Adam moments for one tensor.
template <class T>
struct Moments {
  T m, v;
  static Moments zeros_like(const T& x) { return {T::Zero(x.rows(), x.cols()), T::Zero(x.rows(), x.cols())}; }
  bool operator==(const Moments& o) const { return m == o.m && v == o.v; }
};

struct AdamHyper {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
};

/// One bias-corrected Adam update of `param` at step `t` (1-based).
template <class T, class G>
void adam_update(T& param, const G& grad, Moments<T>& mom, double lr, std::int64_t t) {
  using H = AdamHyper;
  mom.m = H::beta1 * mom.m + (1.0 - H::beta1) * grad;
  mom.v = H::beta2 * mom.v + (1.0 - H::beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(H::beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(H::beta2, static_cast<double>(t));
  param.array() -= lr * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + H::eps);
}

/// Weights, batch-norm state and optimizer state of a two-layer encoder.
struct ParameterSet {
  Matrix w1;  // D x H
  Matrix w2;  // H x C
  RowVector bn_gamma, bn_beta;
  RowVector bn_running_mean, bn_running_var;

  Moments<Matrix> w1_moments, w2_moments;
  Moments<RowVector> gamma_moments, beta_moments;
  std::int64_t step_count = 0;

  Index input_dim() const noexcept { return w1.rows(); }
  Index hidden_dim() const noexcept { return w1.cols(); }
  Index output_dim() const noexcept { return w2.cols(); }

  /// Glorot-uniform weights, gamma = 1, beta = 0, running stats (0, 1),
  /// zero Adam moments.
  static ParameterSet glorot(Index d, Index h, Index c, Rng& rng) {
    ParameterSet p;
    p.w1 = glorot_uniform(d, h, rng);
    p.w2 = glorot_uniform(h, c, rng);
    p.bn_gamma = RowVector::Ones(h);
    p.bn_beta = RowVector::Zero(h);
    p.bn_running_mean = RowVector::Zero(h);
    p.bn_running_var = RowVector::Ones(h);
    p.reset_optimizer();
    return p;
  }

  void reset_optimizer() {
    w1_moments = Moments<Matrix>::zeros_like(w1);
    w2_moments = Moments<Matrix>::zeros_like(w2);
    gamma_moments = Moments<RowVector>::zeros_like(bn_gamma);
    beta_moments = Moments<RowVector>::zeros_like(bn_beta);
    step_count = 0;
  }

  void validate() const {
    const Index h = hidden_dim();
    detail::require_shape(w2.rows() == h, "W2 rows differ from hidden size");
    detail::require_shape(bn_gamma.size() == h && bn_beta.size() == h && bn_running_mean.size() == h &&
                              bn_running_var.size() == h,
                          "batch-norm vectors differ from hidden size");
    if (!(bn_running_var.array() >= 0.0).all()) throw Error("negative running variance");
  }

  static Matrix glorot_uniform(Index rows, Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> unif(-limit, limit);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = unif(rng);
    return m;
  }

  bool operator==(const ParameterSet&) const = default;
};

struct ParameterGradients {
  Matrix w1, w2;
  RowVector bn_gamma, bn_beta;
};

/// Adam step on W1, W2, gamma and beta. The L2 term weight_decay * W is
/// added to the raw gradient of W1 and W2 only.
inline void adam_step(ParameterSet& p, const ParameterGradients& g, double lr, double weight_decay) {
  detail::require_shape(g.w1.rows() == p.w1.rows() && g.w1.cols() == p.w1.cols() &&
                            g.w2.rows() == p.w2.rows() && g.w2.cols() == p.w2.cols() &&
                            g.bn_gamma.size() == p.bn_gamma.size() && g.bn_beta.size() == p.bn_beta.size(),
                        "adam_step: gradient shapes differ from parameters");
  const std::int64_t t = ++p.step_count;
  adam_update(p.w1, Matrix(g.w1 + weight_decay * p.w1), p.w1_moments, lr, t);
  adam_update(p.w2, Matrix(g.w2 + weight_decay * p.w2), p.w2_moments, lr, t);
  adam_update(p.bn_gamma, g.bn_gamma, p.gamma_moments, lr, t);
  adam_update(p.bn_beta, g.bn_beta, p.beta_moments, lr, t);
}

// ---------------------------------------------------------------------------
// Linear maps
// ---------------------------------------------------------------------------

inline Matrix dense_forward(const Matrix& x, const Matrix& w) {
  detail::require_shape(x.cols() == w.rows(), "dense_forward: inner dimensions differ");
  return x * w;
}

inline Matrix dense_forward(const SparseMatrix& x, const Matrix& w) {
  detail::require_shape(x.cols() == w.rows(), "dense_forward: inner dimensions differ");
  return x * w;
}

inline Matrix dense_forward(const FeatureMatrix& x, const Matrix& w) {
  return x.visit([&](const auto& m) { return dense_forward(m, w); });
}

/// x^T g for the weight gradient of a dense layer.
inline Matrix dense_weight_grad(const FeatureMatrix& x, const Matrix& g) {
  return x.visit([&](const auto& m) -> Matrix { return m.transpose() * g; });
}

inline Matrix spmm(const NormalizedAdjacency& a_hat, const Matrix& x) {
  detail::require_shape(a_hat.num_nodes() == x.rows(), "spmm: adjacency size differs from row count");
  return a_hat.matrix() * x;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

/// Gradient through ReLU; the subgradient at 0 is 0.
inline Matrix relu_backward(const Matrix& grad_out, const Matrix& pre_activation) {
  return (pre_activation.array() > 0.0).select(grad_out, 0.0);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BatchNorm {
  static constexpr double eps = 1e-5;
  static constexpr double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
};

struct BatchNormCache {
  Mode mode = Mode::train;
  Matrix normalized;   // x-hat
  RowVector inv_std;   // 1 / sqrt(var + eps), batch or running
};

/// Column-wise batch normalization. Train mode normalizes by the batch
/// mean and (biased) variance and updates the running statistics;
/// inference mode uses the running statistics.
inline Matrix batchnorm_forward(const Matrix& x, const RowVector& gamma, const RowVector& beta,
                                RowVector& running_mean, RowVector& running_var, Mode mode,
                                BatchNormCache* cache = nullptr) {
  detail::require_shape(x.cols() == gamma.size() && x.cols() == beta.size(),
                        "batchnorm: feature dimension differs from parameter length");
  RowVector mean, var;
  if (mode == Mode::train) {
    if (x.rows() < 2) throw Error("batchnorm: train mode needs at least two rows");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean();
    running_mean = BatchNorm::momentum * running_mean + (1.0 - BatchNorm::momentum) * mean;
    running_var = BatchNorm::momentum * running_var + (1.0 - BatchNorm::momentum) * var;
  } else {
    mean = running_mean;
    var = running_var;
  }
  const RowVector inv_std = (var.array() + BatchNorm::eps).rsqrt().matrix();
  Matrix normalized = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = (normalized.array().rowwise() * gamma.array()).rowwise() + beta.array();
  if (cache) *cache = {mode, std::move(normalized), inv_std};
  return out;
}

struct BatchNormGrad {
  Matrix x;
  RowVector gamma, beta;
};

inline BatchNormGrad batchnorm_backward(const Matrix& grad_out, const RowVector& gamma, const BatchNormCache& cache) {
  BatchNormGrad g;
  g.beta = grad_out.colwise().sum();
  g.gamma = grad_out.cwiseProduct(cache.normalized).colwise().sum();
  const Matrix gx_hat = grad_out.array().rowwise() * gamma.array();
  if (cache.mode == Mode::inference) {
    g.x = gx_hat.array().rowwise() * cache.inv_std.array();
    return g;
  }
  const double n = static_cast<double>(grad_out.rows());
  const RowVector sum_g = gx_hat.colwise().sum();
  const RowVector sum_gx = gx_hat.cwiseProduct(cache.normalized).colwise().sum();
  Matrix centered = (n * gx_hat).rowwise() - sum_g;
  centered.array() -= cache.normalized.array().rowwise() * sum_gx.array();
  g.x = (centered.array().rowwise() * (cache.inv_std.array() / n)).matrix();
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout
// ---------------------------------------------------------------------------

/// Train mode: zero each entry with probability 1 - keep and scale the
/// survivors by 1/keep. `scale_out` receives the per-entry multiplier.
/// Inference mode or keep == 1: identity.
inline Matrix dropout(const Matrix& x, double keep, Rng& rng, Mode mode, Matrix* scale_out = nullptr) {
  if (!(keep > 0.0 && keep <= 1.0)) throw Error("dropout: keep must lie in (0, 1]");
  if (mode == Mode::inference || keep == 1.0) {
    if (scale_out) *scale_out = Matrix::Ones(x.rows(), x.cols());
    return x;
  }
  std::bernoulli_distribution survive(keep);
  Matrix scale(x.rows(), x.cols());
  for (Index i = 0; i < scale.size(); ++i) scale.data()[i] = survive(rng) ? 1.0 / keep : 0.0;
  Matrix out = x.cwiseProduct(scale);
  if (scale_out) *scale_out = std::move(scale);
  return out;
}

/// Dropout on the stored entries of a sparse matrix (implicit zeros stay
/// zero, which is the same distribution as dense dropout).
inline SparseMatrix dropout(const SparseMatrix& x, double keep, Rng& rng, Mode mode) {
  if (!(keep > 0.0 && keep <= 1.0)) throw Error("dropout: keep must lie in (0, 1]");
  SparseMatrix out = x;
  if (mode == Mode::inference || keep == 1.0) return out;
  std::bernoulli_distribution survive(keep);
  for (Index i = 0; i < out.nonZeros(); ++i) out.valuePtr()[i] *= survive(rng) ? 1.0 / keep : 0.0;
  return out;
}

inline FeatureMatrix dropout(const FeatureMatrix& x, double keep, Rng& rng, Mode mode) {
  if (x.is_sparse()) return FeatureMatrix(dropout(x.sparse(), keep, rng, mode));
  return FeatureMatrix(dropout(x.dense(), keep, rng, mode));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void write_tensor(std::ostream& out, const char* name, const T& t) {
  out << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (Index r = 0; r < t.rows(); ++r) {
    for (Index c = 0; c < t.cols(); ++c) out << (c ? " " : "") << io::format_exact(t(r, c));
    out << '\n';
  }
}

template <class T>
void read_tensor(std::istream& in, const char* name, T& t) {
  std::string got;
  Index rows = 0, cols = 0;
  if (!(in >> got >> rows >> cols) || got != name)
    throw ParseError(std::string("checkpoint: expected tensor '") + name + "'");
  if constexpr (T::RowsAtCompileTime == 1) {
    if (rows != 1) throw ParseError(std::string("checkpoint: '") + name + "' must be a row vector");
    t.resize(cols);
  } else {
    t.resize(rows, cols);
  }
  std::string tok;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      if (!(in >> tok)) throw ParseError(std::string("checkpoint: truncated tensor '") + name + "'");
      t(r, c) = io::detail::parse_number<double>(tok, 0, "number");
    }
}

}  // namespace detail

inline constexpr const char* kCheckpointMagic = "nocd-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Text checkpoint with a version line and one shape header per tensor.
/// Values use the shortest round-trip representation, so reading back
/// reproduces every double bit for bit.
inline void write_checkpoint(std::ostream& out, const ParameterSet& p) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "step_count " << p.step_count << '\n';
  detail::write_tensor(out, "w1", p.w1);
  detail::write_tensor(out, "w2", p.w2);
  detail::write_tensor(out, "bn_gamma", p.bn_gamma);
  detail::write_tensor(out, "bn_beta", p.bn_beta);
  detail::write_tensor(out, "bn_running_mean", p.bn_running_mean);
  detail::write_tensor(out, "bn_running_var", p.bn_running_var);
  detail::write_tensor(out, "w1_adam_m", p.w1_moments.m);
  detail::write_tensor(out, "w1_adam_v", p.w1_moments.v);
  detail::write_tensor(out, "w2_adam_m", p.w2_moments.m);
  detail::write_tensor(out, "w2_adam_v", p.w2_moments.v);
  detail::write_tensor(out, "gamma_adam_m", p.gamma_moments.m);
  detail::write_tensor(out, "gamma_adam_v", p.gamma_moments.v);
  detail::write_tensor(out, "beta_adam_m", p.beta_moments.m);
  detail::write_tensor(out, "beta_adam_v", p.beta_moments.v);
}

inline ParameterSet read_checkpoint(std::istream& in) {
  std::string magic, key;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) throw ParseError("not a nocd checkpoint");
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  ParameterSet p;
  if (!(in >> key >> p.step_count) || key != "step_count") throw ParseError("checkpoint: missing step_count");
  detail::read_tensor(in, "w1", p.w1);
  detail::read_tensor(in, "w2", p.w2);
  detail::read_tensor(in, "bn_gamma", p.bn_gamma);
  detail::read_tensor(in, "bn_beta", p.bn_beta);
  detail::read_tensor(in, "bn_running_mean", p.bn_running_mean);
  detail::read_tensor(in, "bn_running_var", p.bn_running_var);
  detail::read_tensor(in, "w1_adam_m", p.w1_moments.m);
  detail::read_tensor(in, "w1_adam_v", p.w1_moments.v);
  detail::read_tensor(in, "w2_adam_m", p.w2_moments.m);
  detail::read_tensor(in, "w2_adam_v", p.w2_moments.v);
  detail::read_tensor(in, "gamma_adam_m", p.gamma_moments.m);
  detail::read_tensor(in, "gamma_adam_v", p.gamma_moments.v);
  detail::read_tensor(in, "beta_adam_m", p.beta_moments.m);
  detail::read_tensor(in, "beta_adam_v", p.beta_moments.v);
  p.validate();
  return p;
}

}  // namespace nocd
