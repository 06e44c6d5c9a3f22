// Training loops for every model variant: stochastic (sampled pairs) and
// full-batch gradients, periodic full-loss monitoring with early
// stopping and best-checkpoint return, the batch-size convergence
// experiment, loss-based variant selection, and the inductive hold-out
// protocol.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <variant>
#include <vector>

#include "nocd/bp.hpp"
#include "nocd/io.hpp"
#include "nocd/metrics.hpp"
#include "nocd/models.hpp"
#include "nocd/nn.hpp"
#include "nocd/parallel.hpp"

namespace nocd {

/// Defaults for a variant; only the learning rate differs.
inline TrainConfig default_config(ModelVariant variant) {
  TrainConfig cfg;
  if (!variant.is_neural()) cfg.learning_rate = TrainConfig::kFreeVariableLearningRate;
  return cfg;
}

namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t dropout = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t split = 4;
}  // namespace stream

struct TraceEntry {
  std::size_t epoch = 0;
  std::uint64_t entries_accessed = 0;
  double full_loss = 0.0;
};

enum class StopReason { patience, max_epochs };

inline const char* to_string(StopReason r) { return r == StopReason::patience ? "patience" : "max_epochs"; }

struct TrainTrace {
  std::vector<TraceEntry> evaluations;
  StopReason stopped_reason = StopReason::max_epochs;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
};

/// Patience counted in evaluations: stop at the first evaluation whose
/// index is `patience` or more past the best one. Only a strictly lower
/// loss counts as an improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the next evaluation; returns true when training should stop.
  bool update(double loss) {
    const std::size_t idx = count_++;
    improved_ = loss < best_loss_;
    if (improved_) {
      best_loss_ = loss;
      best_index_ = idx;
    }
    return idx - best_index_ >= patience_;
  }

  bool improved() const noexcept { return improved_; }
  double best_loss() const noexcept { return best_loss_; }
  std::size_t best_index() const noexcept { return best_index_; }
  std::size_t evaluations() const noexcept { return count_; }

 private:
  std::size_t patience_;
  std::size_t count_ = 0;
  std::size_t best_index_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

enum class GradientMode { stochastic, full_batch };

/// Variant-appropriate encoder input: row-normalized attributes, or the
/// row-normalized adjacency. Empty for the free-variable model.
inline FeatureMatrix model_features(ModelVariant variant, const SparseGraph& g, const FeatureMatrix* attributes) {
  switch (variant.input()) {
    case InputKind::attributes:
      if (!attributes) throw Error(variant.name() + " needs node attributes");
      detail::require_shape(attributes->num_nodes() == static_cast<Index>(g.num_nodes()),
                            "attribute rows differ from graph node count");
      return row_normalize(*attributes);
    case InputKind::adjacency: return row_normalize(adjacency_as_features(g));
    case InputKind::none: break;
  }
  return FeatureMatrix();
}

using ModelState = std::variant<ParameterSet, AffiliationMatrix>;

/// Fresh parameters (Glorot) or a seeded free-variable F, from cfg.seed.
inline ModelState initialize_model(ModelVariant variant, const SparseGraph& g, const FeatureMatrix& features,
                                   Index num_communities, const TrainConfig& cfg) {
  Rng rng = make_rng(cfg.seed, stream::init);
  if (!variant.is_neural()) return free_variable_init(g, num_communities, rng);
  return ParameterSet::glorot(features.num_features(), static_cast<Index>(cfg.hidden_size), num_communities, rng);
}

struct TrainResult {
  ModelVariant variant = ModelVariant::nocd_x();
  /// Parameters (neural) or F (free variable) at the best evaluation.
  ModelState state;
  /// F at the best evaluation, inference mode on the training graph.
  AffiliationMatrix affiliations;
  TrainTrace trace;

  const ParameterSet& parameters() const { return std::get<ParameterSet>(state); }
};

namespace detail {

class NeuralRunner {
 public:
  NeuralRunner(const NormalizedAdjacency* a_hat, const FeatureMatrix& x, ParameterSet p, const TrainConfig& cfg)
      : a_hat_(a_hat), x_(x), p_(std::move(p)), cfg_(cfg) {}

  AffiliationMatrix forward_train(Rng& rng) {
    return encoder_forward(a_hat_, x_, p_, Mode::train, cfg_.dropout_keep, rng, &tape_);
  }
  void apply_gradient(const Matrix& grad_f) {
    adam_step(p_, encoder_backward(tape_, p_, grad_f), cfg_.learning_rate, cfg_.weight_decay);
  }
  AffiliationMatrix evaluate() {
    Rng unused(0);
    return encoder_forward(a_hat_, x_, p_, Mode::inference, 1.0, unused, nullptr);
  }
  ModelState snapshot() const { return p_; }

 private:
  const NormalizedAdjacency* a_hat_;
  const FeatureMatrix& x_;
  ParameterSet p_;
  ForwardTape tape_;
  const TrainConfig& cfg_;
};

class FreeVariableRunner {
 public:
  FreeVariableRunner(const AffiliationMatrix& init, const TrainConfig& cfg) : state_(init), cfg_(cfg) {}

  AffiliationMatrix forward_train(Rng&) { return state_.affiliations(); }
  void apply_gradient(const Matrix& grad_f) { free_variable_step(state_, grad_f, cfg_.learning_rate); }
  AffiliationMatrix evaluate() { return state_.affiliations(); }
  ModelState snapshot() const { return state_.affiliations(); }

 private:
  FreeVariableState state_;
  const TrainConfig& cfg_;
};

struct LoopOutcome {
  TrainTrace trace;
  ModelState best_state;
  AffiliationMatrix best_affiliations;
};

/// The shared epoch loop.
///   runner:   forward_train(Rng&) -> F, apply_gradient(dL/dF),
///             evaluate() -> F, snapshot() -> ModelState
///   gradient: (F, epoch) -> pair<dL/dF, adjacency entries accessed>
///   monitor:  F -> full loss
template <class Runner, class GradientFn, class MonitorFn>
LoopOutcome run_training_loop(Runner& runner, GradientFn&& gradient, MonitorFn&& monitor, const TrainConfig& cfg,
                              Rng& dropout_rng) {
  LoopOutcome out{{}, runner.snapshot(), {}};
  EarlyStopping stopper(cfg.patience_evals);
  std::uint64_t accessed = 0;

  auto evaluate = [&](std::size_t epoch) {
    AffiliationMatrix f = runner.evaluate();
    const double loss = monitor(f);
    out.trace.evaluations.push_back({epoch, accessed, loss});
    const bool stop = stopper.update(loss);
    if (stopper.improved()) {
      out.trace.best_loss = loss;
      out.trace.best_epoch = epoch;
      out.best_state = runner.snapshot();
      out.best_affiliations = std::move(f);
    }
    return stop;
  };

  out.trace.stopped_reason = StopReason::max_epochs;
  if (evaluate(0) && cfg.max_epochs > 0) {
    out.trace.stopped_reason = StopReason::patience;
    return out;
  }
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    AffiliationMatrix f = runner.forward_train(dropout_rng);
    auto [grad, entries] = gradient(f, epoch);
    runner.apply_gradient(grad);
    accessed += entries;
    if (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs) {
      if (evaluate(epoch)) {
        if (epoch < cfg.max_epochs) out.trace.stopped_reason = StopReason::patience;
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Trains from an explicit initial state on already-prepared features
/// (see model_features). All randomness derives from cfg.seed and
/// `stream_salt`.
inline TrainResult train_from(ModelVariant variant, const SparseGraph& g, const FeatureMatrix& features,
                              const ModelState& init, const TrainConfig& cfg, GradientMode mode,
                              std::uint64_t stream_salt = 0) {
  cfg.validate();
  // Preconditions of the loss surface here rather than mid-loop.
  detail::check_full_loss_preconditions(static_cast<Index>(g.num_nodes()), g);

  Rng dropout_rng = make_rng(cfg.seed, stream::dropout + (stream_salt << 8));
  Rng sampler_rng = make_rng(cfg.seed, stream::sampler + (stream_salt << 8));

  auto gradient = [&](const AffiliationMatrix& f, std::size_t) -> std::pair<Matrix, std::uint64_t> {
    if (mode == GradientMode::full_batch)
      return {full_balanced_loss_and_gradient(f, g).gradient, 2ull * g.num_nodes() + 2ull * g.num_edges()};
    PairBatch batch = sample_pair_batch(g, cfg.batch_size, sampler_rng);
    return {stochastic_balanced_loss_and_gradient(f, batch).gradient, 2ull * cfg.batch_size};
  };
  auto monitor = [&](const AffiliationMatrix& f) { return full_balanced_loss(f, g); };

  std::optional<NormalizedAdjacency> a_hat;
  detail::LoopOutcome outcome;
  if (variant.is_neural()) {
    if (variant.kind() == ModelKind::gcn) a_hat = normalize_adjacency(g);
    detail::NeuralRunner runner(a_hat ? &*a_hat : nullptr, features, std::get<ParameterSet>(init), cfg);
    outcome = detail::run_training_loop(runner, gradient, monitor, cfg, dropout_rng);
  } else {
    detail::FreeVariableRunner runner(std::get<AffiliationMatrix>(init), cfg);
    outcome = detail::run_training_loop(runner, gradient, monitor, cfg, dropout_rng);
  }
  return {variant, std::move(outcome.best_state), std::move(outcome.best_affiliations), std::move(outcome.trace)};
}

/// Minibatch training: each epoch samples S edges and S non-edges.
inline TrainResult train(ModelVariant variant, const SparseGraph& g, const FeatureMatrix* attributes,
                         Index num_communities, const TrainConfig& cfg) {
  const FeatureMatrix features = model_features(variant, g, attributes);
  return train_from(variant, g, features, initialize_model(variant, g, features, num_communities, cfg), cfg,
                    GradientMode::stochastic);
}

/// Same loop with the exact full-graph gradient each epoch.
inline TrainResult train_full_batch(ModelVariant variant, const SparseGraph& g, const FeatureMatrix* attributes,
                                    Index num_communities, const TrainConfig& cfg) {
  const FeatureMatrix features = model_features(variant, g, attributes);
  return train_from(variant, g, features, initialize_model(variant, g, features, num_communities, cfg), cfg,
                    GradientMode::full_batch);
}

/// F from trained parameters on a (possibly different) graph and features,
/// inference mode.
inline AffiliationMatrix predict(ModelVariant variant, const ParameterSet& params, const SparseGraph& g,
                                 const FeatureMatrix& features) {
  ParameterSet p = params;
  Rng unused(0);
  if (variant.kind() == ModelKind::gcn)
    return gcn_forward(normalize_adjacency(g), features, p, Mode::inference, 1.0, unused);
  if (variant.kind() == ModelKind::mlp) return mlp_forward(features, p, Mode::inference, 1.0, unused);
  throw Error("predict: the free-variable model has no forward map");
}

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

struct ConvergenceSeries {
  /// Batch size S, or nullopt for full-batch training.
  std::optional<std::size_t> batch_size;
  TrainTrace trace;
};

/// One stochastic run per batch size plus one full-batch run, all from the
/// same initialization. Runs are independent and may execute in parallel;
/// each derives its RNG streams from (cfg.seed, S).
inline std::vector<ConvergenceSeries> convergence_experiment(ModelVariant variant, const SparseGraph& g,
                                                             const FeatureMatrix* attributes, Index num_communities,
                                                             const std::vector<std::size_t>& batch_sizes,
                                                             const TrainConfig& cfg,
                                                             unsigned threads = worker_threads()) {
  for (std::size_t s : batch_sizes)
    if (s == 0) throw Error("convergence_experiment: batch sizes must be positive");
  const FeatureMatrix features = model_features(variant, g, attributes);
  const ModelState init = initialize_model(variant, g, features, num_communities, cfg);

  std::vector<ConvergenceSeries> out(batch_sizes.size() + 1);
  parallel_for(
      out.size(),
      [&](std::size_t i) {
        TrainConfig run_cfg = cfg;
        if (i < batch_sizes.size()) {
          run_cfg.batch_size = batch_sizes[i];
          out[i] = {batch_sizes[i],
                    train_from(variant, g, features, init, run_cfg, GradientMode::stochastic, batch_sizes[i]).trace};
        } else {
          out[i] = {std::nullopt, train_from(variant, g, features, init, run_cfg, GradientMode::full_batch, 0).trace};
        }
      },
      threads);
  return out;
}

// ---------------------------------------------------------------------------
// Variant selection
// ---------------------------------------------------------------------------

inline constexpr double kSelectionTieTolerance = 1e-9;

/// The variant whose best full loss is lower; ties go to NOCD-X.
inline ModelVariant select_by_loss(const TrainTrace& run_x, const TrainTrace& run_g) {
  if (run_x.evaluations.empty() || run_g.evaluations.empty()) throw Error("select_by_loss: empty trace");
  if (std::abs(run_x.best_loss - run_g.best_loss) <= kSelectionTieTolerance) return ModelVariant::nocd_x();
  return run_x.best_loss < run_g.best_loss ? ModelVariant::nocd_x() : ModelVariant::nocd_g();
}

// ---------------------------------------------------------------------------
// Inductive protocol
// ---------------------------------------------------------------------------

struct InductiveSplit {
  double test_fraction = 0.0;
  std::vector<Node> train_nodes;  // ascending
  std::vector<Node> test_nodes;   // ascending
};

/// Random test set of round(t * N) nodes, clamped so that at least one
/// node is tested and at least two are trained on.
inline InductiveSplit make_inductive_split(Node num_nodes, double t, Rng& rng) {
  if (!(t > 0.0 && t < 1.0)) throw Error("inductive split: test fraction must lie in (0, 1)");
  if (num_nodes < 3) throw Error("inductive split: need at least three nodes");
  std::vector<Node> order(num_nodes);
  std::iota(order.begin(), order.end(), Node{0});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(t * num_nodes));
  n_test = std::clamp<std::size_t>(n_test, 1, num_nodes - 2);
  InductiveSplit s{t, {order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end()},
                   {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test)}};
  std::sort(s.train_nodes.begin(), s.train_nodes.end());
  std::sort(s.test_nodes.begin(), s.test_nodes.end());
  return s;
}

struct InductiveResult {
  double test_nmi = 0.0;
  InductiveSplit split;
  TrainTrace trace;
};

/// Trains on the subgraph induced by the training nodes, predicts with a
/// forward pass over the full graph, and scores the test rows. For
/// adjacency input the feature columns are the training nodes, so the
/// input width is the same in both passes. An undefined NMI (empty
/// prediction or truth on the test rows) scores 0.
inline InductiveResult inductive_evaluate(ModelVariant variant, const SparseGraph& g,
                                          const FeatureMatrix* attributes, const GroundTruth& truth, double t,
                                          const TrainConfig& cfg) {
  if (!variant.is_neural()) throw Error("inductive evaluation needs a neural model");
  detail::require_shape(truth.num_nodes() == g.num_nodes(), "truth node count differs from graph");
  Rng split_rng = make_rng(cfg.seed, stream::split);
  InductiveSplit split = make_inductive_split(g.num_nodes(), t, split_rng);
  Subgraph sub = induced_subgraph(g, split.train_nodes);
  if (sub.graph.num_edges() == 0) throw Error("inductive split: training subgraph has no edges");

  FeatureMatrix full_features;
  if (variant.input() == InputKind::attributes) {
    full_features = model_features(variant, g, attributes);
  } else {
    full_features = row_normalize(adjacency_as_features(g).select_columns(split.train_nodes));
  }
  const FeatureMatrix train_features = full_features.select_rows(split.train_nodes);
  const auto num_communities = static_cast<Index>(truth.num_communities());
  TrainResult run = train_from(variant, sub.graph, train_features,
                               initialize_model(variant, sub.graph, train_features, num_communities, cfg), cfg,
                               GradientMode::stochastic);

  const AffiliationMatrix f = predict(variant, run.parameters(), g, full_features);
  const Cover predicted = assign_communities(f, cfg.threshold).cover.restricted_to(split.test_nodes);
  const CoverPair pair = CoverPair::make(truth.restricted_to(split.test_nodes), predicted);
  double nmi = 0.0;
  if (pair.truth.num_communities() > 0 && pair.predicted.num_communities() > 0) nmi = overlapping_nmi(pair);
  return {nmi, std::move(split), std::move(run.trace)};
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << "epoch,entries_accessed,full_loss\n";
  for (const auto& e : trace.evaluations)
    out << e.epoch << ',' << e.entries_accessed << ',' << io::format_fixed(e.full_loss) << '\n';
}

}  // namespace nocd
