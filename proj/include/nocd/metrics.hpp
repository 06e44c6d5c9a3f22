// Agreement between a ground-truth cover and a predicted cover:
// overlapping NMI over binary membership vectors, and the symmetric
// best-match F1 / Jaccard scores.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "nocd/graph.hpp"
#include "nocd/models.hpp"

namespace nocd {

/// Truth and prediction over the same node set, with empty communities
/// removed from both sides.
struct CoverPair {
  Cover truth;
  Cover predicted;
  Node num_nodes = 0;
  std::size_t dropped_predicted = 0;

  static CoverPair make(const Cover& truth, const Cover& predicted) {
    if (truth.num_nodes() != predicted.num_nodes())
      throw Error("cover node counts differ: " + std::to_string(truth.num_nodes()) + " vs " +
                  std::to_string(predicted.num_nodes()));
    CoverPair p;
    p.num_nodes = truth.num_nodes();
    p.truth = truth.without_empty();
    p.predicted = predicted.without_empty(&p.dropped_predicted);
    return p;
  }
};

namespace detail {

/// counts(i, j) = |truth_i ∩ predicted_j|.
inline Eigen::MatrixXd intersection_counts(const Cover& x, const Cover& y) {
  std::vector<std::vector<Index>> y_of_node(x.num_nodes());
  for (std::size_t j = 0; j < y.num_communities(); ++j)
    for (Node u : y.community(j)) y_of_node[u].push_back(static_cast<Index>(j));
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Index>(x.num_communities()),
                                                 static_cast<Index>(y.num_communities()));
  for (std::size_t i = 0; i < x.num_communities(); ++i)
    for (Node u : x.community(i))
      for (Index j : y_of_node[u]) counts(static_cast<Index>(i), j) += 1.0;
  return counts;
}

inline void require_nonempty(const CoverPair& p) {
  if (p.truth.num_communities() == 0) throw Error("truth cover has no non-empty community");
  if (p.predicted.num_communities() == 0) throw Error("predicted cover has no non-empty community");
}

/// -p log2 p for p = count / n.
inline double plogp(double count, double n) {
  if (count <= 0.0) return 0.0;
  const double p = count / n;
  return -p * std::log2(p);
}

inline double community_entropy(double size, double n) { return plogp(size, n) + plogp(n - size, n); }

/// sum_i min_j H*(X_i | Y_j) and sum_i H(X_i).
struct ConditionalEntropy {
  double conditional = 0.0;
  double marginal = 0.0;
};

template <class Counts>
ConditionalEntropy conditional_entropy(const Counts& inter, const std::vector<double>& x_sizes,
                                       const std::vector<double>& y_sizes, double n) {
  ConditionalEntropy out;
  for (std::size_t i = 0; i < x_sizes.size(); ++i) {
    const double hx = community_entropy(x_sizes[i], n);
    double best = hx;
    for (std::size_t j = 0; j < y_sizes.size(); ++j) {
      const double d = inter(static_cast<Index>(i), static_cast<Index>(j));
      const double c = x_sizes[i] - d;
      const double b = y_sizes[j] - d;
      const double a = n - x_sizes[i] - y_sizes[j] + d;
      const double ha = plogp(a, n), hb = plogp(b, n), hc = plogp(c, n), hd = plogp(d, n);
      if (ha + hd >= hb + hc) {
        const double h = std::max(0.0, ha + hb + hc + hd - plogp(b + d, n) - plogp(a + c, n));
        best = std::min(best, h);
      }
    }
    out.conditional += best;
    out.marginal += hx;
  }
  return out;
}

inline std::vector<double> sizes_of(const Cover& c) {
  std::vector<double> s;
  for (const auto& comm : c.communities()) s.push_back(static_cast<double>(comm.size()));
  return s;
}

}  // namespace detail

/// Overlapping NMI (base-2 entropies):
///   1 - (H(X|Y)/H(X) + H(Y|X)/H(Y)) / 2,
/// where H(X|Y) sums over truth communities the best H*(X_i|Y_j), and
/// H*(X_i|Y_j) falls back to H(X_i) when the 2x2 contingency table is
/// anti-correlated. A cover with zero total entropy (every community is
/// the full node set) scores 0, or 1 if both covers are like that.
inline double overlapping_nmi(const CoverPair& pair) {
  detail::require_nonempty(pair);
  const double n = static_cast<double>(pair.num_nodes);
  const auto xs = detail::sizes_of(pair.truth);
  const auto ys = detail::sizes_of(pair.predicted);
  const auto zero_entropy = [&](const std::vector<double>& s) {
    return std::all_of(s.begin(), s.end(), [&](double v) { return v == n; });
  };
  const bool zx = zero_entropy(xs), zy = zero_entropy(ys);
  if (zx || zy) return zx && zy ? 1.0 : 0.0;

  const Eigen::MatrixXd inter = detail::intersection_counts(pair.truth, pair.predicted);
  const auto x_given_y = detail::conditional_entropy(inter, xs, ys, n);
  const Eigen::MatrixXd inter_t = inter.transpose();
  const auto y_given_x = detail::conditional_entropy(inter_t, ys, xs, n);
  const double nmi = 1.0 - 0.5 * (x_given_y.conditional / x_given_y.marginal +
                                  y_given_x.conditional / y_given_x.marginal);
  return std::clamp(nmi, 0.0, 1.0);
}

enum class SetSimilarity { f1, jaccard };

/// Best-match average of a set similarity in both directions:
///   (1/2|S*|) sum_i max_j d(S*_i, S_j) + (1/2|S|) sum_j max_i d(S*_i, S_j).
inline double symmetric_agreement(const CoverPair& pair, SetSimilarity delta) {
  detail::require_nonempty(pair);
  const Eigen::MatrixXd inter = detail::intersection_counts(pair.truth, pair.predicted);
  const auto xs = detail::sizes_of(pair.truth);
  const auto ys = detail::sizes_of(pair.predicted);
  Eigen::MatrixXd sim(inter.rows(), inter.cols());
  for (Index i = 0; i < inter.rows(); ++i)
    for (Index j = 0; j < inter.cols(); ++j) {
      const double d = inter(i, j);
      const double a = xs[static_cast<std::size_t>(i)], b = ys[static_cast<std::size_t>(j)];
      sim(i, j) = delta == SetSimilarity::f1 ? 2.0 * d / (a + b) : d / (a + b - d);
    }
  const double truth_side = sim.rowwise().maxCoeff().mean();
  const double pred_side = sim.colwise().maxCoeff().mean();
  return 0.5 * (truth_side + pred_side);
}

/// Thresholds F at rho and scores the cover against `truth`. Returns
/// nullopt when the thresholded prediction is empty (score undefined).
inline std::optional<double> nmi_from_affiliations(const AffiliationMatrix& f, const GroundTruth& truth, double rho) {
  detail::require_shape(f.num_nodes() == static_cast<Index>(truth.num_nodes()),
                        "affiliation rows differ from truth node count");
  const auto pair = CoverPair::make(truth, assign_communities(f, rho).cover);
  if (pair.predicted.num_communities() == 0 || pair.truth.num_communities() == 0) return std::nullopt;
  return overlapping_nmi(pair);
}

}  // namespace nocd
