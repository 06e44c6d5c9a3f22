// Planted overlapping communities sampled from the Bernoulli-Poisson
// model, with optional node attributes derived from the true membership.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "nocd/bp.hpp"
#include "nocd/graph.hpp"

namespace nocd {

struct PlantedConfig {
  Node num_nodes = 300;
  Index num_communities = 5;
  /// <F_u, F_v> for two members of the same community; ln 4 gives p = 0.75.
  double within_dot = std::numbers::ln2 * 2.0;
  /// <F_u, F_v> shared by every pair, carried by one extra column of F.
  /// Zero keeps pairs with no shared community edge-free.
  double background_dot = 0.0;
  /// Probability that a node joins a second community.
  double overlap_prob = 0.1;
  /// Attributes: membership columns with each bit flipped at this rate,
  /// followed by `noise_columns` Bernoulli(noise_density) columns.
  bool informative_attributes = true;
  double flip_rate = 0.1;
  std::size_t noise_columns = 0;
  double noise_density = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_nodes < 2) throw Error("planted model: need at least two nodes");
    if (num_communities < 1 || num_communities > static_cast<Index>(num_nodes))
      throw Error("planted model: community count must lie in [1, N]");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(within_dot >= 0.0) || !(background_dot >= 0.0) || !std::isfinite(within_dot) ||
        !std::isfinite(background_dot))
      throw Error("planted model: dot products must be finite and non-negative");
    if (!prob(overlap_prob) || !prob(flip_rate) || !prob(noise_density))
      throw Error("planted model: probabilities must lie in [0, 1]");
    if (!informative_attributes && noise_columns == 0)
      throw Error("planted model: noise-only attributes need at least one column");
  }
};

struct PlantedInstance {
  /// Generating affiliations, including the trailing background column.
  AffiliationMatrix f;
  SparseGraph graph;
  GroundTruth truth;
  FeatureMatrix attributes;
};

/// Deterministic in cfg.seed. Membership, edges and attributes draw from
/// separate streams, so changing attribute settings leaves the graph as is.
inline PlantedInstance generate_planted(const PlantedConfig& cfg) {
  cfg.validate();
  const Node n = cfg.num_nodes;
  const Index c = cfg.num_communities;
  Rng member_rng = make_rng(cfg.seed, 11);
  Rng edge_rng = make_rng(cfg.seed, 12);
  Rng attr_rng = make_rng(cfg.seed, 13);

  std::vector<std::vector<Node>> comms(static_cast<std::size_t>(c));
  std::uniform_int_distribution<Index> pick(0, c - 1);
  std::bernoulli_distribution overlap(cfg.overlap_prob);
  for (Node u = 0; u < n; ++u) {
    const Index first = pick(member_rng);
    comms[static_cast<std::size_t>(first)].push_back(u);
    if (c > 1 && overlap(member_rng)) {
      Index second = pick(member_rng);
      while (second == first) second = pick(member_rng);
      comms[static_cast<std::size_t>(second)].push_back(u);
    }
  }
  GroundTruth truth(n, std::move(comms));
  const Matrix membership = truth.membership_matrix();

  Matrix f(n, c + 1);
  f.leftCols(c) = std::sqrt(cfg.within_dot) * membership;
  f.col(c).setConstant(std::sqrt(cfg.background_dot));
  AffiliationMatrix fm(std::move(f));
  SparseGraph graph = generate_bp_graph(fm, edge_rng);

  const Index informative = cfg.informative_attributes ? c : 0;
  Matrix x(n, informative + static_cast<Index>(cfg.noise_columns));
  std::bernoulli_distribution flip(cfg.flip_rate), noise(cfg.noise_density);
  for (Index u = 0; u < x.rows(); ++u) {
    for (Index j = 0; j < informative; ++j) x(u, j) = (membership(u, j) > 0.0) != flip(attr_rng) ? 1.0 : 0.0;
    for (Index j = informative; j < x.cols(); ++j) x(u, j) = noise(attr_rng) ? 1.0 : 0.0;
  }
  return {std::move(fm), std::move(graph), std::move(truth), FeatureMatrix::from_dense_auto(std::move(x))};
}

}  // namespace nocd
