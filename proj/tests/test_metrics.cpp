#include <gtest/gtest.h>

#include "support.hpp"

namespace nocd {
namespace {

using Comms = std::vector<std::vector<Node>>;

Comms range_comm(Node lo, Node hi) {
  std::vector<Node> c(hi - lo);
  std::iota(c.begin(), c.end(), lo);
  return {c};
}

/// Two size-600 communities over 1000 nodes overlapping in 200, and a
/// prediction with one community holding every node.
std::pair<Cover, Cover> degenerate_case() {
  const Cover truth(1000, {range_comm(0, 600)[0], range_comm(400, 1000)[0]});
  const Cover predicted(1000, range_comm(0, 1000));
  return {truth, predicted};
}

Cover random_cover(Node n, std::size_t k, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Comms c(k);
  for (auto& comm : c)
    for (Node u = 0; u < n; ++u)
      if (coin(rng)) comm.push_back(u);
  for (auto& comm : c)
    if (comm.empty()) comm.push_back(static_cast<Node>(rng() % n));
  return Cover(n, std::move(c));
}

TEST(SymmetricAgreement, DegenerateAllInOnePrediction) {
  auto [truth, pred] = degenerate_case();
  const CoverPair pair = CoverPair::make(truth, pred);
  EXPECT_DOUBLE_EQ(symmetric_agreement(pair, SetSimilarity::f1), 0.75);
  EXPECT_DOUBLE_EQ(symmetric_agreement(pair, SetSimilarity::jaccard), 0.6);
}

TEST(SymmetricAgreement, SingletonsAgainstFullCommunity) {
  Comms singles;
  for (Node u = 0; u < 10; ++u) singles.push_back({u});
  const CoverPair pair = CoverPair::make(Cover(10, range_comm(0, 10)), Cover(10, singles));
  EXPECT_NEAR(symmetric_agreement(pair, SetSimilarity::f1), 2.0 / 11.0, 1e-15);
}

TEST(SymmetricAgreement, SelfScoreAndRange) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Cover a = random_cover(40, 4, 0.3, rng), b = random_cover(40, 3, 0.3, rng);
    for (auto d : {SetSimilarity::f1, SetSimilarity::jaccard}) {
      EXPECT_DOUBLE_EQ(symmetric_agreement(CoverPair::make(a, a), d), 1.0);
      const double s = symmetric_agreement(CoverPair::make(a, b), d);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  }
}

TEST(SymmetricAgreement, EmptyCoverIsError) {
  const CoverPair pair = CoverPair::make(Cover(5, {{0, 1}}), Cover(5, {{}}));
  EXPECT_EQ(pair.dropped_predicted, 1u);
  EXPECT_THROW(symmetric_agreement(pair, SetSimilarity::f1), Error);
}

TEST(OverlappingNmi, DegenerateAllInOnePredictionScoresZero) {
  auto [truth, pred] = degenerate_case();
  EXPECT_EQ(overlapping_nmi(CoverPair::make(truth, pred)), 0.0);
  EXPECT_EQ(overlapping_nmi(CoverPair::make(pred, truth)), 0.0);
  EXPECT_EQ(overlapping_nmi(CoverPair::make(pred, pred)), 1.0);
}

TEST(OverlappingNmi, IdenticalCoversScoreOne) {
  const Cover c(8, {{0, 1, 2}, {2, 3, 4}, {6}});
  EXPECT_NEAR(overlapping_nmi(CoverPair::make(c, c)), 1.0, 1e-15);
}

TEST(OverlappingNmi, ComplementCoverMatchesReference) {
  const Comms a = range_comm(0, 8), comp = range_comm(8, 16);
  const double ours = overlapping_nmi(CoverPair::make(Cover(16, a), Cover(16, comp)));
  EXPECT_NEAR(ours, testing::reference_nmi(16, a, comp), 1e-12);
  // The 2x2 table is purely anti-correlated, so both sides fall back to
  // the unconditional entropy.
  EXPECT_NEAR(ours, 0.0, 1e-12);
}

TEST(OverlappingNmi, MatchesReferenceOnRandomCovers) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Node n = 10 + static_cast<Node>(rng() % 60);
    const Cover a = random_cover(n, 1 + rng() % 5, 0.25, rng), b = random_cover(n, 1 + rng() % 5, 0.25, rng);
    EXPECT_NEAR(overlapping_nmi(CoverPair::make(a, b)), testing::reference_nmi(n, a.communities(), b.communities()),
                1e-12);
  }
}

TEST(OverlappingNmi, SymmetricAndPermutationInvariant) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    const Node n = 50;
    const Cover a = random_cover(n, 4, 0.2, rng), b = random_cover(n, 5, 0.2, rng);
    const double ab = overlapping_nmi(CoverPair::make(a, b));
    EXPECT_NEAR(ab, overlapping_nmi(CoverPair::make(b, a)), 1e-12);

    Comms shuffled = b.communities();
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(ab, overlapping_nmi(CoverPair::make(a, Cover(n, shuffled))), 1e-12);

    std::vector<Node> perm(n);
    std::iota(perm.begin(), perm.end(), Node{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    auto relabel = [&](const Cover& c) {
      Comms out = c.communities();
      for (auto& comm : out)
        for (auto& u : comm) u = perm[u];
      return Cover(n, out);
    };
    EXPECT_NEAR(ab, overlapping_nmi(CoverPair::make(relabel(a), relabel(b))), 1e-12);
  }
}

TEST(OverlappingNmi, NodeCountMismatchIsError) {
  EXPECT_THROW(CoverPair::make(Cover(5, {{0}}), Cover(6, {{0}})), Error);
}

TEST(NmiFromAffiliations, Cases) {
  const Cover truth(6, {{0, 1, 2}, {3, 4, 5}, {2, 3}});
  EXPECT_NEAR(*nmi_from_affiliations(AffiliationMatrix(truth.membership_matrix()), truth, 0.5), 1.0, 1e-15);
  EXPECT_FALSE(nmi_from_affiliations(AffiliationMatrix::zeros(6, 3), truth, 0.5).has_value());
}

TEST(NmiFromAffiliations, RandomBaselineIsNearZero) {
  double sum = 0.0;
  int defined = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Cover truth = random_cover(200, 5, 0.2, rng);
    const AffiliationMatrix f(testing::random_nonneg(200, 5, rng, 0.0, 0.625));  // P(F >= 0.5) = 0.2
    if (auto s = nmi_from_affiliations(f, truth, 0.5)) {
      sum += *s;
      ++defined;
    }
  }
  ASSERT_EQ(defined, 100);
  EXPECT_LT(sum / defined, 0.05);
}

}  // namespace
}  // namespace nocd
