#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

namespace nocd {
namespace {

TEST(DenseForward, Cases) {
  std::mt19937_64 rng(1);
  const Matrix w = testing::random_nonneg(4, 3, rng);
  EXPECT_EQ(dense_forward(Matrix(Matrix::Identity(4, 4)), w), w);
  Matrix x(1, 2), v(2, 1);
  x << 1, 2;
  v << 3, 4;
  EXPECT_EQ(dense_forward(x, v)(0, 0), 11.0);
  EXPECT_THROW(dense_forward(x, w), ShapeError);
}

TEST(DenseForward, SparseMatchesDenseOracle) {
  std::mt19937_64 rng(2);
  Matrix x = testing::random_nonneg(80, 30, rng);
  x = (x.array() < 0.2).select(x, 0.0);
  const Matrix w = testing::random_nonneg(30, 7, rng, -1.0, 1.0);
  Matrix oracle = Matrix::Zero(80, 7);
  for (Index i = 0; i < 80; ++i)
    for (Index j = 0; j < 7; ++j)
      for (Index k = 0; k < 30; ++k) oracle(i, j) += x(i, k) * w(k, j);
  const Matrix got = dense_forward(FeatureMatrix(SparseMatrix(x.sparseView())), w);
  EXPECT_LE(testing::relative_error(got, oracle), 1e-12);
}

TEST(Spmm, Cases) {
  const NormalizedAdjacency id = normalize_adjacency(SparseGraph::from_edges(3, {}));
  Matrix x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(spmm(id, x), x);

  const std::vector<std::pair<Node, Node>> e{{0, 1}};
  Matrix y(2, 1);
  y << 1, 3;
  const Matrix out = spmm(normalize_adjacency(SparseGraph::from_edges(2, e)), y);
  EXPECT_DOUBLE_EQ(out(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(out(1, 0), 2.0);
}

TEST(Spmm, MatchesDenseOracle) {
  std::mt19937_64 rng(3);
  const auto edges = testing::random_edge_set(100, 0.05, rng);
  const Matrix x = testing::random_nonneg(100, 6, rng, -1.0, 1.0);
  const Matrix oracle = testing::dense_normalized_adjacency(100, edges) * x;
  EXPECT_LE(testing::relative_error(spmm(normalize_adjacency(testing::graph_of(100, edges)), x), oracle), 1e-12);
}

TEST(Relu, ForwardAndMask) {
  Matrix x(1, 3);
  x << -1, 0, 2;
  Matrix expect(1, 3);
  expect << 0, 0, 2;
  EXPECT_EQ(relu(x), expect);
  const Matrix g = relu_backward(Matrix::Ones(1, 3), x);
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_EQ(g(0, 1), 0.0);  // subgradient at 0 is 0
  EXPECT_EQ(g(0, 2), 1.0);
  const Matrix neg = -Matrix::Ones(2, 2);
  EXPECT_EQ(relu(neg), Matrix::Zero(2, 2));
  EXPECT_EQ(relu_backward(Matrix::Ones(2, 2), neg), Matrix::Zero(2, 2));
}

TEST(BatchNorm, NormalizesColumns) {
  Matrix x(4, 1);
  x << 3, 7, 3, 7;  // mean 5, variance 4
  RowVector gamma = RowVector::Ones(1), beta = RowVector::Zero(1);
  RowVector rm = RowVector::Zero(1), rv = RowVector::Ones(1);
  const Matrix y = batchnorm_forward(x, gamma, beta, rm, rv, Mode::train);
  EXPECT_NEAR(y.mean(), 0.0, 1e-15);
  EXPECT_NEAR(y.array().square().mean(), 4.0 / (4.0 + BatchNorm::eps), 1e-12);
  EXPECT_NEAR(rm(0), 0.5, 1e-15);        // 0.9 * 0 + 0.1 * 5
  EXPECT_NEAR(rv(0), 0.9 + 0.4, 1e-15);  // 0.9 * 1 + 0.1 * 4
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  std::mt19937_64 rng(4);
  const Matrix x = testing::random_nonneg(6, 3, rng);
  RowVector gamma = RowVector::Zero(3), beta(3), rm = RowVector::Zero(3), rv = RowVector::Ones(3);
  beta << 1, -2, 3;
  const Matrix y = batchnorm_forward(x, gamma, beta, rm, rv, Mode::train);
  for (Index i = 0; i < 6; ++i) EXPECT_EQ(y.row(i), beta);
}

TEST(BatchNorm, SingleRowTrainIsError) {
  RowVector g = RowVector::Ones(2), b = RowVector::Zero(2), rm = RowVector::Zero(2), rv = RowVector::Ones(2);
  EXPECT_THROW(batchnorm_forward(Matrix::Ones(1, 2), g, b, rm, rv, Mode::train), Error);
  EXPECT_NO_THROW(batchnorm_forward(Matrix::Ones(1, 2), g, b, rm, rv, Mode::inference));
}

TEST(BatchNorm, InferenceUsesRunningStats) {
  Matrix x(2, 1);
  x << 1, 3;
  RowVector g = RowVector::Ones(1), b = RowVector::Zero(1), rm(1), rv(1);
  rm << 1.0;
  rv << 4.0;
  const Matrix y = batchnorm_forward(x, g, b, rm, rv, Mode::inference);
  EXPECT_NEAR(y(1, 0), 2.0 / std::sqrt(4.0 + BatchNorm::eps), 1e-15);
  EXPECT_EQ(rm(0), 1.0);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  Matrix x = testing::random_nonneg(7, 4, rng, -2.0, 2.0);
  RowVector gamma = testing::random_nonneg(1, 4, rng, 0.5, 1.5), beta = testing::random_nonneg(1, 4, rng);
  const Matrix weights = testing::random_nonneg(7, 4, rng, -1.0, 1.0);  // loss = sum(weights .* y)
  RowVector rm = RowVector::Zero(4), rv = RowVector::Ones(4);
  auto loss = [&] {
    RowVector m = rm, v = rv;
    return batchnorm_forward(x, gamma, beta, m, v, Mode::train).cwiseProduct(weights).sum();
  };
  BatchNormCache cache;
  RowVector m = rm, v = rv;
  batchnorm_forward(x, gamma, beta, m, v, Mode::train, &cache);
  const BatchNormGrad g = batchnorm_backward(weights, gamma, cache);
  EXPECT_LT(testing::relative_error(g.x, testing::numeric_gradient(x, loss)), 1e-4);
  EXPECT_LT(testing::relative_error(g.gamma, testing::numeric_gradient(gamma, loss)), 1e-4);
  EXPECT_LT(testing::relative_error(g.beta, testing::numeric_gradient(beta, loss)), 1e-4);
}

TEST(Dropout, IdentityCases) {
  std::mt19937_64 gen(6);
  const Matrix x = testing::random_nonneg(5, 5, gen);
  Rng rng(1);
  EXPECT_EQ(dropout(x, 1.0, rng, Mode::train), x);
  EXPECT_EQ(dropout(x, 0.3, rng, Mode::inference), x);
  EXPECT_THROW(dropout(x, 0.0, rng, Mode::train), Error);
}

TEST(Dropout, PreservesExpectation) {
  Matrix x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  Rng rng(7);
  Matrix sum = Matrix::Zero(2, 3);
  const int masks = 100000;
  for (int i = 0; i < masks; ++i) sum += dropout(x, 0.5, rng, Mode::train);
  EXPECT_LT(((sum / masks) - x).cwiseQuotient(x).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Dropout, SparseMatchesDenseInDistribution) {
  Matrix x(1, 4);
  x << 1, 0, 2, 0;
  const SparseMatrix sx = x.sparseView();
  Rng rng(8);
  double kept = 0;
  for (int i = 0; i < 20000; ++i) {
    const SparseMatrix d = dropout(sx, 0.5, rng, Mode::train);
    kept += Matrix(d)(0, 0) > 0;
    EXPECT_EQ(Matrix(d)(0, 1), 0.0);
  }
  EXPECT_NEAR(kept / 20000, 0.5, 0.02);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix p = Matrix::Constant(2, 2, 1.0);
  auto mom = Moments<Matrix>::zeros_like(p);
  adam_update(p, Matrix::Constant(2, 2, 0.37), mom, 0.01, 1);
  // m_hat / sqrt(v_hat) = c / |c| = 1 at t = 1, up to eps.
  EXPECT_NEAR(p(0, 0), 1.0 - 0.01, 1e-9);
  Matrix q = Matrix::Constant(1, 1, 1.0);
  auto mq = Moments<Matrix>::zeros_like(q);
  adam_update(q, Matrix::Constant(1, 1, -5.0), mq, 0.01, 1);
  EXPECT_NEAR(q(0, 0), 1.01, 1e-9);
}

ParameterSet small_params(std::uint64_t seed) {
  Rng rng(seed);
  return ParameterSet::glorot(5, 4, 3, rng);
}

ParameterGradients zero_grads(const ParameterSet& p) {
  return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Matrix::Zero(p.w2.rows(), p.w2.cols()),
          RowVector::Zero(p.hidden_dim()), RowVector::Zero(p.hidden_dim())};
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  ParameterSet p = small_params(1);
  const ParameterSet before = p;
  for (int i = 0; i < 5; ++i) adam_step(p, zero_grads(p), 0.01, 0.0);
  EXPECT_EQ(p.w1, before.w1);
  EXPECT_EQ(p.w2, before.w2);
  EXPECT_EQ(p.bn_gamma, before.bn_gamma);
  EXPECT_EQ(p.step_count, 5);
}

TEST(Adam, WeightDecayShrinksWeightsOnly) {
  ParameterSet p = small_params(2);
  const ParameterSet before = p;
  for (int i = 0; i < 20; ++i) adam_step(p, zero_grads(p), 0.01, 0.1);
  EXPECT_LT(p.w1.cwiseAbs().sum(), before.w1.cwiseAbs().sum());
  EXPECT_LT(p.w2.cwiseAbs().sum(), before.w2.cwiseAbs().sum());
  EXPECT_EQ(p.bn_gamma, before.bn_gamma);
  EXPECT_EQ(p.bn_beta, before.bn_beta);
}

TEST(Glorot, WithinLimitAndSeeded) {
  const ParameterSet a = small_params(3), b = small_params(3);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.w1.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 9.0));
  EXPECT_EQ(a.bn_running_var, RowVector::Ones(4));
}

TEST(Checkpoint, RoundTripIsExact) {
  ParameterSet p = small_params(4);
  ParameterGradients g = zero_grads(p);
  g.w1.setConstant(0.3);
  g.bn_beta.setConstant(-0.1);
  adam_step(p, g, 1e-3, 1e-2);
  std::stringstream buf;
  write_checkpoint(buf, p);
  EXPECT_EQ(read_checkpoint(buf), p);

  std::istringstream bad("not-a-checkpoint 1\n");
  EXPECT_THROW(read_checkpoint(bad), ParseError);
}

}  // namespace
}  // namespace nocd
