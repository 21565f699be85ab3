#include "gradknn/analysis.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gradknn;

namespace {

RateExperimentConfig sine_rate(double sigma, Index replicates = 30) {
  RateExperimentConfig cfg;
  cfg.spec.dim = 2;
  cfg.spec.function = additive_function(2, {{0, TermKind::Sine, 1.0, 1.0}, {1, TermKind::Sine, 1.0, 1.0}});
  cfg.spec.noise_sigma = sigma;
  cfg.spec.seed = 17;
  cfg.grid_n = {200, 400, 800};
  cfg.replicates = replicates;
  return cfg;
}

Dataset small_regression(Index n, std::uint64_t seed) {
  return make_synthetic(sparse_forest_spec(n, 5, 0.3, seed)).data;
}

}  // namespace

TEST(Statistics, QuantileAndMedian) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.9), 9.0);
  EXPECT_DOUBLE_EQ(quantile({5.0}, 0.3), 5.0);
}

TEST(Statistics, LoglogSlopeOfAPowerLaw) {
  const std::vector<double> x{10, 100, 1000};
  const std::vector<double> y{1.0, 0.1, 0.01};
  EXPECT_NEAR(loglog_slope(x, y), -1.0, 1e-12);
}

TEST(Statistics, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(5, 7), mix_seed(5, 7));
}

TEST(RateExperiment, TargetSlopesAndNeighbourhoodSizes) {
  EXPECT_NEAR(rate_target_slope(RateEstimator::Gradient, 3), -1.0 / 7.0, 1e-15);
  EXPECT_NEAR(rate_target_slope(RateEstimator::Constant, 2), -0.25, 1e-15);
  EXPECT_GE(rate_k(RateEstimator::Gradient, 1000, 3), 1);
  EXPECT_LT(rate_k(RateEstimator::Gradient, 1000, 3), rate_k(RateEstimator::Gradient, 4000, 3));
}

TEST(RateExperiment, NoiselessLinearIsDegenerate) {
  RateExperimentConfig cfg;
  cfg.spec.dim = 2;
  cfg.spec.function = linear_function((Vector(2) << 1.0, -2.0).finished());
  cfg.spec.noise_sigma = 0.0;
  cfg.spec.seed = 3;
  cfg.grid_n = {100, 200, 400};
  cfg.replicates = 5;
  const auto grad = rate_experiment(cfg);
  EXPECT_TRUE(grad.degenerate);
  EXPECT_FALSE(grad.slope.has_value());
  EXPECT_EQ(grad.flag, "degenerate: exact recovery");

  cfg.spec.function = constant_function(2, 4.0);
  const auto constant = rate_experiment_constant(cfg);
  EXPECT_TRUE(constant.degenerate);
}

TEST(RateExperiment, MoreNoiseRaisesEveryMedian) {
  for (RateEstimator e : {RateEstimator::Gradient, RateEstimator::Constant}) {
    const auto low = run_rate_experiment(sine_rate(0.5), e);
    const auto high = run_rate_experiment(sine_rate(0.5 * std::sqrt(2.0)), e);
    ASSERT_EQ(low.points.size(), high.points.size());
    for (std::size_t g = 0; g < low.points.size(); ++g) {
      EXPECT_GT(high.points[g].median_error, low.points[g].median_error) << "n=" << low.points[g].n;
    }
  }
}

TEST(RateExperiment, RepeatableForAFixedSeed) {
  const auto a = rate_experiment(sine_rate(1.0, 10));
  const auto b = rate_experiment(sine_rate(1.0, 10));
  ASSERT_TRUE(a.slope && b.slope);
  EXPECT_EQ(*a.slope, *b.slope);
  for (std::size_t g = 0; g < a.points.size(); ++g) EXPECT_EQ(a.points[g].errors, b.points[g].errors);
}

TEST(RateExperiment, RejectsInvalidGrids) {
  auto cfg = sine_rate(1.0, 5);
  cfg.grid_n = {400};
  EXPECT_THROW(rate_experiment(cfg), InvalidArgument);
  cfg.grid_n = {400, 200};
  EXPECT_THROW(rate_experiment(cfg), InvalidArgument);
  cfg.grid_n = {5, 200};
  EXPECT_THROW(rate_experiment(cfg), InvalidArgument);
  cfg = sine_rate(1.0, 5);
  cfg.delta = 1.5;
  EXPECT_THROW(rate_experiment(cfg), InvalidArgument);
}

TEST(Disentanglement, AxisAlignedGradientsScoreOne) {
  std::vector<Vector> grads;
  for (Index i = 0; i < 4; ++i) {
    Vector g = Vector::Zero(4);
    g(i) = 1.0 + static_cast<double>(i);
    grads.push_back(g);
  }
  // Each point puts all its weight on one axis, but gbar spreads over four.
  const double score = disentanglement_score(grads);
  EXPECT_NEAR(score, oracle::disentanglement(grads), 1e-12);
  std::vector<Vector> same(3, (Vector(3) << 0, 2, 0).finished());
  EXPECT_EQ(disentanglement_score(same), 1.0);
}

TEST(Disentanglement, UniformGradientsScoreOneOverSqrtD) {
  const std::vector<Vector> grads(5, Vector::Ones(16));
  EXPECT_NEAR(disentanglement_score(grads), 0.25, 1e-12);
  EXPECT_NEAR(oracle::disentanglement(grads), 0.25, 1e-12);
}

TEST(Disentanglement, MatchesTheDirectFormula) {
  Rng rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vector> grads;
    for (int i = 0; i < 30; ++i) {
      Vector g(6);
      for (Index j = 0; j < 6; ++j) g(j) = z(rng);
      grads.push_back(g);
    }
    EXPECT_NEAR(disentanglement_score(grads), oracle::disentanglement(grads), 1e-12);
  }
}

TEST(Disentanglement, InvariantToPositiveRescaling) {
  Rng rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Vector> grads;
  for (int i = 0; i < 100; ++i) {
    Vector g(5);
    for (Index j = 0; j < 5; ++j) g(j) = z(rng);
    grads.push_back(g);
  }
  const double base = disentanglement_score(grads);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    std::vector<Vector> scaled;
    for (const auto& g : grads) scaled.push_back(c * g);
    EXPECT_NEAR(disentanglement_score(scaled), base, 1e-12);
  }
}

TEST(Disentanglement, ZeroGradientsAreSkippedButNotAllOfThem) {
  std::vector<Vector> grads{Vector::Zero(2), (Vector(2) << 1, 0).finished()};
  EXPECT_NO_THROW(disentanglement_score(grads));
  EXPECT_THROW(disentanglement_score(std::vector<Vector>(3, Vector::Zero(2))), InvalidArgument);
  EXPECT_THROW(disentanglement_score(std::vector<Vector>{}), InvalidArgument);
}

TEST(Disentanglement, EstimatesAtSamples) {
  SyntheticSpec spec;
  spec.n = 150;
  spec.dim = 3;
  spec.function = linear_function((Vector(3) << 0, 3, 0).finished());
  spec.seed = 4;
  const auto data = make_synthetic(spec).data;
  const auto est = estimate_at_samples(data, {10, 0.0});
  ASSERT_EQ(static_cast<Index>(est.size()), data.n());
  const DisentanglementInput input{data, est};
  EXPECT_NEAR(disentanglement_score(input), 1.0, 1e-8);
}

TEST(ForestComparison, IdenticalConfigurationsGiveIdenticalColumns) {
  const ComparisonDataset d{"holdout", small_regression(150, 1), SplitProtocol{}};
  ForestConfig config;
  config.n_trees = 3;
  const auto table = forest_comparison({d}, config, config, {1, 2, 3});
  ASSERT_EQ(table.rows.size(), 3u);
  for (const auto& r : table.rows) EXPECT_EQ(r.mse_first, r.mse_second);
  ASSERT_EQ(table.summaries.size(), 1u);
  EXPECT_EQ(table.summaries[0].second_not_worse, 3);
  EXPECT_EQ(table.summaries[0].mean_first, table.summaries[0].mean_second);
}

TEST(ForestComparison, SupportsEveryProtocol) {
  ForestConfig vanilla;
  vanilla.n_trees = 2;
  ForestConfig guided = vanilla;
  guided.guided = true;
  SplitProtocol kfold;
  kfold.kind = SplitProtocol::Kind::KFold;
  kfold.folds = 3;
  SplitProtocol provided;
  provided.kind = SplitProtocol::Kind::Provided;
  provided.test = small_regression(60, 99);
  const std::vector<ComparisonDataset> sets{{"holdout", small_regression(120, 2), SplitProtocol{}},
                                            {"kfold", small_regression(120, 3), kfold},
                                            {"provided", small_regression(120, 4), provided}};
  const auto table = forest_comparison(sets, vanilla, guided, {7, 8});
  EXPECT_EQ(table.rows.size(), 6u);
  EXPECT_EQ(table.summaries.size(), 3u);
  for (const auto& r : table.rows) {
    EXPECT_GT(r.mse_first, 0.0);
    EXPECT_GT(r.mse_second, 0.0);
  }
}

TEST(ForestComparison, RejectsInvalidProtocols) {
  ForestConfig config;
  config.n_trees = 1;
  SplitProtocol bad;
  bad.test_fraction = 1.0;
  EXPECT_THROW(forest_comparison({{"a", small_regression(50, 5), bad}}, config, config, {1}), InvalidArgument);
  SplitProtocol folds;
  folds.kind = SplitProtocol::Kind::KFold;
  folds.folds = 1;
  EXPECT_THROW(forest_comparison({{"b", small_regression(50, 5), folds}}, config, config, {1}), InvalidArgument);
  SplitProtocol missing;
  missing.kind = SplitProtocol::Kind::Provided;
  EXPECT_THROW(forest_comparison({{"c", small_regression(50, 5), missing}}, config, config, {1}),
               InvalidArgument);
  EXPECT_THROW(forest_comparison({}, config, config, {1}), InvalidArgument);
  EXPECT_THROW(forest_comparison({{"d", small_regression(50, 5), SplitProtocol{}}}, config, config, {}),
               InvalidArgument);
}
