#include "gradknn/analysis.hpp"
#include "gradknn/forest.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gradknn;

namespace {

Dataset uniform_data(Index n, Index dim, std::uint64_t seed, const std::function<double(const Vector&)>& f,
                     double sigma) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> e(0.0, sigma > 0.0 ? sigma : 1.0);
  Matrix X(n, dim);
  Vector Y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dim; ++j) X(i, j) = u(rng);
    Y(i) = f(X.row(i).transpose()) + (sigma > 0.0 ? e(rng) : 0.0);
  }
  return Dataset(X, Y);
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

double sse(const Dataset& d, const std::vector<Index>& rows) {
  double mean = 0.0;
  for (Index i : rows) mean += d.Y()(i);
  mean /= static_cast<double>(rows.size());
  double s = 0.0;
  for (Index i : rows) s += (d.Y()(i) - mean) * (d.Y()(i) - mean);
  return s;
}

}  // namespace

TEST(SampleDimensions, ZeroWeightsAreNeverDrawn) {
  Rng rng(1);
  const Vector w = (Vector(5) << 0, 1, 0, 3, 2).finished();
  for (int t = 0; t < 500; ++t) {
    const auto picks = sample_dimensions(w, 3, rng);
    ASSERT_EQ(picks.size(), 3u);
    for (Index j : picks) EXPECT_TRUE(j == 1 || j == 3 || j == 4);
    EXPECT_NE(picks[0], picks[1]);
    EXPECT_NE(picks[1], picks[2]);
    EXPECT_NE(picks[0], picks[2]);
  }
  // Fewer positive weights than requested: only the positive ones.
  EXPECT_EQ(sample_dimensions(w, 5, rng).size(), 3u);
}

TEST(SampleDimensions, AllZeroWeightsFallBackToUniform) {
  Rng rng(2);
  std::vector<int> counts(4, 0);
  for (int t = 0; t < 4000; ++t) ++counts[static_cast<std::size_t>(sample_dimensions(Vector::Zero(4), 1, rng)[0])];
  for (int c : counts) EXPECT_NEAR(c, 1000, 150);
}

TEST(SampleDimensions, FrequenciesFollowWeights) {
  Rng rng(3);
  const Vector w = (Vector(3) << 1, 2, 7).finished();
  std::vector<int> counts(3, 0);
  for (int t = 0; t < 10000; ++t) ++counts[static_cast<std::size_t>(sample_dimensions(w, 1, rng)[0])];
  EXPECT_NEAR(counts[0] / 10000.0, 0.1, 0.02);
  EXPECT_NEAR(counts[1] / 10000.0, 0.2, 0.02);
  EXPECT_NEAR(counts[2] / 10000.0, 0.7, 0.02);
}

TEST(SplitNode, ConstantResponseIsALeaf) {
  const auto d = uniform_data(100, 3, 4, [](const Vector&) { return 1.5; }, 0.0);
  ForestConfig config;
  Rng rng(0);
  EXPECT_FALSE(split_node(d, all_rows(100), config, rng).split.has_value());
  config.guided = true;
  EXPECT_FALSE(split_node(d, all_rows(100), config, rng).split.has_value());
}

TEST(SplitNode, GuidedWeightsFavourTheRelevantDimension) {
  const auto d = uniform_data(300, 10, 5, [](const Vector& x) { return 3.0 * x(2); }, 0.1);
  const auto rows = all_rows(300);
  ForestConfig guided;
  guided.guided = true;
  ForestConfig vanilla;
  int hit_guided = 0, hit_vanilla = 0;
  const int calls = 200;
  for (int t = 0; t < calls; ++t) {
    Rng a(100 + static_cast<std::uint64_t>(t));
    Rng b(100 + static_cast<std::uint64_t>(t));
    const auto g = split_node(d, rows, guided, a);
    const auto v = split_node(d, rows, vanilla, b);
    if (std::find(g.candidates.begin(), g.candidates.end(), 2) != g.candidates.end()) ++hit_guided;
    if (std::find(v.candidates.begin(), v.candidates.end(), 2) != v.candidates.end()) ++hit_vanilla;
  }
  EXPECT_GE(hit_guided, 0.9 * calls);
  // ceil(sqrt(10)) = 4 uniform candidates out of 10.
  EXPECT_NEAR(static_cast<double>(hit_vanilla) / calls, 0.4, 0.1);
}

TEST(Forest, StumpWithoutBootstrapPredictsTheGlobalMean) {
  const auto d = uniform_data(80, 2, 6, [](const Vector& x) { return x(0) + x(1); }, 0.2);
  ForestConfig config;
  config.n_trees = 1;
  config.max_depth = 0;
  config.bootstrap = false;
  const auto forest = fit_forest(d, config);
  EXPECT_NEAR(forest.predict(Vector::Constant(2, 0.3)), d.Y().mean(), 1e-14);
  EXPECT_EQ(forest.trees()[0].nodes().size(), 1u);
}

TEST(Forest, ConstantResponsePredictsTheConstant) {
  const auto d = uniform_data(60, 3, 7, [](const Vector&) { return -2.0; }, 0.0);
  ForestConfig config;
  config.n_trees = 5;
  config.guided = true;
  const auto forest = fit_forest(d, config);
  for (Index i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(forest.predict(d.row(i).transpose()), -2.0);
}

TEST(Forest, PredictionAveragesTreesAndIgnoresOrder) {
  const auto d = uniform_data(200, 3, 8, [](const Vector& x) { return std::sin(3.0 * x(0)); }, 0.1);
  ForestConfig config;
  config.n_trees = 7;
  config.seed = 3;
  const auto forest = fit_forest(d, config);
  std::vector<Tree> reversed(forest.trees().rbegin(), forest.trees().rend());
  const Forest flipped(reversed);
  for (Index i = 0; i < 10; ++i) {
    const Vector x = d.row(i).transpose();
    double mean = 0.0;
    for (const auto& t : forest.trees()) mean += t.predict(x);
    mean /= 7.0;
    EXPECT_NEAR(forest.predict(x), mean, 1e-14);
    EXPECT_NEAR(flipped.predict(x), forest.predict(x), 1e-14);
  }
}

TEST(Forest, EverySplitReducesSquaredError) {
  const auto d = uniform_data(300, 4, 9, [](const Vector& x) { return x(0) * x(1) + x(3); }, 0.3);
  for (bool guided : {false, true}) {
    ForestConfig config;
    config.n_trees = 3;
    config.guided = guided;
    config.seed = 11;
    const auto forest = fit_forest(d, config);
    for (const auto& tree : forest.trees()) {
      const auto& nodes = tree.nodes();
      for (const auto& node : nodes) {
        if (!node.split) {
          EXPECT_FALSE(node.children.has_value());
          continue;
        }
        const auto& l = nodes[node.children->first];
        const auto& r = nodes[node.children->second];
        const double before = sse(d, node.members);
        const double after = sse(d, l.members) + sse(d, r.members);
        EXPECT_GT(before - after, 0.0);
        EXPECT_NEAR(before - after, node.split->gain, 1e-8 * (1.0 + before));
        EXPECT_GE(static_cast<Index>(l.members.size()), config.min_leaf_size);
        EXPECT_GE(static_cast<Index>(r.members.size()), config.min_leaf_size);
      }
    }
  }
}

TEST(Forest, EqualWeightOverrideReproducesVanilla) {
  const auto d = uniform_data(250, 6, 10, [](const Vector& x) { return x(0) - 2.0 * x(4); }, 0.2);
  ForestConfig vanilla;
  vanilla.n_trees = 4;
  vanilla.seed = 21;
  ForestConfig stub = vanilla;
  stub.guided = true;
  stub.weight_override = [](const Dataset& data, std::span<const Index>) { return Vector::Ones(data.dim()); };
  const auto a = fit_forest(d, vanilla);
  const auto b = fit_forest(d, stub);
  EXPECT_EQ(a.predict_rows(d.X()), b.predict_rows(d.X()));
}

TEST(Forest, DeterministicForAFixedSeed) {
  const auto d = uniform_data(200, 5, 12, [](const Vector& x) { return std::sin(2.0 * x(1)); }, 0.2);
  ForestConfig config;
  config.n_trees = 4;
  config.guided = true;
  config.seed = 5;
  EXPECT_EQ(fit_forest(d, config).predict_rows(d.X()), fit_forest(d, config).predict_rows(d.X()));
  ForestConfig other = config;
  other.seed = 6;
  EXPECT_NE(fit_forest(d, config).predict_rows(d.X()), fit_forest(d, other).predict_rows(d.X()));
}

TEST(Forest, TestErrorBeatsPredictingTheMean) {
  const auto spec = sparse_forest_spec(600, 10, 0.3, 13);
  const auto train = make_synthetic(spec).data;
  const auto test = make_synthetic(sparse_forest_spec(300, 10, 0.3, 14)).data;
  for (bool guided : {false, true}) {
    ForestConfig config;
    config.n_trees = 10;
    config.guided = guided;
    const Vector pred = fit_forest(train, config).predict_rows(test.X());
    const double mse = (pred - test.Y()).squaredNorm() / static_cast<double>(test.n());
    const double var = (test.Y().array() - test.Y().mean()).square().mean();
    EXPECT_LT(mse, var);
  }
}

TEST(ForestConfigValidation, RejectsInvalidSettings) {
  const auto d = uniform_data(20, 2, 15, [](const Vector&) { return 0.0; }, 0.0);
  ForestConfig config;
  config.n_trees = 0;
  EXPECT_THROW(fit_forest(d, config), InvalidArgument);
  config = {};
  config.min_leaf_size = 1;
  EXPECT_THROW(fit_forest(d, config), InvalidArgument);
  config = {};
  config.grad_hyper = HyperParams{0, 0.0};
  EXPECT_THROW(fit_forest(d, config), InvalidArgument);
}
