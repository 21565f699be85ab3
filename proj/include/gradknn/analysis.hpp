#pragma once

#include "gradknn/common.hpp"
#include "gradknn/dataset.hpp"
#include "gradknn/forest.hpp"
#include "gradknn/gradient.hpp"
#include "gradknn/neighbors.hpp"
#include "gradknn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gradknn {

// ---------------------------------------------------------------------------
// Small statistics helpers

/// Linear-interpolation sample quantile (Hyndman-Fan type 7).
inline double quantile(std::vector<double> values, double p) {
  require(!values.empty(), "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

/// Least-squares slope of log(y) on log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "slope fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "log-log fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  require(sxx > 0.0, "slope fit needs distinct x values");
  return sxy / sxx;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Convergence-rate harness

enum class RateEstimator { Gradient, Constant };

struct RateExperimentConfig {
  SyntheticSpec spec;  // n is replaced by each grid value; spec.seed is the base seed
  std::vector<Index> grid_n;
  Index replicates = 50;
  double delta = 0.1;
  Norm norm = Norm::LInf;
  std::optional<Vector> query;         // default: the origin (cube centre)
  std::optional<TheoryParams> theory;  // default: derived from the spec
};

struct RatePoint {
  Index n = 0;
  Index k = 0;
  double tau_bar = 0.0;
  double lambda = 0.0;
  double median_error = 0.0;
  double quantile_error = 0.0;  // empirical (1 - delta)-quantile
  double envelope = 0.0;        // theoretical high-probability bound
  bool within_locality = true;
  std::vector<double> errors;
};

struct RateReport {
  RateEstimator estimator = RateEstimator::Gradient;
  Index dim = 0;
  Index replicates = 0;
  Index active_size = 1;
  double delta = 0.1;
  Norm norm = Norm::LInf;
  TheoryParams theory;
  std::vector<RatePoint> points;
  std::optional<double> slope;  // empty when degenerate
  double target_slope = 0.0;
  bool degenerate = false;
  std::string flag;
};

inline TheoryParams theory_from_spec(const SyntheticSpec& spec, const ConstVectorRef& query,
                                     double delta) {
  TheoryParams t;
  t.sigma2 = spec.noise_sigma * spec.noise_sigma;
  t.L2 = spec.function.second_order;
  t.L1 = spec.function.lipschitz;
  t.tau0 = 1.0;
  std::tie(t.b_f, t.U_f) = design_density_bounds(spec.design, query, t.tau0);
  if (spec.design == Design::UniformCube) {
    t.L = 0.0;
  } else {
    // |grad phi_D| <= U_f * sup |x| over the ball; l_inf bound via the l1 norm of the gradient.
    t.L = t.U_f * static_cast<double>(spec.dim) * (query.cwiseAbs().maxCoeff() + t.tau0);
  }
  t.delta = delta;
  return t;
}

inline Index rate_k(RateEstimator e, Index n, Index dim) {
  const double d = static_cast<double>(dim);
  const double power = e == RateEstimator::Gradient ? 4.0 / (4.0 + d) : 2.0 / (2.0 + d);
  return std::max<Index>(1, static_cast<Index>(std::ceil(std::pow(static_cast<double>(n), power))));
}

inline double rate_target_slope(RateEstimator e, Index dim) {
  const double d = static_cast<double>(dim);
  return e == RateEstimator::Gradient ? -1.0 / (4.0 + d) : -1.0 / (2.0 + d);
}

/// Replicated estimation errors at a fixed query point over a grid of sample
/// sizes, with k on the rate-optimal schedule, and the fitted log-log slope.
/// Replicate r uses the same seed at every n, so its samples are nested.
inline RateReport run_rate_experiment(const RateExperimentConfig& cfg, RateEstimator estimator) {
  validate(cfg.spec);
  require(cfg.grid_n.size() >= 2, "rate experiment needs at least two grid sizes");
  require(cfg.replicates >= 1, "rate experiment needs at least one replicate");
  require(cfg.delta > 0.0 && cfg.delta < 1.0, "delta must lie in (0, 1)");
  const Index dim = cfg.spec.dim;
  for (std::size_t g = 0; g < cfg.grid_n.size(); ++g) {
    require(cfg.grid_n[g] >= 4 * (dim + 1), "grid sizes must be >= 4 (D + 1)");
    require(g == 0 || cfg.grid_n[g] > cfg.grid_n[g - 1], "grid sizes must be increasing");
  }
  const Vector query = cfg.query ? *cfg.query : Vector(Vector::Zero(dim));
  require(query.size() == dim, "query dimension does not match the spec");

  RateReport report;
  report.estimator = estimator;
  report.dim = dim;
  report.replicates = cfg.replicates;
  report.delta = cfg.delta;
  report.norm = cfg.norm;
  report.theory = cfg.theory ? *cfg.theory : theory_from_spec(cfg.spec, query, cfg.delta);
  report.theory.delta = cfg.delta;
  report.theory.validate();
  report.target_slope = rate_target_slope(estimator, dim);

  const Vector true_grad = cfg.spec.function.gradient(query);
  const double true_value = cfg.spec.function.value(query);
  report.active_size =
      std::max<Index>(1, (true_grad.array().abs() > kDefaultActiveThreshold).count());

  for (std::size_t g = 0; g < cfg.grid_n.size(); ++g) {
    const Index n = cfg.grid_n[g];
    RatePoint pt;
    pt.n = n;
    pt.k = std::min(n, rate_k(estimator, n, dim));
    pt.tau_bar = tau_bar(pt.k, n, report.theory.b_f, dim, cfg.norm);
    pt.within_locality = pt.tau_bar <= report.theory.tau0;
    if (estimator == RateEstimator::Gradient) {
      pt.lambda = theoretical_lambda(pt.k, n, dim, report.theory, cfg.norm);
      pt.envelope = theorem1_bound(pt.k, n, dim, report.theory, report.active_size, cfg.norm);
    } else {
      pt.envelope = local_constant_bound(pt.k, n, dim, report.theory, cfg.norm);
    }
    pt.errors.assign(static_cast<std::size_t>(cfg.replicates), 0.0);
    parallel_for(pt.errors.size(), [&](std::size_t r) {
      SyntheticSpec spec = cfg.spec;
      spec.n = n;
      spec.seed = mix_seed(cfg.spec.seed, r);
      const auto sample = make_synthetic(spec);
      if (estimator == RateEstimator::Gradient) {
        const auto est = local_linear_lasso(sample.data, query, HyperParams{pt.k, pt.lambda}, cfg.norm);
        pt.errors[r] = (est.beta - true_grad).norm();
      } else {
        pt.errors[r] = std::abs(local_constant(sample.data, query, pt.k, cfg.norm) - true_value);
      }
    });
    pt.median_error = median(pt.errors);
    pt.quantile_error = quantile(pt.errors, 1.0 - cfg.delta);
    report.points.push_back(std::move(pt));
  }

  std::vector<double> ns, meds;
  for (const auto& p : report.points) {
    ns.push_back(static_cast<double>(p.n));
    meds.push_back(p.median_error);
  }
  const double largest = *std::max_element(meds.begin(), meds.end());
  const bool any_zero = std::any_of(meds.begin(), meds.end(), [](double v) { return v <= 0.0; });
  if (largest < 1e-10 || any_zero) {
    report.degenerate = true;
    report.flag = "degenerate: exact recovery";
  } else {
    report.slope = loglog_slope(ns, meds);
  }
  return report;
}

inline RateReport rate_experiment(const RateExperimentConfig& cfg) {
  return run_rate_experiment(cfg, RateEstimator::Gradient);
}

inline RateReport rate_experiment_constant(const RateExperimentConfig& cfg) {
  return run_rate_experiment(cfg, RateEstimator::Constant);
}

// ---------------------------------------------------------------------------
// Disentanglement concentration score

struct DisentanglementInput {
  Dataset latent;  // Z with the attribute as response
  std::vector<GradientEstimate> estimates;
};

/// mean over points x of  sum_i (|g_i(x)| / |g(x)|_1) cos(e_i, gbar),
/// gbar = (1/n) sum_k |g(X_k)| componentwise. Points with a zero gradient carry
/// no weights and are skipped.
inline double disentanglement_score(std::span<const Vector> gradients) {
  require(!gradients.empty(), "disentanglement score needs at least one gradient");
  const Index dim = gradients.front().size();
  Vector gbar = Vector::Zero(dim);
  for (const auto& g : gradients) {
    require(g.size() == dim, "gradients must share one dimension");
    require(g.allFinite(), "gradients must be finite");
    gbar += g.cwiseAbs();
  }
  gbar /= static_cast<double>(gradients.size());
  const double gnorm = gbar.norm();
  if (!(gnorm > 0.0)) throw InvalidArgument("disentanglement score undefined: all gradients are zero");
  double total = 0.0;
  Index used = 0;
  for (const auto& g : gradients) {
    const double l1 = g.lpNorm<1>();
    if (!(l1 > 0.0)) continue;
    double s = 0.0;
    for (Index i = 0; i < dim; ++i) s += (std::abs(g(i)) / l1) * (gbar(i) / gnorm);
    total += s;
    ++used;
  }
  return total / static_cast<double>(used);
}

inline double disentanglement_score(const DisentanglementInput& input) {
  require(static_cast<Index>(input.estimates.size()) == input.latent.n(),
          "one gradient estimate per latent sample is required");
  std::vector<Vector> grads;
  grads.reserve(input.estimates.size());
  for (const auto& e : input.estimates) grads.push_back(e.beta);
  return disentanglement_score(grads);
}

/// Gradient estimates at every sample point of a dataset.
inline std::vector<GradientEstimate> estimate_at_samples(const Dataset& data, const HyperParams& hyper,
                                                         Norm norm = Norm::LInf) {
  std::vector<GradientEstimate> out(static_cast<std::size_t>(data.n()));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = local_linear_lasso(data, data.row(static_cast<Index>(i)).transpose(), hyper, norm);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Paired forest comparison

/// Sparse regression suite: three active coordinates out of `dim` (dim >= 3),
/// m(x) = 2 x_1 + sin(2 x_2) + x_3^2 on the uniform cube.
inline SyntheticSpec sparse_forest_spec(Index n, Index dim, double noise_sigma, std::uint64_t seed) {
  require(dim >= 3, "sparse suite needs dim >= 3");
  SyntheticSpec spec;
  spec.n = n;
  spec.dim = dim;
  spec.active_set = {0, 1, 2};
  spec.function = additive_function(dim, {{0, TermKind::Linear, 2.0, 1.0},
                                          {1, TermKind::Sine, 1.0, 2.0},
                                          {2, TermKind::Square, 1.0, 1.0}});
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  return spec;
}

struct SplitProtocol {
  enum class Kind { Holdout, KFold, Provided };
  Kind kind = Kind::Holdout;
  double test_fraction = 0.25;  // Holdout: reshuffled per seed
  Index folds = 5;              // KFold: reshuffled per seed, MSE averaged over folds
  std::optional<Dataset> test;  // Provided: fixed test set
};

struct ComparisonDataset {
  std::string name;
  Dataset data;
  SplitProtocol protocol;
};

struct ComparisonRow {
  std::string dataset;
  std::uint64_t seed = 0;
  double mse_first = 0.0;
  double mse_second = 0.0;
};

struct ComparisonSummary {
  std::string dataset;
  Index n = 0;
  Index dim = 0;
  double mean_first = 0.0, var_first = 0.0;
  double mean_second = 0.0, var_second = 0.0;
  Index second_not_worse = 0;  // seeds with mse_second <= mse_first
  Index seeds = 0;
};

struct ComparisonTable {
  std::string first_label = "vanilla";
  std::string second_label = "guided";
  std::vector<ComparisonRow> rows;
  std::vector<ComparisonSummary> summaries;
};

namespace detail {

inline double test_mse(const Forest& forest, const Dataset& test, std::span<const Index> rows) {
  double s = 0.0;
  for (Index i : rows) {
    const double r = forest.predict(test.row(i).transpose()) - test.Y()(i);
    s += r * r;
  }
  return s / static_cast<double>(rows.size());
}

inline std::pair<double, double> mean_var(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0};
}

inline void check_protocol(const ComparisonDataset& d) {
  const auto& p = d.protocol;
  switch (p.kind) {
    case SplitProtocol::Kind::Holdout: {
      require(p.test_fraction > 0.0 && p.test_fraction < 1.0,
              d.name + ": holdout test_fraction must lie in (0, 1)");
      const auto test_n = static_cast<Index>(std::round(p.test_fraction * static_cast<double>(d.data.n())));
      require(test_n >= 1 && test_n < d.data.n(), d.name + ": holdout leaves an empty train or test set");
      break;
    }
    case SplitProtocol::Kind::KFold:
      require(p.folds >= 2 && p.folds <= d.data.n(), d.name + ": folds must lie in [2, n]");
      break;
    case SplitProtocol::Kind::Provided:
      require(p.test.has_value(), d.name + ": provided protocol needs a test set");
      require(p.test->dim() == d.data.dim(), d.name + ": test set dimension mismatch");
      break;
  }
}

// Mean test MSE of one configuration on one dataset for one seed.
inline double protocol_mse(const ComparisonDataset& d, ForestConfig config, std::uint64_t seed) {
  config.seed = seed;
  const auto& p = d.protocol;
  if (p.kind == SplitProtocol::Kind::Provided) {
    const auto forest = fit_forest(d.data, config);
    std::vector<Index> rows(static_cast<std::size_t>(p.test->n()));
    std::iota(rows.begin(), rows.end(), Index{0});
    return test_mse(forest, *p.test, rows);
  }
  std::vector<Index> perm(static_cast<std::size_t>(d.data.n()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng shuffle_rng(mix_seed(seed, 0x5eed));
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);
  const Index folds = p.kind == SplitProtocol::Kind::KFold ? p.folds : 1;
  double total = 0.0;
  for (Index f = 0; f < folds; ++f) {
    std::vector<Index> train, test;
    for (std::size_t r = 0; r < perm.size(); ++r) {
      bool is_test;
      if (p.kind == SplitProtocol::Kind::KFold) {
        is_test = static_cast<Index>(r) % folds == f;
      } else {
        const auto test_n = static_cast<std::size_t>(
            std::round(p.test_fraction * static_cast<double>(d.data.n())));
        is_test = r < test_n;
      }
      (is_test ? test : train).push_back(perm[r]);
    }
    std::sort(train.begin(), train.end());
    const auto forest = fit_forest(d.data.subset(train), config);
    total += test_mse(forest, d.data, test);
  }
  return total / static_cast<double>(folds);
}

}  // namespace detail

/// Test MSE of two forest configurations, paired by seed on every dataset.
inline ComparisonTable forest_comparison(const std::vector<ComparisonDataset>& datasets,
                                         const ForestConfig& first, const ForestConfig& second,
                                         const std::vector<std::uint64_t>& seeds,
                                         std::string first_label = "vanilla",
                                         std::string second_label = "guided") {
  require(!datasets.empty(), "forest comparison needs at least one dataset");
  require(!seeds.empty(), "forest comparison needs at least one seed");
  ComparisonTable table;
  table.first_label = std::move(first_label);
  table.second_label = std::move(second_label);
  for (const auto& d : datasets) {
    detail::check_protocol(d);
    std::vector<double> a, b;
    for (std::uint64_t seed : seeds) {
      ComparisonRow row{d.name, seed, detail::protocol_mse(d, first, seed),
                        detail::protocol_mse(d, second, seed)};
      a.push_back(row.mse_first);
      b.push_back(row.mse_second);
      table.rows.push_back(std::move(row));
    }
    ComparisonSummary s;
    s.dataset = d.name;
    s.n = d.data.n();
    s.dim = d.data.dim();
    std::tie(s.mean_first, s.var_first) = detail::mean_var(a);
    std::tie(s.mean_second, s.var_second) = detail::mean_var(b);
    for (std::size_t i = 0; i < a.size(); ++i) s.second_not_worse += b[i] <= a[i] ? 1 : 0;
    s.seeds = static_cast<Index>(seeds.size());
    table.summaries.push_back(std::move(s));
  }
  return table;
}

}  // namespace gradknn
