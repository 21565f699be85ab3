#pragma once

#include "gradknn/common.hpp"
#include "gradknn/dataset.hpp"
#include "gradknn/lasso.hpp"
#include "gradknn/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace gradknn {

struct HyperParams {
  Index k = 1;
  double lambda = 0.0;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Constants of the smoothness, density and noise assumptions under which the
/// nonasymptotic bounds hold.
struct TheoryParams {
  double sigma2 = 1.0;  // sub-Gaussian noise parameter
  double L2 = 1.0;      // second-order Taylor remainder constant
  double b_f = 1.0;     // density lower bound on B(x, tau0)
  double U_f = 1.0;     // density upper bound on B(x, tau0)
  double L = 1.0;       // density Lipschitz constant
  double L1 = 1.0;      // Lipschitz constant of m (local constant bound)
  double tau0 = 1.0;    // locality radius
  double delta = 0.1;   // confidence level

  /// Checks the constants the bound formulas need; any delta > 0 is accepted.
  void validate_constants() const {
    require(std::isfinite(sigma2) && sigma2 >= 0.0, "theory: sigma2 must be >= 0");
    require(std::isfinite(L2) && L2 >= 0.0, "theory: L2 must be >= 0");
    require(std::isfinite(L1) && L1 >= 0.0, "theory: L1 must be >= 0");
    require(std::isfinite(L) && L >= 0.0, "theory: L must be >= 0");
    require(std::isfinite(b_f) && b_f > 0.0, "theory: b_f must be > 0");
    require(std::isfinite(U_f) && U_f >= b_f, "theory: U_f must be >= b_f");
    require(std::isfinite(tau0) && tau0 > 0.0, "theory: tau0 must be > 0");
    require(std::isfinite(delta) && delta > 0.0, "theory: delta must be > 0");
  }

  /// As validate_constants, with delta also read as a probability in (0, 1).
  void validate() const {
    validate_constants();
    require(delta < 1.0, "theory: delta must lie in (0, 1)");
  }

  /// The density ratio condition U_f / b_f <= 2 (reported, not enforced).
  bool density_ratio_ok() const { return U_f / b_f <= 2.0; }
};

struct GradientEstimate {
  double intercept = 0.0;
  Vector beta;
  Neighborhood neighborhood;
  HyperParams hyper;
  bool converged = true;
  int iterations = 0;
};

struct ActiveSet {
  std::vector<Index> indices;
  double threshold = 0.0;
};

inline constexpr double kDefaultActiveThreshold = 1e-10;

/// Mean of Y over the k nearest neighbours of x.
inline double local_constant(const Dataset& data, const ConstVectorRef& x, Index k,
                             Norm norm = Norm::LInf) {
  const auto nb = knn_radius(data, x, k, norm);
  double s = 0.0;
  for (Index i : nb.members) s += data.Y()(i);
  return s / static_cast<double>(k);
}

/// Builds the penalized local least-squares problem on a given neighbourhood.
inline LocalProblem make_local_problem(const Dataset& data, const Neighborhood& nb, double lambda) {
  LocalProblem p;
  const auto k = static_cast<Index>(nb.members.size());
  p.centered_design.resize(k, data.dim());
  p.responses.resize(k);
  for (Index r = 0; r < k; ++r) {
    const Index i = nb.members[static_cast<std::size_t>(r)];
    p.centered_design.row(r) = data.row(i) - nb.query.transpose();
    p.responses(r) = data.Y()(i);
  }
  p.lambda = lambda;
  return p;
}

inline GradientEstimate fit_neighborhood(const Dataset& data, Neighborhood nb, double lambda,
                                         const LassoOptions& opt = {}) {
  const auto problem = make_local_problem(data, nb, lambda);
  const auto sol = solve(problem, opt);
  GradientEstimate est;
  est.intercept = sol.intercept;
  est.beta = sol.beta;
  est.hyper = HyperParams{nb.k, lambda};
  est.neighborhood = std::move(nb);
  est.converged = sol.converged;
  est.iterations = sol.iterations;
  return est;
}

/// Lasso-regularized local linear fit over the k-NN ball of x.
inline GradientEstimate local_linear_lasso(const Dataset& data, const ConstVectorRef& x,
                                           const HyperParams& hyper, Norm norm = Norm::LInf,
                                           const LassoOptions& opt = {}) {
  require(hyper.k >= 1 && hyper.k <= data.n(), "hyperparameter k must satisfy 1 <= k <= n");
  require(std::isfinite(hyper.lambda) && hyper.lambda >= 0.0, "lambda must be finite and >= 0");
  return fit_neighborhood(data, knn_radius(data, x, hyper.k, norm), hyper.lambda, opt);
}

/// Unpenalized local linear fit. Rank-deficient neighbourhoods (k <= D) yield
/// the coordinate-descent fixed point.
inline GradientEstimate local_linear(const Dataset& data, const ConstVectorRef& x, Index k,
                                     Norm norm = Norm::LInf) {
  require(k >= 2, "local_linear needs k >= 2");
  return local_linear_lasso(data, x, HyperParams{k, 0.0}, norm);
}

/// lambda = tau_bar (sqrt(2 sigma^2 log(8D/delta) / k) + L2 tau_bar^2).
inline double theoretical_lambda(Index k, Index n, Index dim, const TheoryParams& theory,
                                 Norm norm = Norm::LInf) {
  theory.validate_constants();
  const double tb = tau_bar(k, n, theory.b_f, dim, norm);
  const double noise = std::sqrt(2.0 * theory.sigma2 *
                                 std::log(8.0 * static_cast<double>(dim) / theory.delta) /
                                 static_cast<double>(k));
  return tb * (noise + theory.L2 * tb * tb);
}

/// Whether tau_bar stays inside the locality radius, as the bounds require.
inline bool within_locality(Index k, Index n, Index dim, const TheoryParams& theory,
                            Norm norm = Norm::LInf) {
  return tau_bar(k, n, theory.b_f, dim, norm) <= theory.tau0;
}

/// High-probability bound on |beta_k(x) - grad m(x)|_2:
/// 24^2 sqrt(#S_x) (tau_bar^-1 sqrt(2 sigma^2 log(16D/delta)/k) + L2 tau_bar).
inline double theorem1_bound(Index k, Index n, Index dim, const TheoryParams& theory,
                             Index active_size, Norm norm = Norm::LInf) {
  theory.validate_constants();
  require(active_size >= 1, "theorem1_bound: active_size must be >= 1");
  const double tb = tau_bar(k, n, theory.b_f, dim, norm);
  const double noise = std::sqrt(2.0 * theory.sigma2 *
                                 std::log(16.0 * static_cast<double>(dim) / theory.delta) /
                                 static_cast<double>(k));
  return 24.0 * 24.0 * std::sqrt(static_cast<double>(active_size)) *
         (noise / tb + theory.L2 * tb);
}

/// High-probability bound on |m_k(x) - m(x)| for the local constant estimator:
/// sqrt(2 sigma^2 log(4/delta)/k) + L1 (2k / (n b_f V_D))^(1/D).
inline double local_constant_bound(Index k, Index n, Index dim, const TheoryParams& theory,
                                   Norm norm = Norm::LInf) {
  theory.validate_constants();
  return std::sqrt(2.0 * theory.sigma2 * std::log(4.0 / theory.delta) / static_cast<double>(k)) +
         theory.L1 * tau_bar(k, n, theory.b_f, dim, norm);
}

inline ActiveSet active_set(const GradientEstimate& est,
                            double threshold = kDefaultActiveThreshold) {
  require(threshold >= 0.0, "active set threshold must be >= 0");
  ActiveSet s;
  s.threshold = threshold;
  for (Index j = 0; j < est.beta.size(); ++j) {
    if (std::abs(est.beta(j)) > threshold) s.indices.push_back(j);
  }
  return s;
}

/// Leave-one-out errors per grid cell, errors(a, b) for (grid_k[a], grid_lambda[b]).
struct LooSelection {
  HyperParams best;
  Eigen::MatrixXd errors;
  std::vector<Index> held_out;  // the N points nearest to x
};

/// Local leave-one-out: scores every (k, lambda) by the mean squared error of
/// the fitted intercept at each of the n_loo nearest samples to x, each fitted
/// without itself. Ties favour the larger lambda, then the smaller k.
inline LooSelection select_hyperparams_detailed(const Dataset& data, const ConstVectorRef& x,
                                                const std::vector<Index>& grid_k,
                                                const std::vector<double>& grid_lambda,
                                                Index n_loo, Norm norm = Norm::LInf) {
  require(!grid_k.empty() && !grid_lambda.empty(), "hyperparameter grids must be non-empty");
  require(n_loo >= 1 && n_loo <= data.n(), "n_loo must satisfy 1 <= n_loo <= n");
  for (Index k : grid_k) {
    require(k >= 1 && k <= data.n() - 1, "grid k must satisfy 1 <= k <= n - 1");
  }
  for (double l : grid_lambda) {
    require(std::isfinite(l) && l >= 0.0, "grid lambda values must be finite and >= 0");
  }
  const Index k_max = *std::max_element(grid_k.begin(), grid_k.end());

  // Visit lambdas in increasing order so each fit warm-starts from the last.
  std::vector<std::size_t> lambda_order(grid_lambda.size());
  for (std::size_t b = 0; b < lambda_order.size(); ++b) lambda_order[b] = b;
  std::stable_sort(lambda_order.begin(), lambda_order.end(),
                   [&](std::size_t a, std::size_t b) { return grid_lambda[a] < grid_lambda[b]; });

  LooSelection out;
  out.errors = Eigen::MatrixXd::Zero(static_cast<Index>(grid_k.size()),
                                     static_cast<Index>(grid_lambda.size()));
  out.held_out = knn_radius(data, x, n_loo, norm).members;

  for (Index i : out.held_out) {
    const Vector xi = data.row(i).transpose();
    const auto full = knn_radius(data, xi, k_max, norm, i);
    for (std::size_t a = 0; a < grid_k.size(); ++a) {
      Neighborhood nb;
      nb.query = xi;
      nb.k = grid_k[a];
      nb.members.assign(full.members.begin(), full.members.begin() + nb.k);
      nb.distances.assign(full.distances.begin(), full.distances.begin() + nb.k);
      nb.radius = nb.distances.back();
      auto problem = make_local_problem(data, nb, 0.0);
      LassoOptions opt;
      for (std::size_t b : lambda_order) {
        problem.lambda = grid_lambda[b];
        const auto sol = solve(problem, opt);
        opt.warm_start = sol.beta;
        const double r = sol.intercept - data.Y()(i);
        out.errors(static_cast<Index>(a), static_cast<Index>(b)) += r * r;
      }
    }
  }
  out.errors /= static_cast<double>(out.held_out.size());

  double best_err = std::numeric_limits<double>::infinity();
  bool have = false;
  for (std::size_t a = 0; a < grid_k.size(); ++a) {
    for (std::size_t b = 0; b < grid_lambda.size(); ++b) {
      const double e = out.errors(static_cast<Index>(a), static_cast<Index>(b));
      const HyperParams cand{grid_k[a], grid_lambda[b]};
      bool better = !have || e < best_err;
      if (have && e == best_err) {
        better = cand.lambda > out.best.lambda ||
                 (cand.lambda == out.best.lambda && cand.k < out.best.k);
      }
      if (better) {
        best_err = e;
        out.best = cand;
        have = true;
      }
    }
  }
  return out;
}

inline HyperParams select_hyperparams(const Dataset& data, const ConstVectorRef& x,
                                      const std::vector<Index>& grid_k,
                                      const std::vector<double>& grid_lambda, Index n_loo,
                                      Norm norm = Norm::LInf) {
  return select_hyperparams_detailed(data, x, grid_k, grid_lambda, n_loo, norm).best;
}

}  // namespace gradknn
