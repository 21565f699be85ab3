#pragma once

#include "gradknn/common.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace gradknn {

/// min over (m, beta) of  sum_i (y_i - m - beta.(X_i - x))^2 + lambda * |beta|_1.
/// Rows of `centered_design` are X_i - x; the intercept m is not penalized.
struct LocalProblem {
  Matrix centered_design;
  Vector responses;
  double lambda = 0.0;

  Index k() const { return centered_design.rows(); }
  Index dim() const { return centered_design.cols(); }
};

struct LassoOptions {
  double tol = 1e-8;       // stop once the largest coordinate change of a sweep is below tol
  int max_iter = 10'000;   // sweep cap
  std::optional<Vector> warm_start;
  bool record_objective = false;
  // Every `polish_every` sweeps, try an exact solve on the current support
  // with the current signs; kept only if it lowers neither KKT nor objective.
  int polish_every = 10;
};

struct LassoSolution {
  double intercept = 0.0;
  Vector beta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // one entry per sweep when requested
};

inline void validate(const LocalProblem& p) {
  require(p.k() >= 1, "local problem needs at least one row");
  require(p.dim() >= 1, "local problem needs at least one column");
  require(p.responses.size() == p.k(), "responses length must match the design rows");
  require(std::isfinite(p.lambda) && p.lambda >= 0.0, "lambda must be finite and >= 0");
  require(p.centered_design.allFinite() && p.responses.allFinite(),
          "local problem entries must be finite");
}

/// Objective value at an arbitrary (intercept, beta).
inline double lasso_objective(const LocalProblem& p, double intercept, const ConstVectorRef& beta) {
  const Vector r = p.responses - p.centered_design * beta - Vector::Constant(p.k(), intercept);
  return r.squaredNorm() + p.lambda * beta.lpNorm<1>();
}

/// Smallest lambda for which beta = 0 is optimal: 2 max_j |sum_i r_i (X_i - x)_j|
/// with r the centered responses.
inline double lambda_max(const LocalProblem& p) {
  validate(p);
  const Vector yc = p.responses.array() - p.responses.mean();
  return 2.0 * (p.centered_design.transpose() * yc).cwiseAbs().maxCoeff();
}

/// Stationarity violation: max_j over the beta subgradient conditions plus the
/// absolute intercept gradient.
inline double kkt_residual(const LocalProblem& p, double intercept, const ConstVectorRef& beta) {
  const Vector r = p.responses - p.centered_design * beta - Vector::Constant(p.k(), intercept);
  const Vector grad = -2.0 * (p.centered_design.transpose() * r);
  double worst = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    double v;
    if (beta(j) > 0.0) v = std::abs(grad(j) + p.lambda);
    else if (beta(j) < 0.0) v = std::abs(grad(j) - p.lambda);
    else v = std::max(0.0, std::abs(grad(j)) - p.lambda);
    worst = std::max(worst, v);
  }
  return worst + std::abs(2.0 * r.sum());
}

inline double kkt_residual(const LocalProblem& p, const LassoSolution& sol) {
  return kkt_residual(p, sol.intercept, sol.beta);
}

namespace detail {

// Profile out the intercept: with column means mu and response mean ybar the
// optimal intercept is ybar - mu.beta, and beta solves a lasso on the
// column-centered design Z, handled here through G = Z'Z and c = Z'(y - ybar).
struct CenteredGram {
  Vector column_mean;
  double response_mean;
  Eigen::MatrixXd gram;
  Vector cross;
};

inline CenteredGram centered_gram(const LocalProblem& p) {
  CenteredGram g;
  g.column_mean = p.centered_design.colwise().mean().transpose();
  g.response_mean = p.responses.mean();
  const Matrix Z = p.centered_design.rowwise() - g.column_mean.transpose();
  const Vector yc = p.responses.array() - g.response_mean;
  g.gram = Z.transpose() * Z;
  g.cross = Z.transpose() * yc;
  return g;
}

// Exact minimizer on the current support with signs held fixed.
inline std::optional<Vector> polish_support(const CenteredGram& g, double lambda, const Vector& beta) {
  std::vector<Index> support;
  for (Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != 0.0) support.push_back(j);
  }
  if (support.empty()) return std::nullopt;
  const auto s = static_cast<Index>(support.size());
  Eigen::MatrixXd G(s, s);
  Vector rhs(s);
  for (Index a = 0; a < s; ++a) {
    const Index j = support[static_cast<std::size_t>(a)];
    rhs(a) = g.cross(j) - 0.5 * lambda * (beta(j) > 0.0 ? 1.0 : -1.0);
    for (Index b = 0; b < s; ++b) G(a, b) = g.gram(j, support[static_cast<std::size_t>(b)]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  const Vector sol = ldlt.solve(rhs);
  if (!sol.allFinite()) return std::nullopt;
  Vector out = Vector::Zero(beta.size());
  for (Index a = 0; a < s; ++a) {
    const Index j = support[static_cast<std::size_t>(a)];
    // With a positive penalty the fixed-sign solve is only valid if signs survive.
    if (lambda > 0.0 && sol(a) * beta(j) <= 0.0) return std::nullopt;
    out(j) = sol(a);
  }
  return out;
}

}  // namespace detail

/// Cyclic coordinate descent with covariance updates. Deterministic.
inline LassoSolution solve(const LocalProblem& p, const LassoOptions& opt = {}) {
  validate(p);
  require(opt.tol > 0.0, "lasso tol must be > 0");
  require(opt.max_iter >= 1, "lasso max_iter must be >= 1");
  const Index dim = p.dim();
  const auto g = detail::centered_gram(p);
  const double half_lambda = 0.5 * p.lambda;

  Vector beta = Vector::Zero(dim);
  if (opt.warm_start) {
    require(opt.warm_start->size() == dim, "warm start has the wrong dimension");
    beta = *opt.warm_start;
  }
  Vector gb = g.gram * beta;
  auto intercept_of = [&](const Vector& b) { return g.response_mean - g.column_mean.dot(b); };

  LassoSolution sol;
  // At or above the kill threshold zero is optimal; return it exactly.
  if (p.lambda >= lambda_max(p)) {
    sol.beta = Vector::Zero(dim);
    sol.intercept = g.response_mean;
    sol.objective = lasso_objective(p, sol.intercept, sol.beta);
    sol.converged = true;
    if (opt.record_objective) sol.objective_trace.push_back(sol.objective);
    return sol;
  }
  for (int sweep = 1; sweep <= opt.max_iter; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < dim; ++j) {
      const double gjj = g.gram(j, j);
      const double old = beta(j);
      double updated = 0.0;
      if (gjj > 0.0) {
        const double rho = g.cross(j) - (gb(j) - gjj * old);
        updated = soft_threshold(rho, half_lambda) / gjj;
      }
      const double delta = updated - old;
      if (delta != 0.0) {
        beta(j) = updated;
        gb.noalias() += g.gram.col(j) * delta;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    sol.iterations = sweep;
    if (max_change < opt.tol) {
      sol.converged = true;
    } else if (opt.polish_every > 0 && sweep % opt.polish_every == 0) {
      if (auto cand = detail::polish_support(g, p.lambda, beta)) {
        const double cur_obj = lasso_objective(p, intercept_of(beta), beta);
        const double new_obj = lasso_objective(p, intercept_of(*cand), *cand);
        const double cur_kkt = kkt_residual(p, intercept_of(beta), beta);
        const double new_kkt = kkt_residual(p, intercept_of(*cand), *cand);
        if (new_obj <= cur_obj && new_kkt <= cur_kkt) {
          beta = *cand;
          gb = g.gram * beta;
        }
      }
    }
    if (opt.record_objective) {
      sol.objective_trace.push_back(lasso_objective(p, intercept_of(beta), beta));
    }
    if (sol.converged) break;
  }

  // Final polish so that a converged answer is stationary to rounding error.
  if (auto cand = detail::polish_support(g, p.lambda, beta)) {
    const double cur_obj = lasso_objective(p, intercept_of(beta), beta);
    const double new_obj = lasso_objective(p, intercept_of(*cand), *cand);
    const double cur_kkt = kkt_residual(p, intercept_of(beta), beta);
    const double new_kkt = kkt_residual(p, intercept_of(*cand), *cand);
    if (new_obj <= cur_obj + 1e-14 * std::max(1.0, std::abs(cur_obj)) && new_kkt <= cur_kkt) {
      beta = *cand;
    }
  }

  sol.beta = std::move(beta);
  sol.intercept = intercept_of(sol.beta);
  sol.objective = lasso_objective(p, sol.intercept, sol.beta);
  return sol;
}

inline LassoSolution solve(const LocalProblem& p, double tol, int max_iter) {
  LassoOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return solve(p, opt);
}

}  // namespace gradknn
