#pragma once

#include "gradknn/common.hpp"
#include "gradknn/dataset.hpp"
#include "gradknn/gradient.hpp"
#include "gradknn/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gradknn {

/// A black-box objective R^dim -> R. `gradient` is optional and used only for
/// diagnostics.
struct Objective {
  std::string name;
  Index dim = 0;
  std::function<double(const ConstVectorRef&)> value;
  std::function<Vector(const ConstVectorRef&)> gradient;
};

/// 100 * sum_{i<d} (x_{i+1} - x_i)^2 + (x_i - 1)^2, with the inner square on x_i absent.
inline double rosenbrock_paper(const ConstVectorRef& x) {
  require(x.size() >= 2, "rosenbrock needs dimension >= 2");
  double s = 0.0;
  for (Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x(i + 1) - x(i);
    const double b = x(i) - 1.0;
    s += 100.0 * a * a + b * b;
  }
  return s;
}

/// Classical sum_{i<d} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.
inline double rosenbrock_standard(const ConstVectorRef& x) {
  require(x.size() >= 2, "rosenbrock needs dimension >= 2");
  double s = 0.0;
  for (Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x(i + 1) - x(i) * x(i);
    const double b = 1.0 - x(i);
    s += 100.0 * a * a + b * b;
  }
  return s;
}

inline Vector rosenbrock_paper_gradient(const ConstVectorRef& x) {
  Vector g = Vector::Zero(x.size());
  for (Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x(i + 1) - x(i);
    g(i + 1) += 200.0 * a;
    g(i) += -200.0 * a + 2.0 * (x(i) - 1.0);
  }
  return g;
}

inline Vector rosenbrock_standard_gradient(const ConstVectorRef& x) {
  Vector g = Vector::Zero(x.size());
  for (Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x(i + 1) - x(i) * x(i);
    g(i + 1) += 200.0 * a;
    g(i) += -400.0 * x(i) * a - 2.0 * (1.0 - x(i));
  }
  return g;
}

inline double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

/// Negative log-likelihood of a logistic model, sum_i Y_i softplus(-t_i) + (1 - Y_i) softplus(t_i)
/// with t_i = theta . X_i.
inline double logistic_nll(const ConstVectorRef& theta, const Dataset& data) {
  require(theta.size() == data.dim(), "theta dimension does not match the dataset");
  double s = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double y = data.Y()(i);
    require(y == 0.0 || y == 1.0, "logistic_nll needs binary responses in {0, 1}");
    const double t = data.row(i).dot(theta.transpose());
    s += y == 1.0 ? softplus(-t) : softplus(t);
  }
  return s;
}

/// Synthetic logistic-regression sample: an intercept column of ones, dim - 1
/// standard normal features, coefficients theta_j = (-1)^j / (j + 1) and
/// Y_i ~ Bernoulli(1 / (1 + exp(-theta . X_i))).
inline Dataset make_logistic_data(Index n, Index dim, std::uint64_t seed) {
  require(n >= 1 && dim >= 1, "logistic data needs n >= 1 and dim >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector theta(dim);
  for (Index j = 0; j < dim; ++j) theta(j) = (j % 2 == 0 ? 1.0 : -1.0) / static_cast<double>(j + 1);
  Matrix X(n, dim);
  Vector Y(n);
  for (Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (Index j = 1; j < dim; ++j) X(i, j) = normal(rng);
    const double p = 1.0 / (1.0 + std::exp(-X.row(i).dot(theta.transpose())));
    Y(i) = uniform(rng) < p ? 1.0 : 0.0;
  }
  return Dataset(std::move(X), std::move(Y));
}

inline Objective sphere_objective(Index dim) {
  return {"sphere", dim, [](const ConstVectorRef& x) { return x.squaredNorm(); },
          [](const ConstVectorRef& x) { return Vector(2.0 * x); }};
}

inline Objective rosenbrock_paper_objective(Index dim) {
  require(dim >= 2, "rosenbrock needs dimension >= 2");
  return {"rosenbrock-paper", dim, [](const ConstVectorRef& x) { return rosenbrock_paper(x); },
          [](const ConstVectorRef& x) { return rosenbrock_paper_gradient(x); }};
}

inline Objective rosenbrock_standard_objective(Index dim) {
  require(dim >= 2, "rosenbrock needs dimension >= 2");
  return {"rosenbrock-standard", dim,
          [](const ConstVectorRef& x) { return rosenbrock_standard(x); },
          [](const ConstVectorRef& x) { return rosenbrock_standard_gradient(x); }};
}

inline Objective logistic_objective(Dataset data) {
  const Index dim = data.dim();
  auto shared = std::make_shared<const Dataset>(std::move(data));
  Objective obj{"logistic", dim, [shared](const ConstVectorRef& t) { return logistic_nll(t, *shared); },
                [shared](const ConstVectorRef& t) {
                  Vector g = Vector::Zero(t.size());
                  for (Index i = 0; i < shared->n(); ++i) {
                    const double z = shared->row(i).dot(t.transpose());
                    const double p = 1.0 / (1.0 + std::exp(-z));
                    g += (p - shared->Y()(i)) * shared->row(i).transpose();
                  }
                  return g;
                }};
  return obj;
}

enum class StepRule { Fixed, Backtracking };

struct OptConfig {
  Vector x0;
  Index M = 30;            // evaluations per round
  double epsilon = 0.1;    // cloud standard deviation
  StepRule step_rule = StepRule::Backtracking;
  double step_size = 1.0;  // fixed step, or the first trial step of the line search
  Index max_rounds = 100;
  std::optional<Index> max_evals;
  std::optional<double> grad_tol;  // stop once |Delta|_inf < grad_tol
  std::optional<HyperParams> grad_hyper;
  double lambda_scale = 1.0;    // default lambda = scale * eps * sqrt(log D / M) * sd(f on the neighbourhood)
  double epsilon_decay = 1.0;   // per-round multiplier on epsilon; 1 keeps it fixed
  Index max_backtracks = 5;
  Norm norm = Norm::LInf;
  std::uint64_t seed = 0;

  void validate(Index dim) const {
    require(x0.size() == dim, "optimizer: x0 dimension does not match the objective");
    require(x0.allFinite(), "optimizer: x0 must be finite");
    require(M >= 2, "optimizer: M must be >= 2");
    require(epsilon > 0.0 && std::isfinite(epsilon), "optimizer: epsilon must be > 0");
    require(step_size > 0.0, "optimizer: step_size must be > 0");
    require(max_rounds >= 1, "optimizer: max_rounds must be >= 1");
    require(!max_evals || *max_evals >= M, "optimizer: max_evals must cover one round");
    require(max_backtracks >= 1, "optimizer: max_backtracks must be >= 1");
    require(epsilon_decay > 0.0 && epsilon_decay <= 1.0, "optimizer: epsilon_decay must lie in (0, 1]");
  }

  Index round_cap() const {
    Index cap = max_rounds;
    if (max_evals) cap = std::min(cap, *max_evals / M);
    return cap;
  }
};

/// Every evaluated point and the incumbent (archive argmin, first minimum wins).
struct OptState {
  std::vector<Vector> points;
  std::vector<double> values;
  Index incumbent = -1;
  double incumbent_value = std::numeric_limits<double>::infinity();
  Index round = 0;
  Index evals = 0;

  const Vector& incumbent_point() const { return points[static_cast<std::size_t>(incumbent)]; }
};

struct TraceRow {
  Index round = 0;
  Index evals = 0;
  double incumbent_value = 0.0;
  double step = 0.0;       // accepted step length; 0 for the initial round and for random search
  double grad_norm = 0.0;  // |Delta|_2 at the centre
  Vector centre;           // point where Delta was estimated (empty when none was)
  Vector gradient;         // Delta
};

struct OptResult {
  OptState state;
  std::vector<TraceRow> trace;
};

namespace detail {

class Evaluator {
 public:
  Evaluator(const Objective& f, OptState& state) : f_(f), state_(state) {}

  double operator()(const Vector& x) {
    const double v = f_.value(x);
    if (!std::isfinite(v)) {
      throw ObjectiveError("objective '" + f_.name + "' returned a non-finite value at evaluation " +
                           std::to_string(state_.evals + 1));
    }
    state_.points.push_back(x);
    state_.values.push_back(v);
    if (v < state_.incumbent_value) {
      state_.incumbent_value = v;
      state_.incumbent = static_cast<Index>(state_.values.size()) - 1;
    }
    ++state_.evals;
    return v;
  }

 private:
  const Objective& f_;
  OptState& state_;
};

inline void sample_cloud(Evaluator& eval, const Vector& centre, double eps, Index count, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index s = 0; s < count; ++s) {
    Vector p(centre.size());
    for (Index j = 0; j < p.size(); ++j) p(j) = centre(j) + eps * normal(rng);
    eval(p);
  }
}

inline TraceRow trace_row(const OptState& s, double step = 0.0) {
  TraceRow r;
  r.round = s.round;
  r.evals = s.evals;
  r.incumbent_value = s.incumbent_value;
  r.step = step;
  return r;
}

}  // namespace detail

/// Lasso local linear gradient at `centre`, fitted on the archive points
/// nearest to it.
inline GradientEstimate archive_gradient(const OptState& state, const ConstVectorRef& centre,
                                         const OptConfig& config, double eps) {
  const auto n = static_cast<Index>(state.points.size());
  const Index dim = centre.size();
  Matrix X(n, dim);
  Vector Y(n);
  for (Index i = 0; i < n; ++i) {
    X.row(i) = state.points[static_cast<std::size_t>(i)].transpose();
    Y(i) = state.values[static_cast<std::size_t>(i)];
  }
  const Dataset archive(std::move(X), std::move(Y));
  const Index k = std::min(n, config.grad_hyper ? config.grad_hyper->k : 2 * (dim + 1));
  auto nb = knn_radius(archive, centre, k, config.norm);
  double lambda = 0.0;
  if (config.grad_hyper) {
    lambda = config.grad_hyper->lambda;
  } else {
    double mean = 0.0;
    for (Index i : nb.members) mean += archive.Y()(i);
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (Index i : nb.members) var += (archive.Y()(i) - mean) * (archive.Y()(i) - mean);
    const double sd = k > 1 ? std::sqrt(var / static_cast<double>(k - 1)) : 0.0;
    lambda = config.lambda_scale * eps *
             std::sqrt(std::log(static_cast<double>(dim)) / static_cast<double>(config.M)) * sd;
  }
  return fit_neighborhood(archive, std::move(nb), lambda);
}

/// Estimated gradient descent. Each round spends exactly M evaluations: line
/// search trials (backtracking mode) and a Gaussian cloud around the stepped
/// point. The gradient is estimated at the incumbent.
inline OptResult minimize(const Objective& f, const OptConfig& config) {
  config.validate(f.dim);
  OptResult out;
  OptState& state = out.state;
  detail::Evaluator eval(f, state);
  Rng rng(config.seed);
  double eps = config.epsilon;
  const Index rounds = config.round_cap();
  require(rounds >= 1, "optimizer: budget allows no complete round");

  state.round = 1;
  detail::sample_cloud(eval, config.x0, eps, config.M, rng);
  out.trace.push_back(detail::trace_row(state));

  double last_step = config.step_size;
  while (state.round < rounds) {
    const Vector centre = state.incumbent_point();
    const double f_centre = state.incumbent_value;
    const auto est = archive_gradient(state, centre, config, eps);
    const Vector& delta = est.beta;
    if (config.grad_tol && delta.lpNorm<Eigen::Infinity>() < *config.grad_tol) break;

    ++state.round;
    eps *= config.epsilon_decay;
    Vector target = centre;
    Index used = 0;
    double accepted = 0.0;
    if (config.step_rule == StepRule::Fixed) {
      target = centre - config.step_size * delta;
      accepted = config.step_size;
    } else {
      const double slope = delta.squaredNorm();
      double t = 2.0 * last_step;
      const Index tries = std::min(config.max_backtracks, config.M - 1);
      for (; used < tries && slope > 0.0;) {
        const Vector trial = centre - t * delta;
        const double v = eval(trial);
        ++used;
        if (v <= f_centre - 1e-4 * t * slope) {
          target = trial;
          accepted = t;
          break;
        }
        t *= 0.5;
      }
      last_step = accepted > 0.0 ? accepted : t;
    }
    detail::sample_cloud(eval, target, eps, config.M - used, rng);

    auto row = detail::trace_row(state, accepted);
    row.grad_norm = delta.norm();
    row.centre = centre;
    row.gradient = delta;
    out.trace.push_back(std::move(row));
  }
  return out;
}

/// Baseline with the same per-round budget: a Gaussian cloud around the
/// incumbent each round, no gradient step.
inline OptResult random_search_baseline(const Objective& f, const OptConfig& config) {
  config.validate(f.dim);
  OptResult out;
  OptState& state = out.state;
  detail::Evaluator eval(f, state);
  Rng rng(config.seed);
  double eps = config.epsilon;
  const Index rounds = config.round_cap();
  require(rounds >= 1, "optimizer: budget allows no complete round");

  state.round = 1;
  detail::sample_cloud(eval, config.x0, eps, config.M, rng);
  out.trace.push_back(detail::trace_row(state));
  while (state.round < rounds) {
    ++state.round;
    eps *= config.epsilon_decay;
    const Vector centre = state.incumbent_point();
    detail::sample_cloud(eval, centre, eps, config.M, rng);
    out.trace.push_back(detail::trace_row(state));
  }
  return out;
}

}  // namespace gradknn
