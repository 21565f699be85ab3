#include "gradknn/gradknn.hpp"
#include "gradknn/report.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace {

using namespace gradknn;

// A flag value that parsed but does not make sense; exits with status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Output {
  std::string out = "-";
  std::string format = "json";
  std::uint64_t seed = 0;
};

// Options naming where output goes rather than what is computed.
const std::set<std::string> kUnechoed = {"help", "version", "out", "trace", "config"};

Json option_value(const CLI::Option* opt) {
  if (opt->get_expected_max() == 0) return Json(opt->count() > 0);  // flag
  if (opt->count() == 0) {
    const auto& d = opt->get_default_str();
    return d.empty() ? Json(nullptr) : Json(d);
  }
  const auto& results = opt->results();
  if (opt->get_expected_max() <= 1 && results.size() == 1) return Json(results.front());
  return Json(results);
}

// Every option of the command (and the global ones), as given or defaulted.
Json echo_config(const CLI::App& app, const CLI::App& sub) {
  Json config;
  for (const auto* scope : {&app, &sub}) {
    for (const auto* opt : scope->get_options()) {
      const auto names = opt->get_lnames();
      if (names.empty() || kUnechoed.count(names.front())) continue;
      config[names.front()] = option_value(opt);
    }
  }
  return config;
}

void emit(const Output& o, const Json& report, const std::string& csv) {
  const std::string text = o.format == "csv" ? csv : dump_report(report);
  if (o.out == "-") {
    std::cout << text;
  } else {
    write_atomic(o.out, text);
  }
}

Vector parse_point(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      const auto v = detail::parse_number(std::string_view(text).substr(start, i - start));
      if (!v) {
        throw UsageError(flag + ": '" + text + "' is not a comma-separated list of finite numbers");
      }
      values.push_back(*v);
      start = i + 1;
    }
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

// A scalar is broadcast to `dim` coordinates.
Vector parse_point_or_scalar(const std::string& text, const std::string& flag, Index dim) {
  Vector v = parse_point(text, flag);
  if (v.size() == 1 && dim > 1) return Vector::Constant(dim, v(0));
  if (v.size() != dim) {
    throw UsageError(flag + ": expected " + std::to_string(dim) + " coordinates, got " +
                     std::to_string(v.size()));
  }
  return v;
}

std::vector<Index> parse_index_list(const std::string& text, const std::string& flag) {
  const Vector v = parse_point(text, flag);
  std::vector<Index> out;
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) < 1.0 || v(i) != std::floor(v(i))) {
      throw UsageError(flag + ": values must be positive integers");
    }
    out.push_back(static_cast<Index>(v(i)));
  }
  return out;
}

Norm norm_flag(const std::string& text) {
  try {
    return parse_norm(text);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--norm: ") + e.what());
  }
}

GridSpec default_grid(const Dataset& data) {
  GridSpec g;
  const Index d1 = data.dim() + 1;
  for (Index k : {d1 + 1, 2 * d1, 4 * d1, 8 * d1}) {
    if (k <= data.n() - 1 && (g.k.empty() || g.k.back() != k)) g.k.push_back(k);
  }
  if (g.k.empty()) g.k.push_back(std::max<Index>(1, data.n() - 1));
  g.lambda.push_back(0.0);
  for (double v : detail::grid_values("logspace(-4,0,9)")) g.lambda.push_back(v);
  return g;
}

GridSpec grid_flag(const std::string& text, const Dataset& data) {
  if (text.empty()) return default_grid(data);
  try {
    return parse_grid_spec(text);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
}

Json grid_json(const GridSpec& g) { return Json{{"k", g.k}, {"lambda", g.lambda}}; }

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string data;
  std::string response = "y";
  bool standardize = false;
  std::vector<std::string> x;
  std::string k = "auto";
  std::string lambda = "auto";
  std::string grid;
  Index n_loo = 0;
  std::string norm = "linf";
  double threshold = kDefaultActiveThreshold;
};

void run_estimate(const EstimateArgs& a, const Output& o, const Json& config) {
  const Norm norm = norm_flag(a.norm);
  std::vector<Vector> queries;
  for (const auto& s : a.x) queries.push_back(parse_point(s, "--x"));
  std::optional<Index> k_fixed;
  std::optional<double> lambda_fixed;
  if (a.k != "auto") {
    const auto v = detail::parse_number(a.k);
    if (!v || *v < 1.0 || *v != std::floor(*v)) throw UsageError("--k: expected a positive integer or 'auto'");
    k_fixed = static_cast<Index>(*v);
  }
  if (a.lambda != "auto") {
    const auto v = detail::parse_number(a.lambda);
    if (!v || *v < 0.0) throw UsageError("--lambda: expected a number >= 0 or 'auto'");
    lambda_fixed = *v;
  }

  const Dataset data = load_csv(a.data, a.response, a.standardize);
  for (const auto& q : queries) {
    if (q.size() != data.dim()) {
      throw UsageError("--x: expected " + std::to_string(data.dim()) + " coordinates, got " +
                       std::to_string(q.size()));
    }
  }
  const bool tuned = !k_fixed || !lambda_fixed;
  GridSpec grid = grid_flag(a.grid, data);
  if (k_fixed) grid.k = {*k_fixed};
  if (lambda_fixed) grid.lambda = {*lambda_fixed};
  const Index n_loo = a.n_loo > 0 ? a.n_loo : std::min<Index>(data.n(), 50);

  std::vector<GradientEstimate> estimates(queries.size());
  std::vector<Json> records(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const Vector x = data.to_model_units(queries[q]);
    HyperParams hyper{grid.k.front(), grid.lambda.front()};
    Json selection;
    if (tuned) {
      const auto sel = select_hyperparams_detailed(data, x, grid.k, grid.lambda, n_loo, norm);
      hyper = sel.best;
      const auto row = std::find(grid.k.begin(), grid.k.end(), hyper.k) - grid.k.begin();
      const auto col = std::find(grid.lambda.begin(), grid.lambda.end(), hyper.lambda) - grid.lambda.begin();
      selection = Json{{"n_loo", n_loo}, {"loo_error", sel.errors(row, col)}};
    }
    estimates[q] = local_linear_lasso(data, x, hyper, norm);
    Json rec = estimate_json(estimates[q], a.threshold);
    rec["query"] = vector_json(queries[q]);
    if (data.standardization()) rec["beta_original_units"] = vector_json(data.gradient_in_original_units(estimates[q].beta));
    rec["selected"] = tuned;
    if (tuned) rec["selection"] = selection;
    records[q] = std::move(rec);
  });

  Json result;
  result["n"] = data.n();
  result["dim"] = data.dim();
  result["features"] = data.feature_names();
  result["response"] = data.response_name();
  result["standardized"] = data.standardization().has_value();
  if (tuned) result["grid"] = grid_json(grid);
  result["queries"] = records;
  emit(o, make_report("estimate", o.seed, config, std::move(result)), estimates_csv(estimates, a.threshold));
}

// ---------------------------------------------------------------------------
// select

struct SelectArgs {
  std::string data;
  std::string response = "y";
  bool standardize = false;
  std::string x;
  std::string grid;
  Index n_loo = 0;
  std::string norm = "linf";
};

void run_select(const SelectArgs& a, const Output& o, const Json& config) {
  const Norm norm = norm_flag(a.norm);
  const Vector raw = parse_point(a.x, "--x");
  const Dataset data = load_csv(a.data, a.response, a.standardize);
  if (raw.size() != data.dim()) {
    throw UsageError("--x: expected " + std::to_string(data.dim()) + " coordinates, got " + std::to_string(raw.size()));
  }
  const GridSpec grid = grid_flag(a.grid, data);
  const Index n_loo = a.n_loo > 0 ? a.n_loo : std::min<Index>(data.n(), 50);
  const auto sel = select_hyperparams_detailed(data, data.to_model_units(raw), grid.k, grid.lambda, n_loo, norm);

  Json errors = Json::array();
  std::string csv = "k,lambda,loo_error\n";
  for (std::size_t a_ = 0; a_ < grid.k.size(); ++a_) {
    Json row = Json::array();
    for (std::size_t b = 0; b < grid.lambda.size(); ++b) {
      const double e = sel.errors(static_cast<Index>(a_), static_cast<Index>(b));
      row.push_back(e);
      csv += std::to_string(grid.k[a_]) + ',' + format_double(grid.lambda[b]) + ',' + format_double(e) + '\n';
    }
    errors.push_back(std::move(row));
  }
  Json result;
  result["query"] = vector_json(raw);
  result["n_loo"] = n_loo;
  result["grid"] = grid_json(grid);
  result["best"] = sel.best;
  result["errors"] = std::move(errors);
  result["held_out"] = sel.held_out;
  emit(o, make_report("select", o.seed, config, std::move(result)), csv);
}

// ---------------------------------------------------------------------------
// rate

struct RateArgs {
  std::string estimator = "gradient";
  Index dim = 3;
  std::string function = "sine";
  double sigma = 1.0;
  std::string grid_n = "250,500,1000,2000,4000";
  Index replicates = 50;
  double delta = 0.1;
  std::string norm = "linf";
  std::string design = "cube";
};

RegressionFunction rate_function(const std::string& name, Index dim, std::vector<Index>& active) {
  if (name == "sine" || name == "mixed" || name == "linear") {
    if (dim < 2) throw UsageError("--function " + name + " needs --dim >= 2");
    active = {0, 1};
  }
  if (name == "sine") return additive_function(dim, {{0, TermKind::Sine, 1.0, 1.0}, {1, TermKind::Sine, 1.0, 1.0}});
  if (name == "mixed") return additive_function(dim, {{0, TermKind::Sine, 1.0, 2.0}, {1, TermKind::Square, 1.0, 1.0}});
  if (name == "linear") {
    Vector c = Vector::Zero(dim);
    c(0) = 2.0;
    c(1) = -1.0;
    return linear_function(c);
  }
  if (name == "constant") {
    active.clear();
    return constant_function(dim, 1.0);
  }
  throw UsageError("--function: unknown function '" + name + "' (expected sine, mixed, linear or constant)");
}

void run_rate(const RateArgs& a, const Output& o, const Json& config) {
  RateExperimentConfig cfg;
  if (a.dim < 1) throw UsageError("--dim: must be >= 1");
  cfg.spec.dim = a.dim;
  cfg.spec.function = rate_function(a.function, a.dim, cfg.spec.active_set);
  cfg.spec.noise_sigma = a.sigma;
  cfg.spec.seed = o.seed;
  if (a.design == "cube") {
    cfg.spec.design = Design::UniformCube;
  } else if (a.design == "gaussian") {
    cfg.spec.design = Design::Gaussian;
  } else {
    throw UsageError("--design: expected cube or gaussian");
  }
  cfg.grid_n = parse_index_list(a.grid_n, "--grid-n");
  cfg.replicates = a.replicates;
  cfg.delta = a.delta;
  cfg.norm = norm_flag(a.norm);
  RateEstimator estimator;
  try {
    estimator = parse_rate_estimator(a.estimator);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--estimator: ") + e.what());
  }
  const RateReport report = run_rate_experiment(cfg, estimator);
  emit(o, make_report("rate", o.seed, config, Json(report)), rate_csv(report));
}

// ---------------------------------------------------------------------------
// forest

struct ForestArgs {
  std::string synthetic;
  std::string data;
  std::string response = "y";
  bool standardize = false;
  Index n = 2000;
  Index test_n = 500;
  Index dim = 50;
  double sigma = 0.3;
  std::string protocol = "holdout";
  double test_fraction = 0.25;
  Index folds = 5;
  Index seeds = 20;
  Index trees = 10;
  Index min_leaf = 5;
  Index max_depth = 1000;
  bool no_bootstrap = false;
  Index grad_k = 0;
  double grad_lambda = -1.0;
  bool auto_hyper = false;
  Index gradient_points = 32;
  Index min_guided_size = 0;
  std::string norm = "linf";
};

void run_forest(const ForestArgs& a, const Output& o, const Json& config) {
  if (a.synthetic.empty() == a.data.empty()) throw UsageError("forest: give exactly one of --synthetic or --data");
  if (a.seeds < 1) throw UsageError("--seeds: must be >= 1");
  if ((a.grad_k > 0) != (a.grad_lambda >= 0.0)) {
    throw UsageError("--grad-k and --grad-lambda must be given together");
  }
  auto make_dataset = [&]() -> ComparisonDataset {
    SplitProtocol protocol;
    if (!a.synthetic.empty()) {
      if (a.synthetic != "sparse") throw UsageError("--synthetic: only 'sparse' is available");
      protocol.kind = SplitProtocol::Kind::Provided;
      protocol.test = make_synthetic(sparse_forest_spec(a.test_n, a.dim, a.sigma, mix_seed(o.seed, 1))).data;
      return {"sparse", make_synthetic(sparse_forest_spec(a.n, a.dim, a.sigma, o.seed)).data, std::move(protocol)};
    }
    if (a.protocol == "holdout") {
      protocol.kind = SplitProtocol::Kind::Holdout;
      protocol.test_fraction = a.test_fraction;
    } else if (a.protocol == "kfold") {
      protocol.kind = SplitProtocol::Kind::KFold;
      protocol.folds = a.folds;
    } else {
      throw UsageError("--protocol: expected holdout or kfold");
    }
    return {a.data, load_csv(a.data, a.response, a.standardize), std::move(protocol)};
  };
  const ComparisonDataset d = make_dataset();
  ForestConfig vanilla;
  vanilla.n_trees = a.trees;
  vanilla.min_leaf_size = a.min_leaf;
  vanilla.max_depth = a.max_depth;
  vanilla.bootstrap = !a.no_bootstrap;
  vanilla.gradient_points = a.gradient_points;
  vanilla.min_guided_size = a.min_guided_size;
  vanilla.auto_hyper = a.auto_hyper;
  vanilla.norm = norm_flag(a.norm);
  if (a.grad_k > 0) vanilla.grad_hyper = HyperParams{a.grad_k, a.grad_lambda};
  ForestConfig guided = vanilla;
  guided.guided = true;
  std::vector<std::uint64_t> seeds;
  for (Index s = 0; s < a.seeds; ++s) seeds.push_back(o.seed + static_cast<std::uint64_t>(s));
  const auto table = forest_comparison({d}, vanilla, guided, seeds);
  emit(o, make_report("forest", o.seed, config, Json(table)), comparison_csv(table));
}

// ---------------------------------------------------------------------------
// optimize

struct OptimizeArgs {
  std::string objective = "rosenbrock-standard";
  Index dim = 10;
  std::string x0 = "0";
  std::string method = "egd";
  Index M = 30;
  double epsilon = 0.1;
  Index rounds = 100;
  Index max_evals = 0;
  double grad_tol = 0.0;
  std::string step = "backtracking";
  double step_size = 1.0;
  Index grad_k = 0;
  double grad_lambda = -1.0;
  double lambda_scale = 1.0;
  double epsilon_decay = 1.0;
  std::string data;
  std::string response = "y";
  Index n = 500;
  std::string trace;
};

void run_optimize(const OptimizeArgs& a, const Output& o, const Json& config) {
  Objective f;
  if (a.objective == "sphere") {
    f = sphere_objective(a.dim);
  } else if (a.objective == "rosenbrock-paper") {
    if (a.dim < 2) throw UsageError("--dim: rosenbrock needs >= 2");
    f = rosenbrock_paper_objective(a.dim);
  } else if (a.objective == "rosenbrock-standard") {
    if (a.dim < 2) throw UsageError("--dim: rosenbrock needs >= 2");
    f = rosenbrock_standard_objective(a.dim);
  } else if (a.objective == "logistic") {
    f = logistic_objective(a.data.empty() ? make_logistic_data(a.n, a.dim, o.seed) : load_csv(a.data, a.response));
  } else {
    throw UsageError("--objective: expected sphere, rosenbrock-paper, rosenbrock-standard or logistic");
  }
  if ((a.grad_k > 0) != (a.grad_lambda >= 0.0)) {
    throw UsageError("--grad-k and --grad-lambda must be given together");
  }
  OptConfig c;
  c.x0 = parse_point_or_scalar(a.x0, "--x0", f.dim);
  c.M = a.M;
  c.epsilon = a.epsilon;
  c.max_rounds = a.rounds;
  if (a.max_evals > 0) c.max_evals = a.max_evals;
  if (a.grad_tol > 0.0) c.grad_tol = a.grad_tol;
  if (a.step == "fixed") {
    c.step_rule = StepRule::Fixed;
  } else if (a.step != "backtracking") {
    throw UsageError("--step: expected fixed or backtracking");
  }
  c.step_size = a.step_size;
  if (a.grad_k > 0) c.grad_hyper = HyperParams{a.grad_k, a.grad_lambda};
  c.lambda_scale = a.lambda_scale;
  c.epsilon_decay = a.epsilon_decay;
  c.seed = o.seed;

  OptResult r;
  if (a.method == "egd") {
    r = minimize(f, c);
  } else if (a.method == "random-search") {
    r = random_search_baseline(f, c);
  } else {
    throw UsageError("--method: expected egd or random-search");
  }
  Json result;
  result["objective"] = f.name;
  result["dim"] = f.dim;
  result["method"] = a.method;
  result["rounds"] = r.state.round;
  result["evals"] = r.state.evals;
  result["final_value"] = r.state.incumbent_value;
  result["incumbent"] = vector_json(r.state.incumbent_point());
  result["trace"] = trace_json(r);
  const std::string csv = trace_csv(r);
  if (!a.trace.empty()) write_atomic(a.trace, csv);
  emit(o, make_report("optimize", o.seed, config, std::move(result)), csv);
}

// ---------------------------------------------------------------------------
// disentangle

struct DisentangleArgs {
  std::string gradients;
  std::string data;
  std::string response = "y";
  Index k = 0;
  double lambda = 0.0;
  std::string norm = "linf";
};

void run_disentangle(const DisentangleArgs& a, const Output& o, const Json& config) {
  if (a.gradients.empty() == a.data.empty()) throw UsageError("disentangle: give exactly one of --gradients or --data");
  std::vector<Vector> grads;
  Index dim = 0;
  if (!a.gradients.empty()) {
    const auto table = load_numeric_csv(a.gradients);
    dim = table.values.cols();
    for (Index i = 0; i < table.values.rows(); ++i) grads.push_back(table.values.row(i).transpose());
  } else {
    if (a.k < 1) throw UsageError("--k: required with --data and must be >= 1");
    const Dataset latent = load_csv(a.data, a.response);
    dim = latent.dim();
    const auto estimates = estimate_at_samples(latent, HyperParams{a.k, a.lambda}, norm_flag(a.norm));
    for (const auto& e : estimates) grads.push_back(e.beta);
  }
  const double score = disentanglement_score(grads);
  Vector gbar = Vector::Zero(dim);
  for (const auto& g : grads) gbar += g.cwiseAbs();
  gbar /= static_cast<double>(grads.size());
  Json result{{"n", grads.size()}, {"dim", dim}, {"score", score}, {"mean_abs_gradient", vector_json(gbar)}};
  emit(o, make_report("disentangle", o.seed, config, std::move(result)), "score\n" + format_double(score) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nearest-neighbour gradient estimation and experiments", "gradknn"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "Read options from a TOML or INI file");
  app.require_subcommand(1);
  app.fallthrough();
  Output out;
  app.add_option("--seed", out.seed, "Random seed")->capture_default_str();
  app.add_option("--out,-o", out.out, "Output file, '-' for stdout")->capture_default_str();
  app.add_option("--format", out.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "Gradient estimates at query points");
  c_est->add_option("--data", est.data, "CSV file with a header row")->required();
  c_est->add_option("--response", est.response, "Response column name or index")->capture_default_str();
  c_est->add_flag("--standardize", est.standardize, "Standardize features before fitting");
  c_est->add_option("--x", est.x, "Query point, comma separated; repeatable")->required();
  c_est->add_option("--k", est.k, "Neighbours, or 'auto'")->capture_default_str();
  c_est->add_option("--lambda", est.lambda, "Lasso penalty, or 'auto'")->capture_default_str();
  c_est->add_option("--grid", est.grid, "Selection grid, e.g. 'k=5:5:50;lambda=logspace(-4,0,9)'");
  c_est->add_option("--n-loo", est.n_loo, "Held-out points for selection (0: min(n, 50))")->capture_default_str();
  c_est->add_option("--norm", est.norm, "linf, l2 or l1")->capture_default_str();
  c_est->add_option("--threshold", est.threshold, "Active-set threshold")->capture_default_str();

  SelectArgs sel;
  auto* c_sel = app.add_subcommand("select", "Local leave-one-out selection of (k, lambda)");
  c_sel->add_option("--data", sel.data, "CSV file with a header row")->required();
  c_sel->add_option("--response", sel.response, "Response column name or index")->capture_default_str();
  c_sel->add_flag("--standardize", sel.standardize, "Standardize features before fitting");
  c_sel->add_option("--x", sel.x, "Query point, comma separated")->required();
  c_sel->add_option("--grid", sel.grid, "Selection grid, e.g. 'k=5:5:50;lambda=logspace(-4,0,9)'");
  c_sel->add_option("--n-loo", sel.n_loo, "Held-out points (0: min(n, 50))")->capture_default_str();
  c_sel->add_option("--norm", sel.norm, "linf, l2 or l1")->capture_default_str();

  RateArgs rate;
  auto* c_rate = app.add_subcommand("rate", "Monte Carlo convergence-rate experiment");
  c_rate->add_option("--estimator", rate.estimator, "gradient or constant")->capture_default_str();
  c_rate->add_option("--dim", rate.dim, "Ambient dimension")->capture_default_str();
  c_rate->add_option("--function", rate.function, "sine, mixed, linear or constant")->capture_default_str();
  c_rate->add_option("--sigma", rate.sigma, "Noise standard deviation")->capture_default_str();
  c_rate->add_option("--grid-n", rate.grid_n, "Sample sizes, comma separated")->capture_default_str();
  c_rate->add_option("--replicates", rate.replicates, "Replicates per sample size")->capture_default_str();
  c_rate->add_option("--delta", rate.delta, "Confidence level")->capture_default_str();
  c_rate->add_option("--norm", rate.norm, "linf, l2 or l1")->capture_default_str();
  c_rate->add_option("--design", rate.design, "cube or gaussian")->capture_default_str();

  ForestArgs fa;
  auto* c_forest = app.add_subcommand("forest", "Paired vanilla / guided forest comparison");
  c_forest->add_option("--synthetic", fa.synthetic, "Built-in suite: sparse");
  c_forest->add_option("--data", fa.data, "CSV file with a header row");
  c_forest->add_option("--response", fa.response, "Response column name or index")->capture_default_str();
  c_forest->add_flag("--standardize", fa.standardize, "Standardize features");
  c_forest->add_option("--n", fa.n, "Synthetic training size")->capture_default_str();
  c_forest->add_option("--test-n", fa.test_n, "Synthetic test size")->capture_default_str();
  c_forest->add_option("--dim", fa.dim, "Synthetic dimension")->capture_default_str();
  c_forest->add_option("--sigma", fa.sigma, "Synthetic noise standard deviation")->capture_default_str();
  c_forest->add_option("--protocol", fa.protocol, "holdout or kfold (CSV data)")->capture_default_str();
  c_forest->add_option("--test-fraction", fa.test_fraction, "Holdout test fraction")->capture_default_str();
  c_forest->add_option("--folds", fa.folds, "k-fold count")->capture_default_str();
  c_forest->add_option("--seeds", fa.seeds, "Paired seeds, starting at --seed")->capture_default_str();
  c_forest->add_option("--trees", fa.trees, "Trees per forest")->capture_default_str();
  c_forest->add_option("--min-leaf", fa.min_leaf, "Minimum leaf size")->capture_default_str();
  c_forest->add_option("--max-depth", fa.max_depth, "Maximum depth")->capture_default_str();
  c_forest->add_flag("--no-bootstrap", fa.no_bootstrap, "Grow trees on the full sample");
  c_forest->add_option("--grad-k", fa.grad_k, "Node gradient neighbours (with --grad-lambda)");
  c_forest->add_option("--grad-lambda", fa.grad_lambda, "Node gradient penalty (with --grad-k)");
  c_forest->add_flag("--auto-hyper", fa.auto_hyper, "Select node (k, lambda) by local leave-one-out");
  c_forest->add_option("--gradient-points", fa.gradient_points, "Node members used for split weights")->capture_default_str();
  c_forest->add_option("--min-guided-size", fa.min_guided_size, "Smaller nodes reuse the parent weights (0: 2D+2)")->capture_default_str();
  c_forest->add_option("--norm", fa.norm, "linf, l2 or l1")->capture_default_str();

  OptimizeArgs oa;
  auto* c_opt = app.add_subcommand("optimize", "Estimated gradient descent on a built-in objective");
  c_opt->add_option("--objective", oa.objective, "sphere, rosenbrock-paper, rosenbrock-standard or logistic")->capture_default_str();
  c_opt->add_option("--dim", oa.dim, "Dimension")->capture_default_str();
  c_opt->add_option("--x0", oa.x0, "Start point, comma separated or one value for all")->capture_default_str();
  c_opt->add_option("--method", oa.method, "egd or random-search")->capture_default_str();
  c_opt->add_option("--M", oa.M, "Evaluations per round")->capture_default_str();
  c_opt->add_option("--epsilon", oa.epsilon, "Cloud standard deviation")->capture_default_str();
  c_opt->add_option("--rounds", oa.rounds, "Round cap")->capture_default_str();
  c_opt->add_option("--max-evals", oa.max_evals, "Evaluation cap (0: none)")->capture_default_str();
  c_opt->add_option("--grad-tol", oa.grad_tol, "Stop when the gradient max-norm is below (0: off)")->capture_default_str();
  c_opt->add_option("--step", oa.step, "backtracking or fixed")->capture_default_str();
  c_opt->add_option("--step-size", oa.step_size, "Fixed step or first line-search step")->capture_default_str();
  c_opt->add_option("--grad-k", oa.grad_k, "Archive neighbours (with --grad-lambda)");
  c_opt->add_option("--grad-lambda", oa.grad_lambda, "Archive fit penalty (with --grad-k)");
  c_opt->add_option("--lambda-scale", oa.lambda_scale, "Scale of the default penalty")->capture_default_str();
  c_opt->add_option("--epsilon-decay", oa.epsilon_decay, "Per-round epsilon multiplier")->capture_default_str();
  c_opt->add_option("--data", oa.data, "Logistic data CSV with a binary response");
  c_opt->add_option("--response", oa.response, "Response column for --data")->capture_default_str();
  c_opt->add_option("--n", oa.n, "Synthetic logistic sample size")->capture_default_str();
  c_opt->add_option("--trace", oa.trace, "Also write the incumbent trace as CSV");

  DisentangleArgs da;
  auto* c_dis = app.add_subcommand("disentangle", "Gradient concentration score of a latent space");
  c_dis->add_option("--gradients", da.gradients, "CSV of gradient rows");
  c_dis->add_option("--data", da.data, "Latent CSV with the attribute as response");
  c_dis->add_option("--response", da.response, "Attribute column")->capture_default_str();
  c_dis->add_option("--k", da.k, "Neighbours for estimates from --data");
  c_dis->add_option("--lambda", da.lambda, "Penalty for estimates from --data")->capture_default_str();
  c_dis->add_option("--norm", da.norm, "linf, l2 or l1")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const CLI::App* sub = app.get_subcommands().front();
    const Json config = echo_config(app, *sub);
    if (sub == c_est) run_estimate(est, out, config);
    else if (sub == c_sel) run_select(sel, out, config);
    else if (sub == c_rate) run_rate(rate, out, config);
    else if (sub == c_forest) run_forest(fa, out, config);
    else if (sub == c_opt) run_optimize(oa, out, config);
    else if (sub == c_dis) run_disentangle(da, out, config);
  } catch (const UsageError& e) {
    std::cerr << "gradknn: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gradknn: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
