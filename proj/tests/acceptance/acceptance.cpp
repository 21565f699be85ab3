// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. The optional first argument is the path of the gradknn tool, used
// by the determinism check.

#include "gradknn/gradknn.hpp"

#include "support/oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace gradknn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

class Runner {
 public:
  void run(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = body();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (out.pass ? "PASS" : "FAIL") << "  " << id << "  " << name << ": " << out.detail << " ("
              << fmt(secs, 3) << " s)" << std::endl;
    failures_ += out.pass ? 0 : 1;
  }

  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

// 1 ---------------------------------------------------------------------------

Outcome lasso_oracle() {
  Rng rng(20240601);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<Index> pick_d(1, 4), pick_k(2, 12);
  const double lambdas[] = {0.0, 0.05, 0.5};
  double worst_gap = 0.0, worst_kkt = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index d = pick_d(rng), k = pick_k(rng);
    LocalProblem p;
    p.centered_design.resize(k, d);
    p.responses.resize(k);
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < d; ++j) p.centered_design(i, j) = z(rng);
      p.responses(i) = z(rng);
    }
    p.lambda = lambdas[t % 3];
    const auto sol = solve(p);
    const auto ref = oracle::lasso_by_sign_enumeration(p);
    worst_gap = std::max(worst_gap, std::abs(sol.objective - ref.value));
    worst_kkt = std::max(worst_kkt, kkt_residual(p, sol));
  }
  return {worst_gap <= 1e-6 && worst_kkt <= 1e-7,
          "200 problems, max |objective - oracle| = " + fmt(worst_gap) + " (<= 1e-6), max KKT = " +
              fmt(worst_kkt) + " (<= 1e-7)"};
}

// 2 ---------------------------------------------------------------------------

Outcome exact_recovery() {
  double worst = 0.0;
  for (Index d : {2, 5, 10}) {
    Rng rng(static_cast<std::uint64_t>(100 + d));
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector coef(d);
    for (Index j = 0; j < d; ++j) coef(j) = z(rng);
    SyntheticSpec spec;
    spec.n = 1000;
    spec.dim = d;
    spec.function = linear_function(coef);
    spec.seed = static_cast<std::uint64_t>(d);
    const auto data = make_synthetic(spec).data;
    for (int q = 0; q < 100; ++q) {
      Vector x(d);
      for (Index j = 0; j < d; ++j) x(j) = u(rng);
      const auto est = local_linear_lasso(data, x, {d + 6, 0.0});
      worst = std::max(worst, (est.beta - coef).norm());
    }
  }
  return {worst < 1e-8, "D in {2,5,10}, 100 queries each, max |beta - grad m|_2 = " + fmt(worst) + " (< 1e-8)"};
}

// 3, 4 ------------------------------------------------------------------------

// m(x) = sin x_1 + sin x_2 on the uniform cube, unit Gaussian noise.
RateExperimentConfig rate_config(Index dim) {
  RateExperimentConfig cfg;
  cfg.spec.dim = dim;
  cfg.spec.active_set = {0, 1};
  cfg.spec.function = additive_function(dim, {{0, TermKind::Sine, 1.0, 1.0}, {1, TermKind::Sine, 1.0, 1.0}});
  cfg.spec.noise_sigma = 1.0;
  cfg.spec.seed = 1;
  cfg.grid_n = {250, 500, 1000, 2000, 4000};
  cfg.replicates = 50;
  cfg.delta = 0.1;
  return cfg;
}

Outcome rate_check(RateEstimator estimator, Index dim, double power) {
  const auto report = run_rate_experiment(rate_config(dim), estimator);
  const double target = report.target_slope;
  bool k_ok = true, envelope_ok = true;
  std::string worst_ratio;
  double ratio = 0.0;
  for (const auto& p : report.points) {
    const auto expected_k = static_cast<Index>(std::ceil(std::pow(static_cast<double>(p.n), power)));
    k_ok = k_ok && p.k == expected_k;
    envelope_ok = envelope_ok && p.quantile_error <= p.envelope;
    ratio = std::max(ratio, p.quantile_error / p.envelope);
  }
  if (!report.slope) return {false, "degenerate report: " + report.flag};
  const double s = *report.slope;
  const bool slope_ok = s >= 2.0 * target && s <= -0.02 && std::abs(s - target) <= 0.5 * std::abs(target);
  return {slope_ok && envelope_ok && k_ok,
          "slope = " + fmt(s) + " in [" + fmt(2.0 * target) + ", -0.02], |slope - (" + fmt(target) +
              ")| <= " + fmt(0.5 * std::abs(target)) + "; max quantile/envelope = " + fmt(ratio) +
              " (<= 1); k = ceil(n^" + fmt(power, 3) + ") " + (k_ok ? "yes" : "no")};
}

// 5 ---------------------------------------------------------------------------

Outcome forest_check() {
  const Index n = 2000, test_n = 500, dim = 50;
  const double sigma = 0.3;
  const std::uint64_t data_seed = 1;
  SplitProtocol provided;
  provided.kind = SplitProtocol::Kind::Provided;
  provided.test = make_synthetic(sparse_forest_spec(test_n, dim, sigma, mix_seed(data_seed, 1))).data;
  const ComparisonDataset suite{"sparse", make_synthetic(sparse_forest_spec(n, dim, sigma, data_seed)).data,
                                std::move(provided)};
  ForestConfig vanilla;
  vanilla.n_trees = 10;
  ForestConfig guided = vanilla;
  guided.guided = true;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const auto table = forest_comparison({suite}, vanilla, guided, seeds);
  const auto& sm = table.summaries.front();
  const double share = static_cast<double>(sm.second_not_worse) / static_cast<double>(sm.seeds);
  return {share >= 0.7 && sm.mean_second < sm.mean_first,
          "guided <= vanilla in " + std::to_string(sm.second_not_worse) + "/" + std::to_string(sm.seeds) +
              " seeds (>= 70%), mean MSE guided " + fmt(sm.mean_second) + " < vanilla " + fmt(sm.mean_first)};
}

// 6 ---------------------------------------------------------------------------

Outcome optimizer_check() {
  struct Case {
    Objective f;
    double start;
  };
  const std::vector<Case> cases{{rosenbrock_standard_objective(10), -1.0}, {sphere_objective(10), 2.0}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    std::vector<double> egd, rs;
    bool monotone = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      OptConfig config;
      config.x0 = Vector::Constant(10, c.start);
      config.M = 30;
      config.max_rounds = 100;
      config.seed = seed;
      for (bool baseline : {false, true}) {
        const auto r = baseline ? random_search_baseline(c.f, config) : minimize(c.f, config);
        ok = ok && r.state.evals == 3000;
        for (std::size_t t = 1; t < r.trace.size(); ++t) {
          monotone = monotone && r.trace[t].incumbent_value <= r.trace[t - 1].incumbent_value;
        }
        (baseline ? rs : egd).push_back(r.state.incumbent_value);
      }
    }
    const double me = median(egd), mr = median(rs);
    ok = ok && me < mr && monotone;
    if (!detail.empty()) detail += "; ";
    detail += c.f.name + " median " + fmt(me) + " < random search " + fmt(mr) +
              (monotone ? ", monotone" : ", NOT monotone");
  }
  return {ok, detail};
}

// 7 ---------------------------------------------------------------------------

Outcome disentanglement_check() {
  Rng rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);

  std::vector<Vector> axis;
  for (int i = 0; i < 50; ++i) {
    Vector g = Vector::Zero(8);
    g(3) = z(rng);
    if (g(3) == 0.0) g(3) = 1.0;
    axis.push_back(g);
  }
  const double axis_score = disentanglement_score(axis);

  const std::vector<Vector> uniform(20, Vector::Ones(16));
  const double uniform_score = disentanglement_score(uniform);
  const double brute = oracle::disentanglement(uniform);

  double worst_rescale = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<Vector> grads, scaled;
    const double c = scale(rng);
    for (int i = 0; i < 30; ++i) {
      Vector g(5);
      for (Index j = 0; j < 5; ++j) g(j) = z(rng);
      scaled.push_back(c * g);
      grads.push_back(std::move(g));
    }
    worst_rescale = std::max(worst_rescale, std::abs(disentanglement_score(grads) - disentanglement_score(scaled)));
  }
  const bool ok = axis_score == 1.0 && std::abs(uniform_score - brute) <= 1e-12 &&
                  std::abs(uniform_score - 0.25) <= 1e-12 && worst_rescale <= 1e-12;
  return {ok, "axis-aligned = " + fmt(axis_score, 17) + ", uniform D=16 = " + fmt(uniform_score, 17) +
                  " vs brute force " + fmt(brute, 17) + ", max rescaling change = " + fmt(worst_rescale)};
}

// 8 ---------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string drop_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.find("\"timestamp\":") != std::string::npos) continue;
    out += line;
    out += '\n';
  }
  return out;
}

Outcome determinism_check(const std::string& tool) {
  if (tool.empty()) return {false, "no tool path given"};
  const fs::path dir = fs::temp_directory_path() / ("gradknn_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  SyntheticSpec spec;
  spec.n = 200;
  spec.dim = 3;
  spec.function = additive_function(3, {{0, TermKind::Sine, 1.0, 2.0}, {1, TermKind::Linear, 1.0, 1.0}});
  spec.noise_sigma = 0.2;
  spec.seed = 3;
  {
    std::ofstream out(dir / "data.csv");
    write_csv(out, make_synthetic(spec).data);
    std::ofstream grads(dir / "grads.csv");
    grads << "g1,g2,g3\n1,0,0\n0.5,0.1,0\n2,0,-0.3\n";
  }
  const std::string data = (dir / "data.csv").string();
  const std::vector<std::string> commands{
      "estimate --data " + data + " --x 0,0,0 --x 0.2,-0.1,0.3",
      "estimate --data " + data + " --x 0,0,0 --k 20 --lambda 0.1",
      "select --data " + data + " --x 0.1,0.1,0.1 --grid 'k=8:8:32;lambda=0,0.01,0.1,1'",
      "rate --replicates 5 --grid-n 100,200,400",
      "--format csv rate --estimator constant --dim 2 --replicates 5 --grid-n 100,200,400",
      "forest --synthetic sparse --n 300 --test-n 100 --dim 10 --seeds 2 --trees 3",
      "forest --data " + data + " --protocol kfold --folds 3 --seeds 2 --trees 3",
      "optimize --objective sphere --dim 5 --x0 1 --rounds 10",
      "optimize --objective rosenbrock-standard --dim 4 --x0 -1 --rounds 10 --method random-search",
      "optimize --objective logistic --dim 3 --n 100 --rounds 5",
      "disentangle --gradients " + (dir / "grads.csv").string(),
      "disentangle --data " + data + " --k 12"};

  int identical = 0;
  std::string failed;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::string reports[2];
    bool ran = true;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = dir / ("out_" + std::to_string(c) + "_" + std::to_string(rep));
      const std::string cmd = "'" + tool + "' --seed 7 --out '" + out.string() + "' " + commands[c] + " 2>/dev/null";
      ran = ran && std::system(cmd.c_str()) == 0 && fs::exists(out);
      if (ran) reports[rep] = read_file(out);
    }
    if (ran && !reports[0].empty() && drop_timestamp(reports[0]) == drop_timestamp(reports[1])) {
      ++identical;
    } else {
      failed += failed.empty() ? "" : ", ";
      failed += "#" + std::to_string(c + 1);
    }
  }
  fs::remove_all(dir);
  const auto total = static_cast<int>(commands.size());
  std::string detail = std::to_string(identical) + "/" + std::to_string(total) +
                       " invocations byte-identical after dropping the timestamp";
  if (!failed.empty()) detail += " (differing or failing: " + failed + ")";
  return {identical == total, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string tool = argc > 1 ? argv[1] : "";
  Runner runner;
  runner.run(1, "lasso oracle equivalence", lasso_oracle);
  runner.run(2, "exact recovery", exact_recovery);
  runner.run(3, "gradient rate", [] { return rate_check(RateEstimator::Gradient, 3, 4.0 / 7.0); });
  runner.run(4, "local constant rate", [] { return rate_check(RateEstimator::Constant, 2, 0.5); });
  runner.run(5, "guided forest", forest_check);
  runner.run(6, "optimizer vs random search", optimizer_check);
  runner.run(7, "disentanglement score", disentanglement_check);
  runner.run(8, "CLI determinism", [&] { return determinism_check(tool); });
  std::cout << (runner.failures() == 0 ? "all criteria passed" : std::to_string(runner.failures()) + " failed")
            << std::endl;
  return runner.failures() == 0 ? 0 : 1;
}
