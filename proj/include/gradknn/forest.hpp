#pragma once

#include "gradknn/common.hpp"
#include "gradknn/dataset.hpp"
#include "gradknn/gradient.hpp"
#include "gradknn/neighbors.hpp"
#include "gradknn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace gradknn {

struct Split {
  Index dimension = 0;
  double threshold = 0.0;
  double gain = 0.0;  // reduction of within-node squared error
};

struct TreeNode {
  std::vector<Index> members;  // dataset rows, with bootstrap multiplicity
  std::optional<Split> split;
  std::optional<std::pair<std::size_t, std::size_t>> children;
  double prediction = 0.0;
  Index depth = 0;
  Vector weights;  // split-dimension weights used at this node (empty for leaves)
};

/// Replaces the node gradient weights; receives the data and the node members.
using SplitWeightFn = std::function<Vector(const Dataset&, std::span<const Index>)>;

struct ForestConfig {
  Index n_trees = 100;
  Index min_leaf_size = 5;
  Index max_depth = 1'000;
  bool bootstrap = true;
  bool guided = false;
  // Node-level gradient fits. Unset: k = min(node_size - 1, 2D) and
  // lambda = 1e-3 * the local problem's kill threshold.
  std::optional<HyperParams> grad_hyper;
  bool auto_hyper = false;  // local leave-one-out per guided node on a coarse grid
  std::uint64_t seed = 0;
  Index gradient_points = 32;  // node members at which the gradient is estimated
  Index min_guided_size = 0;   // smaller nodes inherit the parent's weights; 0 means 2D + 2
  Index n_candidates = 0;      // candidate dimensions per split; 0 means ceil(sqrt(D))
  Norm norm = Norm::LInf;
  SplitWeightFn weight_override;

  void validate() const {
    require(n_trees >= 1, "forest: n_trees must be >= 1");
    require(min_leaf_size >= 2, "forest: min_leaf_size must be >= 2");
    require(max_depth >= 0, "forest: max_depth must be >= 0");
    require(gradient_points >= 1, "forest: gradient_points must be >= 1");
    require(n_candidates >= 0 && min_guided_size >= 0, "forest: counts must be >= 0");
    if (grad_hyper) {
      require(grad_hyper->k >= 1 && grad_hyper->lambda >= 0.0, "forest: invalid grad_hyper");
    }
  }

  Index candidate_count(Index dim) const {
    if (n_candidates > 0) return std::min(n_candidates, dim);
    return std::min<Index>(dim, static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(dim)))));
  }
};

/// Draws `count` distinct dimensions with probability proportional to
/// `weights`, sequentially without replacement. Zero weights are never drawn;
/// if every weight is zero the draw is uniform.
inline std::vector<Index> sample_dimensions(const Vector& weights, Index count, Rng& rng) {
  Vector w = weights;
  for (Index j = 0; j < w.size(); ++j) {
    if (!(w(j) > 0.0) || !std::isfinite(w(j))) w(j) = 0.0;
  }
  if (w.sum() <= 0.0) w.setOnes();
  w /= w.sum();
  const Index positive = (w.array() > 0.0).count();
  const Index m = std::min(count, positive);
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(m));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index draw = 0; draw < m; ++draw) {
    const double total = w.sum();
    const double u = unit(rng) * total;
    double acc = 0.0;
    Index pick = -1;
    for (Index j = 0; j < w.size(); ++j) {
      if (w(j) <= 0.0) continue;
      acc += w(j);
      pick = j;
      if (u < acc) break;
    }
    out.push_back(pick);
    w(pick) = 0.0;
  }
  return out;
}

/// omega_j = sum over sampled node members of |d_j m(X_i)|, each gradient
/// fitted with neighbourhoods restricted to the node.
inline Vector node_gradient_weights(const Dataset& data, std::span<const Index> members,
                                    const ForestConfig& config) {
  const Index dim = data.dim();
  const auto size = static_cast<Index>(members.size());
  Vector omega = Vector::Zero(dim);
  if (size < 2) return omega;

  std::optional<HyperParams> hyper = config.grad_hyper;
  double relative_lambda = 1e-3;
  if (config.auto_hyper) {
    std::vector<Index> unique(members.begin(), members.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    const auto u = static_cast<Index>(unique.size());
    if (u >= 3) {
      const Dataset local = data.subset(unique);
      const Vector centre = local.X().colwise().mean().transpose();
      std::vector<Index> grid_k{std::min(u - 1, dim + 2), std::min(u - 1, 2 * dim)};
      grid_k.erase(std::unique(grid_k.begin(), grid_k.end()), grid_k.end());
      const auto probe = make_local_problem(local, knn_radius(local, centre, grid_k.back(), config.norm), 0.0);
      const double scale = lambda_max(probe);
      std::vector<double> grid_lambda{0.0, 1e-3 * scale, 1e-2 * scale, 1e-1 * scale};
      hyper = select_hyperparams(local, centre, grid_k, grid_lambda, std::min<Index>(8, u),
                                 config.norm);
    }
  }

  const Index points = std::min(config.gradient_points, size);
  for (Index p = 0; p < points; ++p) {
    // Evenly spaced members; no randomness, so rng streams match the vanilla forest.
    const Index pos = (p * size) / points;
    const Index row = members[static_cast<std::size_t>(pos)];
    const Vector xi = data.row(row).transpose();
    Index k = hyper ? std::min(hyper->k, size) : std::min(size - 1, 2 * dim);
    k = std::max<Index>(k, 1);
    auto nb = knn_among(data, xi, k, config.norm, members);
    auto problem = make_local_problem(data, nb, 0.0);
    problem.lambda = hyper ? hyper->lambda : relative_lambda * lambda_max(problem);
    const auto sol = solve(problem);
    omega += sol.beta.cwiseAbs();
  }
  return omega;
}

struct SplitDecision {
  std::optional<Split> split;  // empty: make a leaf
  std::vector<Index> candidates;
  Vector weights;
};

namespace detail {

inline double node_mean(const Dataset& data, std::span<const Index> members) {
  double s = 0.0;
  for (Index i : members) s += data.Y()(i);
  return s / static_cast<double>(members.size());
}

// Two-pass: returns (sum of squares about the mean, sum of raw squares).
inline std::pair<double, double> sum_squared_error(const Dataset& data,
                                                   std::span<const Index> members, double mean) {
  double sse = 0.0, raw = 0.0;
  for (Index i : members) {
    const double y = data.Y()(i);
    sse += (y - mean) * (y - mean);
    raw += y * y;
  }
  return {sse, raw};
}

// Best threshold on one dimension: midpoints of sorted unique values, children
// of at least min_leaf members.
inline std::optional<Split> best_threshold(const Dataset& data, std::span<const Index> members,
                                           Index dim, Index min_leaf, double mean,
                                           double total_sse) {
  std::vector<std::pair<double, double>> xy;
  xy.reserve(members.size());
  for (Index i : members) xy.emplace_back(data.X()(i, dim), data.Y()(i) - mean);
  std::sort(xy.begin(), xy.end());
  const auto n = static_cast<Index>(xy.size());
  double tot_s = 0.0, tot_ss = 0.0;
  for (const auto& [x, y] : xy) {
    tot_s += y;
    tot_ss += y * y;
  }
  std::optional<Split> best;
  double left_s = 0.0, left_ss = 0.0;
  for (Index c = 0; c + 1 < n; ++c) {
    const double y = xy[static_cast<std::size_t>(c)].second;
    left_s += y;
    left_ss += y * y;
    const Index nl = c + 1, nr = n - nl;
    if (nl < min_leaf) continue;
    if (nr < min_leaf) break;
    const double xl = xy[static_cast<std::size_t>(c)].first;
    const double xr = xy[static_cast<std::size_t>(c + 1)].first;
    if (!(xl < xr)) continue;
    const double right_s = tot_s - left_s, right_ss = tot_ss - left_ss;
    const double sse = std::max(0.0, left_ss - left_s * left_s / static_cast<double>(nl)) +
                       std::max(0.0, right_ss - right_s * right_s / static_cast<double>(nr));
    const double gain = total_sse - sse;
    if (!best || gain > best->gain) {
      double mid = 0.5 * (xl + xr);
      if (!(mid < xr)) mid = xl;  // keeps xl <= mid < xr under rounding
      best = Split{dim, mid, gain};
    }
  }
  return best;
}

}  // namespace detail

/// Chooses the split of one node. `inherited` supplies weights for guided nodes
/// below min_guided_size.
inline SplitDecision split_node(const Dataset& data, std::span<const Index> members,
                                const ForestConfig& config, Rng& rng,
                                const Vector* inherited = nullptr) {
  SplitDecision out;
  const auto size = static_cast<Index>(members.size());
  const Index dim = data.dim();
  if (size < 2 * config.min_leaf_size) return out;

  if (config.weight_override) {
    out.weights = config.weight_override(data, members);
    require(out.weights.size() == dim, "weight override returned the wrong dimension");
  } else if (config.guided) {
    const Index min_guided = config.min_guided_size > 0 ? config.min_guided_size : 2 * dim + 2;
    if (inherited != nullptr && inherited->size() == dim && size < min_guided) {
      out.weights = *inherited;
    } else {
      out.weights = node_gradient_weights(data, members, config);
    }
  } else {
    out.weights = Vector::Ones(dim);
  }
  out.candidates = sample_dimensions(out.weights, config.candidate_count(dim), rng);

  const double mean = detail::node_mean(data, members);
  const auto [total, raw] = detail::sum_squared_error(data, members, mean);
  // A node whose responses agree to rounding error is a leaf.
  if (total <= 1e-24 * raw || total == 0.0) return out;
  const double guard = 1e-12 * total;
  for (Index j : out.candidates) {
    auto s = detail::best_threshold(data, members, j, config.min_leaf_size, mean, total);
    if (s && s->gain > guard && (!out.split || s->gain > out.split->gain)) out.split = s;
  }
  return out;
}

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(const ConstVectorRef& x) const {
    std::size_t at = 0;
    while (nodes_[at].split) {
      const auto& s = *nodes_[at].split;
      at = x(s.dimension) <= s.threshold ? nodes_[at].children->first : nodes_[at].children->second;
    }
    return nodes_[at].prediction;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

inline Tree grow_tree(const Dataset& data, const ForestConfig& config, Rng& rng) {
  std::vector<Index> root(static_cast<std::size_t>(data.n()));
  if (config.bootstrap) {
    std::uniform_int_distribution<Index> pick(0, data.n() - 1);
    for (auto& r : root) r = pick(rng);
  } else {
    std::iota(root.begin(), root.end(), Index{0});
  }
  std::vector<TreeNode> nodes;
  nodes.push_back(TreeNode{std::move(root), {}, {}, 0.0, 0, {}});
  std::vector<std::size_t> pending{0};
  std::vector<Vector> parent_weights{Vector()};
  while (!pending.empty()) {
    const std::size_t at = pending.back();
    pending.pop_back();
    const Vector inherited = std::move(parent_weights.back());
    parent_weights.pop_back();

    auto& node = nodes[at];
    double s = 0.0;
    for (Index i : node.members) s += data.Y()(i);
    node.prediction = s / static_cast<double>(node.members.size());
    if (node.depth >= config.max_depth) continue;

    auto decision = split_node(data, node.members, config, rng,
                               inherited.size() > 0 ? &inherited : nullptr);
    if (!decision.split) continue;
    const Split split = *decision.split;
    std::vector<Index> left, right;
    for (Index i : node.members) {
      (data.X()(i, split.dimension) <= split.threshold ? left : right).push_back(i);
    }
    const Index depth = node.depth + 1;
    node.split = split;
    node.weights = decision.weights;
    const std::size_t li = nodes.size();
    node.children = std::make_pair(li, li + 1);
    // `node` is invalidated by the push_backs below.
    nodes.push_back(TreeNode{std::move(left), {}, {}, 0.0, depth, {}});
    nodes.push_back(TreeNode{std::move(right), {}, {}, 0.0, depth, {}});
    pending.push_back(li + 1);
    parent_weights.push_back(decision.weights);
    pending.push_back(li);
    parent_weights.push_back(std::move(decision.weights));
  }
  return Tree(std::move(nodes));
}

class Forest {
 public:
  explicit Forest(std::vector<Tree> trees) : trees_(std::move(trees)) {}

  double predict(const ConstVectorRef& x) const {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(x);
    return s / static_cast<double>(trees_.size());
  }

  Vector predict_rows(const Matrix& X) const {
    Vector out(X.rows());
    for (Index i = 0; i < X.rows(); ++i) out(i) = predict(X.row(i).transpose());
    return out;
  }

  const std::vector<Tree>& trees() const { return trees_; }

 private:
  std::vector<Tree> trees_;
};

/// Per-tree generator, a function of (seed, tree index) only.
inline Rng tree_rng(std::uint64_t seed, std::size_t tree) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree), 0x9e3779b9u};
  return Rng(seq);
}

inline Forest fit_forest(const Dataset& data, const ForestConfig& config) {
  config.validate();
  require(data.n() >= config.min_leaf_size, "forest: dataset smaller than min_leaf_size");
  std::vector<Tree> trees(static_cast<std::size_t>(config.n_trees));
  parallel_for(trees.size(), [&](std::size_t t) {
    Rng rng = tree_rng(config.seed, t);
    trees[t] = grow_tree(data, config, rng);
  });
  return Forest(std::move(trees));
}

inline double predict(const Forest& forest, const ConstVectorRef& x) { return forest.predict(x); }

}  // namespace gradknn
