#pragma once

#include "gradknn/common.hpp"
#include "gradknn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gradknn {

enum class Norm { LInf, L2, L1 };

inline std::string to_string(Norm norm) {
  switch (norm) {
    case Norm::LInf: return "linf";
    case Norm::L2: return "l2";
    case Norm::L1: return "l1";
  }
  return "linf";
}

inline Norm parse_norm(std::string_view text) {
  if (text == "linf" || text == "l_inf" || text == "inf") return Norm::LInf;
  if (text == "l2" || text == "l_2") return Norm::L2;
  if (text == "l1" || text == "l_1") return Norm::L1;
  throw InvalidArgument("unknown norm '" + std::string(text) + "' (expected linf, l2 or l1)");
}

/// Lebesgue volume V_D of the unit ball of `norm` in R^D.
inline double unit_ball_volume(Norm norm, Index dim) {
  require(dim >= 1, "unit_ball_volume: dimension must be >= 1");
  const double d = static_cast<double>(dim);
  switch (norm) {
    case Norm::LInf: return std::exp2(d);
    case Norm::L2: return std::exp(0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d + 1.0));
    case Norm::L1: return std::exp(d * std::numbers::ln2 - std::lgamma(d + 1.0));
  }
  return 0.0;
}

template <typename A, typename B>
double distance(Norm norm, const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  switch (norm) {
    case Norm::LInf: return (a - b).cwiseAbs().maxCoeff();
    case Norm::L2: return (a - b).norm();
    case Norm::L1: return (a - b).cwiseAbs().sum();
  }
  return 0.0;
}

/// The k nearest samples to `query`. `members` are dataset row indices sorted
/// by (distance, row index); `radius` is the k-th smallest distance.
struct Neighborhood {
  Vector query;
  Index k = 0;
  double radius = 0.0;
  std::vector<Index> members;
  std::vector<double> distances;
};

namespace detail {

struct Candidate {
  double dist;
  Index row;
  bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && row < o.row); }
};

inline double row_distance(Norm norm, const Matrix& X, Index row, const ConstVectorRef& x) {
  const double* p = X.data() + row * X.cols();
  const Index dim = X.cols();
  double acc = 0.0;
  switch (norm) {
    case Norm::LInf:
      for (Index j = 0; j < dim; ++j) acc = std::max(acc, std::abs(p[j] - x(j)));
      return acc;
    case Norm::L2:
      for (Index j = 0; j < dim; ++j) {
        const double d = p[j] - x(j);
        acc += d * d;
      }
      return std::sqrt(acc);
    case Norm::L1:
      for (Index j = 0; j < dim; ++j) acc += std::abs(p[j] - x(j));
      return acc;
  }
  return acc;
}

inline Neighborhood select_nearest(std::vector<Candidate>& cands, const ConstVectorRef& x, Index k) {
  const auto kk = static_cast<std::size_t>(k);
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(kk), cands.end());
  Neighborhood nb;
  nb.query = x;
  nb.k = k;
  nb.members.reserve(kk);
  nb.distances.reserve(kk);
  for (std::size_t i = 0; i < kk; ++i) {
    nb.members.push_back(cands[i].row);
    nb.distances.push_back(cands[i].dist);
  }
  nb.radius = nb.distances.back();
  return nb;
}

}  // namespace detail

/// k nearest samples among `pool` (dataset row indices, duplicates allowed),
/// skipping row `excluded` if given. Ties at equal distance go to the lower row.
inline Neighborhood knn_among(const Dataset& data, const ConstVectorRef& x, Index k, Norm norm,
                              std::span<const Index> pool, std::optional<Index> excluded = {}) {
  require(x.size() == data.dim(), "query dimension does not match the dataset");
  require(x.allFinite(), "query point must be finite");
  std::vector<detail::Candidate> cands;
  cands.reserve(pool.size());
  for (Index row : pool) {
    if (excluded && row == *excluded) continue;
    cands.push_back({detail::row_distance(norm, data.X(), row, x), row});
  }
  require(k >= 1 && k <= static_cast<Index>(cands.size()),
          "k must satisfy 1 <= k <= number of candidate samples");
  return detail::select_nearest(cands, x, k);
}

/// The k-NN radius tau_k(x) and its ball members: brute-force scan over all rows.
inline Neighborhood knn_radius(const Dataset& data, const ConstVectorRef& x, Index k,
                               Norm norm = Norm::LInf, std::optional<Index> excluded = {}) {
  require(x.size() == data.dim(), "query dimension does not match the dataset");
  require(x.allFinite(), "query point must be finite");
  const Index available = data.n() - (excluded && *excluded >= 0 && *excluded < data.n() ? 1 : 0);
  require(k >= 1 && k <= available, "k must satisfy 1 <= k <= n");
  std::vector<detail::Candidate> cands;
  cands.reserve(static_cast<std::size_t>(data.n()));
  for (Index i = 0; i < data.n(); ++i) {
    if (excluded && i == *excluded) continue;
    cands.push_back({detail::row_distance(norm, data.X(), i, x), i});
  }
  return detail::select_nearest(cands, x, k);
}

/// Deterministic radius (2k / (n b_f V_D))^(1/D) that bounds tau_k(x) with high probability.
inline double tau_bar(Index k, Index n, double b_f, Index dim, Norm norm = Norm::LInf) {
  require(b_f > 0.0 && std::isfinite(b_f), "tau_bar: density lower bound b_f must be > 0");
  require(k >= 1 && n >= 1, "tau_bar: need k >= 1 and n >= 1");
  const double ratio = 2.0 * static_cast<double>(k) /
                       (static_cast<double>(n) * b_f * unit_ball_volume(norm, dim));
  return std::pow(ratio, 1.0 / static_cast<double>(dim));
}

}  // namespace gradknn
