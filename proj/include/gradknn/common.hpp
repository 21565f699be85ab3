#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gradknn {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
// Row-major so that a sample X_i is a contiguous slice.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;
using Rng = std::mt19937_64;

inline constexpr std::string_view kVersion = "0.3.1";

/// Raised when a caller violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed or unreadable input data (CSV files, non-finite cells).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a black-box objective misbehaves during optimization.
class ObjectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, std::string_view message) {
  if (!condition) throw InvalidArgument(std::string(message));
}

inline bool all_finite(const ConstVectorRef& v) { return v.allFinite(); }

inline double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

}  // namespace gradknn
