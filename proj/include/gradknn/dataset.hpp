#pragma once

#include "gradknn/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace gradknn {

/// Per-column statistics removed by standardization. A zero scale marks a
/// constant column, which is stored as all zeros.
struct Standardization {
  Vector mean;
  Vector scale;
};

/// An immutable sample {(X_1, Y_1), ..., (X_n, Y_n)} with X_i in R^D.
class Dataset {
 public:
  Dataset(Matrix X, Vector Y, std::vector<std::string> feature_names = {},
          std::string response_name = "y")
      : X_(std::move(X)),
        Y_(std::move(Y)),
        names_(std::move(feature_names)),
        response_name_(std::move(response_name)) {
    require(X_.rows() >= 1, "dataset needs at least one row");
    require(X_.cols() >= 1, "dataset needs at least one feature column");
    require(Y_.size() == X_.rows(), "response length must equal the number of rows");
    require(X_.allFinite() && Y_.allFinite(), "dataset entries must be finite");
    if (names_.empty()) {
      for (Index j = 0; j < X_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
    }
    require(static_cast<Index>(names_.size()) == X_.cols(),
            "feature name count must equal the number of columns");
  }

  const Matrix& X() const { return X_; }
  const Vector& Y() const { return Y_; }
  Index n() const { return X_.rows(); }
  Index dim() const { return X_.cols(); }
  auto row(Index i) const { return X_.row(i); }
  const std::vector<std::string>& feature_names() const { return names_; }
  const std::string& response_name() const { return response_name_; }
  const std::optional<Standardization>& standardization() const { return standardization_; }

  /// Copy with every feature column rescaled to sample mean 0 and sample std 1.
  Dataset standardized() const {
    Standardization s{Vector::Zero(dim()), Vector::Zero(dim())};
    Matrix Z = X_;
    for (Index j = 0; j < dim(); ++j) {
      const double mean = X_.col(j).mean();
      double ss = (X_.col(j).array() - mean).square().sum();
      const double sd = n() > 1 ? std::sqrt(ss / static_cast<double>(n() - 1)) : 0.0;
      s.mean(j) = mean;
      s.scale(j) = sd;
      if (sd > 0.0) {
        Z.col(j) = (X_.col(j).array() - mean) / sd;
      } else {
        Z.col(j).setZero();
      }
    }
    Dataset out(std::move(Z), Y_, names_, response_name_);
    out.standardization_ = std::move(s);
    return out;
  }

  /// Gradient in the original feature units, for a gradient estimated on the
  /// standardized features. Identity when the dataset is not standardized.
  Vector gradient_in_original_units(const ConstVectorRef& beta) const {
    if (!standardization_) return beta;
    Vector out = Vector::Zero(beta.size());
    for (Index j = 0; j < beta.size(); ++j) {
      const double s = standardization_->scale(j);
      out(j) = s > 0.0 ? beta(j) / s : 0.0;
    }
    return out;
  }

  /// Maps a point given in original units onto the standardized feature scale.
  Vector to_model_units(const ConstVectorRef& x) const {
    if (!standardization_) return x;
    Vector out(x.size());
    for (Index j = 0; j < x.size(); ++j) {
      const double s = standardization_->scale(j);
      out(j) = s > 0.0 ? (x(j) - standardization_->mean(j)) / s : 0.0;
    }
    return out;
  }

  Dataset subset(std::span<const Index> rows) const {
    require(!rows.empty(), "subset needs at least one row");
    Matrix X(static_cast<Index>(rows.size()), dim());
    Vector Y(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      require(rows[r] >= 0 && rows[r] < n(), "subset row index out of range");
      X.row(static_cast<Index>(r)) = X_.row(rows[r]);
      Y(static_cast<Index>(r)) = Y_(rows[r]);
    }
    Dataset out(std::move(X), std::move(Y), names_, response_name_);
    out.standardization_ = standardization_;
    return out;
  }

 private:
  Matrix X_;
  Vector Y_;
  std::vector<std::string> names_;
  std::string response_name_;
  std::optional<Standardization> standardization_;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  char c;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record.front().empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted field at end of CSV input");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline std::optional<double> parse_number(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

inline std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace detail

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

/// Parses a CSV stream with a header row. `response_column` is matched against
/// the header first and otherwise read as a zero-based column index.
inline Dataset parse_csv(std::istream& in, const std::string& response_column, bool standardize,
                         const std::string& source = "<stream>") {
  auto records = detail::parse_csv_records(in);
  if (records.empty()) throw DataError(source + ": missing header row");
  const auto& header = records.front();
  const std::size_t width = header.size();

  std::optional<std::size_t> response;
  for (std::size_t c = 0; c < width; ++c) {
    if (header[c] == response_column) {
      response = c;
      break;
    }
  }
  if (!response && !response_column.empty() &&
      std::all_of(response_column.begin(), response_column.end(),
                  [](char ch) { return ch >= '0' && ch <= '9'; })) {
    std::size_t idx = std::stoul(response_column);
    if (idx < width) response = idx;
  }
  if (!response) throw DataError(source + ": response column '" + response_column + "' not found");
  if (width < 2) throw DataError(source + ": need at least one feature column besides the response");

  const std::size_t n = records.size() - 1;
  if (n == 0) throw DataError(source + ": no data rows");
  Matrix X(static_cast<Index>(n), static_cast<Index>(width - 1));
  Vector Y(static_cast<Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& rec = records[r + 1];
    if (rec.size() != width) {
      throw DataError(source + ": row " + std::to_string(r + 1) + " has " +
                      std::to_string(rec.size()) + " fields, header has " + std::to_string(width));
    }
    Index feature = 0;
    for (std::size_t c = 0; c < width; ++c) {
      auto value = detail::parse_number(rec[c]);
      if (!value) {
        throw DataError(source + ": non-numeric cell '" + rec[c] + "' at row " +
                        std::to_string(r + 1) + ", column " + std::to_string(c + 1) + " ('" +
                        header[c] + "')");
      }
      if (c == *response) {
        Y(static_cast<Index>(r)) = *value;
      } else {
        X(static_cast<Index>(r), feature++) = *value;
      }
    }
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < width; ++c) {
    if (c != *response) names.push_back(header[c]);
  }
  Dataset data(std::move(X), std::move(Y), std::move(names), header[*response]);
  return standardize ? data.standardized() : data;
}

inline Dataset load_csv(const std::string& path, const std::string& response_column,
                        bool standardize = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, response_column, standardize, path);
}

/// A header row over an all-numeric body, with no response column.
struct NumericTable {
  std::vector<std::string> header;
  Matrix values;
};

inline NumericTable parse_numeric_csv(std::istream& in, const std::string& source = "<stream>") {
  auto records = detail::parse_csv_records(in);
  if (records.empty()) throw DataError(source + ": missing header row");
  NumericTable table;
  table.header = records.front();
  const std::size_t width = table.header.size();
  const std::size_t n = records.size() - 1;
  if (n == 0) throw DataError(source + ": no data rows");
  table.values.resize(static_cast<Index>(n), static_cast<Index>(width));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& rec = records[r + 1];
    if (rec.size() != width) {
      throw DataError(source + ": row " + std::to_string(r + 1) + " has " +
                      std::to_string(rec.size()) + " fields, header has " + std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      auto value = detail::parse_number(rec[c]);
      if (!value) {
        throw DataError(source + ": non-numeric cell '" + rec[c] + "' at row " +
                        std::to_string(r + 1) + ", column " + std::to_string(c + 1) + " ('" +
                        table.header[c] + "')");
      }
      table.values(static_cast<Index>(r), static_cast<Index>(c)) = *value;
    }
  }
  return table;
}

inline NumericTable load_numeric_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_numeric_csv(in, path);
}

/// Writes features then the response as the last column, full precision.
inline void write_csv(std::ostream& out, const Dataset& data) {
  for (const auto& name : data.feature_names()) out << detail::quote_csv(name) << ',';
  out << detail::quote_csv(data.response_name()) << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) out << format_double(data.X()(i, j)) << ',';
    out << format_double(data.Y()(i)) << '\n';
  }
}

inline std::string to_csv(const Dataset& data) {
  std::ostringstream out;
  write_csv(out, data);
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic data

/// A regression function m with its analytic gradient. The optional constants
/// hold on the cube [-1, 1]^D under the l_inf norm:
///   second_order: |m(z) - m(x) - grad m(x).(z - x)| <= second_order * |z - x|^2
///   lipschitz:    |m(z) - m(x)| <= lipschitz * |z - x|
struct RegressionFunction {
  std::function<double(const ConstVectorRef&)> value;
  std::function<Vector(const ConstVectorRef&)> gradient;
  double second_order = 0.0;
  double lipschitz = 0.0;
  std::string description;
};

inline RegressionFunction linear_function(Vector coefficients) {
  RegressionFunction f;
  f.lipschitz = coefficients.cwiseAbs().sum();
  f.value = [c = coefficients](const ConstVectorRef& x) { return c.dot(x); };
  f.gradient = [c = coefficients](const ConstVectorRef&) { return Vector(c); };
  f.description = "linear";
  return f;
}

inline RegressionFunction constant_function(Index dim, double level) {
  RegressionFunction f;
  f.value = [level](const ConstVectorRef&) { return level; };
  f.gradient = [dim](const ConstVectorRef&) { return Vector(Vector::Zero(dim)); };
  f.description = "constant";
  return f;
}

enum class TermKind { Linear, Square, Sine };

/// One additive component amplitude * g(frequency * x_coordinate).
struct AdditiveTerm {
  Index coordinate = 0;
  TermKind kind = TermKind::Linear;
  double amplitude = 1.0;
  double frequency = 1.0;
};

inline RegressionFunction additive_function(Index dim, std::vector<AdditiveTerm> terms) {
  for (const auto& t : terms) {
    require(t.coordinate >= 0 && t.coordinate < dim, "additive term coordinate out of range");
  }
  RegressionFunction f;
  for (const auto& t : terms) {
    const double a = std::abs(t.amplitude);
    switch (t.kind) {
      case TermKind::Linear:
        f.lipschitz += a * std::abs(t.frequency);
        break;
      case TermKind::Square:
        f.second_order += a * t.frequency * t.frequency;
        f.lipschitz += 2.0 * a * t.frequency * t.frequency;
        break;
      case TermKind::Sine:
        f.second_order += 0.5 * a * t.frequency * t.frequency;
        f.lipschitz += a * std::abs(t.frequency);
        break;
    }
  }
  f.value = [terms](const ConstVectorRef& x) {
    double s = 0.0;
    for (const auto& t : terms) {
      const double u = t.frequency * x(t.coordinate);
      switch (t.kind) {
        case TermKind::Linear: s += t.amplitude * u; break;
        case TermKind::Square: s += t.amplitude * u * u; break;
        case TermKind::Sine: s += t.amplitude * std::sin(u); break;
      }
    }
    return s;
  };
  f.gradient = [terms, dim](const ConstVectorRef& x) {
    Vector g = Vector::Zero(dim);
    for (const auto& t : terms) {
      const double u = t.frequency * x(t.coordinate);
      switch (t.kind) {
        case TermKind::Linear: g(t.coordinate) += t.amplitude * t.frequency; break;
        case TermKind::Square: g(t.coordinate) += 2.0 * t.amplitude * t.frequency * u; break;
        case TermKind::Sine: g(t.coordinate) += t.amplitude * t.frequency * std::cos(u); break;
      }
    }
    return g;
  };
  f.description = "additive";
  return f;
}

enum class Design { UniformCube, Gaussian };

/// Recipe for Y_i = m(X_i) + eps_i, eps_i ~ Normal(0, noise_sigma^2).
/// UniformCube draws X uniformly on [-1, 1]^D; Gaussian draws X ~ Normal(0, I_D).
struct SyntheticSpec {
  Index n = 100;
  Index dim = 1;
  std::vector<Index> active_set;  // zero-based coordinates m depends on
  RegressionFunction function;
  double noise_sigma = 0.0;
  Design design = Design::UniformCube;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset data;
  RegressionFunction truth;

  Vector oracle_gradient(const ConstVectorRef& x) const { return truth.gradient(x); }
};

inline void validate(const SyntheticSpec& spec) {
  require(spec.n >= 1, "synthetic spec: n must be >= 1");
  require(spec.dim >= 1, "synthetic spec: dim must be >= 1");
  require(spec.noise_sigma >= 0.0 && std::isfinite(spec.noise_sigma),
          "synthetic spec: noise_sigma must be finite and >= 0");
  for (Index j : spec.active_set) {
    require(j >= 0 && j < spec.dim, "synthetic spec: active_set must lie in [0, dim)");
  }
  require(static_cast<bool>(spec.function.value) && static_cast<bool>(spec.function.gradient),
          "synthetic spec: regression function is not set");
}

/// Draws the sample row by row (features, then noise), so the sample of size n
/// is a prefix of the sample of size n' > n under the same seed. Noise is
/// noise_sigma * z with z independent of sigma, which pairs samples across
/// noise levels.
inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix X(spec.n, spec.dim);
  Vector Y(spec.n);
  Vector xi(spec.dim);
  for (Index i = 0; i < spec.n; ++i) {
    for (Index j = 0; j < spec.dim; ++j) {
      xi(j) = spec.design == Design::UniformCube ? uniform(rng) : normal(rng);
    }
    const double z = normal(rng);
    X.row(i) = xi.transpose();
    Y(i) = spec.function.value(xi) + spec.noise_sigma * z;
  }
  return SyntheticData{Dataset(std::move(X), std::move(Y)), spec.function};
}

/// Density bounds (b_f, U_f) of the design on the l_inf ball B(x, tau0).
inline std::pair<double, double> design_density_bounds(Design design, const ConstVectorRef& x,
                                                       double tau0) {
  const Index dim = x.size();
  if (design == Design::UniformCube) {
    const double density = std::pow(0.5, static_cast<double>(dim));
    return {density, density};
  }
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double lo = 1.0, hi = 1.0;
  for (Index j = 0; j < dim; ++j) {
    const double far = std::abs(x(j)) + tau0;
    const double near = std::max(0.0, std::abs(x(j)) - tau0);
    lo *= c * std::exp(-0.5 * far * far);
    hi *= c * std::exp(-0.5 * near * near);
  }
  return {lo, hi};
}

}  // namespace gradknn
