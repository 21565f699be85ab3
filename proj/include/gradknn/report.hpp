#pragma once

#include "gradknn/analysis.hpp"
#include "gradknn/common.hpp"
#include "gradknn/dataset.hpp"
#include "gradknn/gradient.hpp"
#include "gradknn/neighbors.hpp"
#include "gradknn/zeroth_order.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <unistd.h>

namespace gradknn {

// Insertion-ordered so that reports read top-down in a fixed field order.
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Field conversions

inline Json vector_json(const ConstVectorRef& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline std::string to_string(RateEstimator e) { return e == RateEstimator::Gradient ? "gradient" : "constant"; }

inline RateEstimator parse_rate_estimator(std::string_view text) {
  if (text == "gradient") return RateEstimator::Gradient;
  if (text == "constant") return RateEstimator::Constant;
  throw InvalidArgument("unknown estimator '" + std::string(text) + "' (expected gradient or constant)");
}

inline void to_json(Json& j, const HyperParams& h) { j = Json{{"k", h.k}, {"lambda", h.lambda}}; }

inline void from_json(const Json& j, HyperParams& h) {
  h.k = j.at("k").get<Index>();
  h.lambda = j.at("lambda").get<double>();
}

inline void to_json(Json& j, const TheoryParams& t) {
  j = Json{{"sigma2", t.sigma2}, {"L2", t.L2}, {"b_f", t.b_f}, {"U_f", t.U_f},
           {"L", t.L},           {"L1", t.L1}, {"tau0", t.tau0}, {"delta", t.delta}};
}

inline void from_json(const Json& j, TheoryParams& t) {
  t.sigma2 = j.at("sigma2").get<double>();
  t.L2 = j.at("L2").get<double>();
  t.b_f = j.at("b_f").get<double>();
  t.U_f = j.at("U_f").get<double>();
  t.L = j.at("L").get<double>();
  t.L1 = j.at("L1").get<double>();
  t.tau0 = j.at("tau0").get<double>();
  t.delta = j.at("delta").get<double>();
}

inline void to_json(Json& j, const RatePoint& p) {
  j = Json{{"n", p.n},
           {"k", p.k},
           {"tau_bar", p.tau_bar},
           {"lambda", p.lambda},
           {"within_locality", p.within_locality},
           {"median_error", p.median_error},
           {"quantile_error", p.quantile_error},
           {"envelope", p.envelope},
           {"errors", p.errors}};
}

inline void from_json(const Json& j, RatePoint& p) {
  p.n = j.at("n").get<Index>();
  p.k = j.at("k").get<Index>();
  p.tau_bar = j.at("tau_bar").get<double>();
  p.lambda = j.at("lambda").get<double>();
  p.within_locality = j.at("within_locality").get<bool>();
  p.median_error = j.at("median_error").get<double>();
  p.quantile_error = j.at("quantile_error").get<double>();
  p.envelope = j.at("envelope").get<double>();
  p.errors = j.at("errors").get<std::vector<double>>();
}

inline void to_json(Json& j, const RateReport& r) {
  j = Json{{"estimator", to_string(r.estimator)},
           {"dim", r.dim},
           {"replicates", r.replicates},
           {"active_size", r.active_size},
           {"delta", r.delta},
           {"norm", to_string(r.norm)},
           {"theory", r.theory},
           {"target_slope", r.target_slope},
           {"slope", r.slope ? Json(*r.slope) : Json(nullptr)},
           {"degenerate", r.degenerate},
           {"flag", r.flag},
           {"points", r.points}};
}

inline void from_json(const Json& j, RateReport& r) {
  r.estimator = parse_rate_estimator(j.at("estimator").get<std::string>());
  r.dim = j.at("dim").get<Index>();
  r.replicates = j.at("replicates").get<Index>();
  r.active_size = j.at("active_size").get<Index>();
  r.delta = j.at("delta").get<double>();
  r.norm = parse_norm(j.at("norm").get<std::string>());
  r.theory = j.at("theory").get<TheoryParams>();
  r.target_slope = j.at("target_slope").get<double>();
  const auto& slope = j.at("slope");
  r.slope = slope.is_null() ? std::nullopt : std::optional<double>(slope.get<double>());
  r.degenerate = j.at("degenerate").get<bool>();
  r.flag = j.at("flag").get<std::string>();
  r.points = j.at("points").get<std::vector<RatePoint>>();
}

inline void to_json(Json& j, const ComparisonRow& r) {
  j = Json{{"dataset", r.dataset}, {"seed", r.seed}, {"mse_first", r.mse_first}, {"mse_second", r.mse_second}};
}

inline void from_json(const Json& j, ComparisonRow& r) {
  r.dataset = j.at("dataset").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.mse_first = j.at("mse_first").get<double>();
  r.mse_second = j.at("mse_second").get<double>();
}

inline void to_json(Json& j, const ComparisonSummary& s) {
  j = Json{{"dataset", s.dataset},         {"n", s.n},
           {"dim", s.dim},                 {"mean_first", s.mean_first},
           {"var_first", s.var_first},     {"mean_second", s.mean_second},
           {"var_second", s.var_second},   {"second_not_worse", s.second_not_worse},
           {"seeds", s.seeds}};
}

inline void from_json(const Json& j, ComparisonSummary& s) {
  s.dataset = j.at("dataset").get<std::string>();
  s.n = j.at("n").get<Index>();
  s.dim = j.at("dim").get<Index>();
  s.mean_first = j.at("mean_first").get<double>();
  s.var_first = j.at("var_first").get<double>();
  s.mean_second = j.at("mean_second").get<double>();
  s.var_second = j.at("var_second").get<double>();
  s.second_not_worse = j.at("second_not_worse").get<Index>();
  s.seeds = j.at("seeds").get<Index>();
}

inline void to_json(Json& j, const ComparisonTable& t) {
  j = Json{{"first_label", t.first_label},
           {"second_label", t.second_label},
           {"summaries", t.summaries},
           {"rows", t.rows}};
}

inline void from_json(const Json& j, ComparisonTable& t) {
  t.first_label = j.at("first_label").get<std::string>();
  t.second_label = j.at("second_label").get<std::string>();
  t.summaries = j.at("summaries").get<std::vector<ComparisonSummary>>();
  t.rows = j.at("rows").get<std::vector<ComparisonRow>>();
}

/// Per-query record: fit, active set and neighbourhood radius.
inline Json estimate_json(const GradientEstimate& est, double threshold = kDefaultActiveThreshold) {
  Json j;
  j["query"] = vector_json(est.neighborhood.query);
  j["k"] = est.hyper.k;
  j["lambda"] = est.hyper.lambda;
  j["intercept"] = est.intercept;
  j["beta"] = vector_json(est.beta);
  j["active_set"] = active_set(est, threshold).indices;
  j["radius"] = est.neighborhood.radius;
  j["converged"] = est.converged;
  j["iterations"] = est.iterations;
  return j;
}

inline Json trace_json(const OptResult& result) {
  Json rows = Json::array();
  for (const auto& r : result.trace) {
    rows.push_back(Json{{"round", r.round},
                        {"evals", r.evals},
                        {"incumbent_value", r.incumbent_value},
                        {"step", r.step},
                        {"grad_norm", r.grad_norm}});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report envelope

/// Current UTC time as ISO-8601 with second resolution.
inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Wraps a command result with everything needed to rerun it. Only the
/// timestamp varies between runs of the same configuration.
inline Json make_report(const std::string& command, std::uint64_t seed, Json config, Json result,
                        const std::string& timestamp = utc_timestamp()) {
  Json j;
  j["tool"] = "gradknn";
  j["version"] = std::string(kVersion);
  j["command"] = command;
  j["seed"] = seed;
  j["timestamp"] = timestamp;
  j["config"] = std::move(config);
  j["result"] = std::move(result);
  return j;
}

inline Json without_timestamp(Json report) {
  report.erase("timestamp");
  return report;
}

inline std::string dump_report(const Json& report) { return report.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// CSV tables

inline std::string rate_csv(const RateReport& r) {
  std::ostringstream out;
  out << "n,k,tau_bar,lambda,median_error,quantile_error,envelope,within_locality\n";
  for (const auto& p : r.points) {
    out << p.n << ',' << p.k << ',' << format_double(p.tau_bar) << ',' << format_double(p.lambda) << ','
        << format_double(p.median_error) << ',' << format_double(p.quantile_error) << ','
        << format_double(p.envelope) << ',' << (p.within_locality ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::string comparison_csv(const ComparisonTable& t) {
  std::ostringstream out;
  out << "dataset,seed,mse_" << t.first_label << ",mse_" << t.second_label << '\n';
  for (const auto& r : t.rows) {
    out << detail::quote_csv(r.dataset) << ',' << r.seed << ',' << format_double(r.mse_first) << ','
        << format_double(r.mse_second) << '\n';
  }
  return out.str();
}

inline std::string trace_csv(const OptResult& result) {
  std::ostringstream out;
  out << "round,evals,incumbent_value,step,grad_norm\n";
  for (const auto& r : result.trace) {
    out << r.round << ',' << r.evals << ',' << format_double(r.incumbent_value) << ','
        << format_double(r.step) << ',' << format_double(r.grad_norm) << '\n';
  }
  return out.str();
}

inline std::string estimates_csv(const std::vector<GradientEstimate>& estimates,
                                 double threshold = kDefaultActiveThreshold) {
  std::ostringstream out;
  if (estimates.empty()) return out.str();
  const Index dim = estimates.front().beta.size();
  for (Index j = 0; j < dim; ++j) out << 'x' << j + 1 << ',';
  out << "k,lambda,radius,intercept";
  for (Index j = 0; j < dim; ++j) out << ",beta" << j + 1;
  out << ",active_size\n";
  for (const auto& e : estimates) {
    for (Index j = 0; j < dim; ++j) out << format_double(e.neighborhood.query(j)) << ',';
    out << e.hyper.k << ',' << format_double(e.hyper.lambda) << ',' << format_double(e.neighborhood.radius)
        << ',' << format_double(e.intercept);
    for (Index j = 0; j < dim; ++j) out << ',' << format_double(e.beta(j));
    out << ',' << active_set(e, threshold).indices.size() << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Output

/// Writes `text` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw DataError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot move report into place at '" + path.string() + "': " + ec.message());
  }
}

}  // namespace gradknn
