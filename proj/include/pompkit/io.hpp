#pragma once

/// @file io.hpp CSV and JSON serialization for data, parameters, optimizer
/// traces and MCMC chains.
///
/// CSV files may start with `#` comment lines; numbers are written with 17
/// significant digits so doubles round-trip exactly.

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pompkit/bayes.hpp"
#include "pompkit/errors.hpp"
#include "pompkit/model.hpp"
#include "pompkit/optimizers.hpp"

namespace pompkit {

using json = nlohmann::json;

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s, std::size_t line) {
  if (s == "NaN" || s == "NA") return std::nan("");
  if (s == "Inf") return INFINITY;
  if (s == "-Inf") return -INFINITY;
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e)
    throw ValidationError("line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline void write_comments(std::ostream& os, const std::vector<std::string>& comments) {
  for (const auto& c : comments) {
    std::istringstream ss(c);
    std::string line;
    while (std::getline(ss, line)) os << "# " << line << '\n';
  }
}

}  // namespace detail

// ---------------------------------------------------------------- data

inline void write_data_csv(std::ostream& os, const TimeSeriesData& data,
                           const std::vector<std::string>& comments = {}) {
  detail::write_comments(os, comments);
  os << "time";
  for (Eigen::Index k = 0; k < data.observations.cols(); ++k) os << ",y" << k + 1;
  os << '\n';
  for (Eigen::Index n = 0; n < data.observations.rows(); ++n) {
    os << detail::fmt(data.times[static_cast<std::size_t>(n)]);
    for (Eigen::Index k = 0; k < data.observations.cols(); ++k) os << ',' << detail::fmt(data.observations(n, k));
    os << '\n';
  }
}

inline TimeSeriesData read_data_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    header = detail::split(line);
    break;
  }
  if (header.empty() || header[0] != "time") throw ValidationError("data CSV must start with a 'time' column");
  const std::size_t d = header.size() - 1;
  if (d == 0) throw ValidationError("data CSV has no observation columns");
  TimeSeriesData data;
  std::vector<double> values;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    const auto cells = detail::split(line);
    if (cells.size() != d + 1)
      throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(d + 1) + " fields");
    data.times.push_back(detail::parse_double(cells[0], lineno));
    for (std::size_t k = 1; k <= d; ++k) values.push_back(detail::parse_double(cells[k], lineno));
  }
  data.observations.resize(static_cast<Eigen::Index>(data.times.size()), static_cast<Eigen::Index>(d));
  for (Eigen::Index n = 0; n < data.observations.rows(); ++n)
    for (Eigen::Index k = 0; k < data.observations.cols(); ++k)
      data.observations(n, k) = values[static_cast<std::size_t>(n) * d + static_cast<std::size_t>(k)];
  return data;
}

inline TimeSeriesData read_data_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open data file '" + path + "'");
  return read_data_csv(f);
}

// ---------------------------------------------------------------- params

inline json params_to_json(const ModelSpec& model, const ParamVector& theta) {
  json j = json::object();
  for (std::size_t i = 0; i < model.params.size(); ++i) j[model.params[i].name] = theta[static_cast<Eigen::Index>(i)];
  return j;
}

/// Values for the named parameters in `j`, starting from `base`. Unknown
/// names are errors.
inline ParamVector params_from_json(const ModelSpec& model, const json& j, const ParamVector& base) {
  if (!j.is_object()) throw ValidationError("parameters must be a JSON object keyed by name");
  ParamVector out = base;
  std::vector<std::string> bad;
  for (const auto& [key, value] : j.items()) {
    const auto idx = model.param_index(key);
    if (!idx) {
      bad.push_back("unknown parameter '" + key + "'");
      continue;
    }
    if (!value.is_number()) {
      bad.push_back("parameter '" + key + "' must be a number");
      continue;
    }
    out[static_cast<Eigen::Index>(*idx)] = value.get<double>();
  }
  if (!bad.empty()) throw ValidationError(std::move(bad));
  return out;
}

// ---------------------------------------------------------------- traces

inline void write_trace_csv(std::ostream& os, const OptimizerTrace& t, const std::vector<std::string>& comments = {}) {
  detail::write_comments(os, comments);
  os << "m,loglik";
  for (const auto& n : t.param_names) os << ',' << n;
  os << ",step_norm,fallback_flag\n";
  os << "0,NaN";
  for (Eigen::Index i = 0; i < t.start.size(); ++i) os << ',' << detail::fmt(t.start[i]);
  os << ",0,0\n";
  for (Eigen::Index m = 0; m < t.theta.rows(); ++m) {
    const auto um = static_cast<std::size_t>(m);
    os << m + 1 << ',' << detail::fmt(t.loglik[um]);
    for (Eigen::Index i = 0; i < t.theta.cols(); ++i) os << ',' << detail::fmt(t.theta(m, i));
    os << ',' << detail::fmt(t.step_norm[um]) << ',' << t.fallback[um] << '\n';
  }
}

inline void write_chain_csv(std::ostream& os, const Chain& c, const std::vector<std::string>& comments = {}) {
  detail::write_comments(os, comments);
  os << "m,accepted,loglik,logprior";
  for (const auto& n : c.param_names) os << ',' << n;
  os << '\n';
  for (Eigen::Index m = 0; m < c.samples.rows(); ++m) {
    const auto um = static_cast<std::size_t>(m);
    os << m + 1 << ',' << static_cast<int>(c.accepted[um]) << ',' << detail::fmt(c.loglik[um]) << ','
       << detail::fmt(c.logprior[um]);
    for (Eigen::Index i = 0; i < c.samples.cols(); ++i) os << ',' << detail::fmt(c.samples(m, i));
    os << '\n';
  }
}

/// Reads a CSV with a header into named columns, skipping `#` lines.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  [[nodiscard]] std::vector<double> column(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k)
      if (columns[k] == name) {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[k]);
        return out;
      }
    throw ValidationError("no column named '" + name + "'");
  }
};

inline Table read_table_csv(std::istream& is) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (t.columns.empty()) {
      t.columns = detail::split(line);
      continue;
    }
    const auto cells = detail::split(line);
    if (cells.size() != t.columns.size())
      throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                            " fields");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(detail::parse_double(c, lineno));
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace pompkit
