/**
 * @brief CSV and JSON file formats.
 *
 * CSV: one row per time sample, one column per channel, optional header row,
 * numbers written with 17 significant digits. JSON matrices are arrays of
 * rows (row-major).
 */
#pragma once

#include "smica/baselines.hpp"
#include "smica/core.hpp"
#include "smica/em.hpp"
#include "smica/model.hpp"
#include "smica/spectral.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace smica::io {

using json = nlohmann::json;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline bool parse_double(std::string_view token, double &value) {
  token = trim(token);
  if (!token.empty() && token.front() == '+')
    token.remove_prefix(1);
  const auto *end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end && !token.empty();
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace detail

/// Samples x channels text, returned transposed to channels x samples.
inline Matrix parse_csv(std::istream &in, const std::string &name = "csv") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty())
      continue;
    const auto fields = detail::split(text, ',');
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t j = 0; j < fields.size() && numeric; ++j)
      numeric = detail::parse_double(fields[j], row[j]);
    if (!numeric) {
      if (rows.empty() && width == 0) {
        width = fields.size(); // header
        continue;
      }
      throw DataError(name + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (width == 0)
      width = fields.size();
    if (fields.size() != width)
      throw DataError(name + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(width) + " columns, got " + std::to_string(fields.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw DataError(name + ": no data rows");
  Matrix out(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < width; ++c)
      out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = rows[t][c];
  return out;
}

inline Matrix read_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open " + path);
  return parse_csv(in, path);
}

/// channels x samples matrix written as one row per sample.
inline void write_csv(std::ostream &out, const Matrix &data, const std::string &prefix = "ch") {
  for (Eigen::Index c = 0; c < data.rows(); ++c)
    out << (c ? "," : "") << prefix << c;
  out << '\n';
  for (Eigen::Index t = 0; t < data.cols(); ++t) {
    for (Eigen::Index c = 0; c < data.rows(); ++c)
      out << (c ? "," : "") << detail::format_double(data(c, t));
    out << '\n';
  }
}

inline void write_csv(const std::string &path, const Matrix &data,
                      const std::string &prefix = "ch") {
  std::ofstream out(path);
  if (!out)
    throw ConfigError("cannot write " + path);
  write_csv(out, data, prefix);
}

inline json to_json(const Matrix &m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vector &v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const json &j, const std::string &what, Eigen::Index cols_hint = -1) {
  if (!j.is_array())
    throw DataError(what + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : std::max<Eigen::Index>(cols_hint, 0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto &row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DataError(what + ": ragged row " + std::to_string(i));
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number())
        throw DataError(what + ": non-numeric entry");
      m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

inline json to_json(const BandSpec &bands) {
  json out = json::array();
  for (const auto &b : bands)
    out.push_back({b.lo, b.hi});
  return out;
}

/// Accepts [[lo, hi], ...] or {"bands": [[lo, hi], ...]}.
inline BandSpec bands_from_json(const json &j) {
  const json &arr = j.is_object() ? j.at("bands") : j;
  if (!arr.is_array())
    throw ConfigError("bands: expected an array of [lo, hi] pairs");
  std::vector<Band> edges;
  for (const auto &e : arr) {
    if (!e.is_array() || e.size() != 2)
      throw ConfigError("bands: each entry must be [lo, hi]");
    edges.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return BandSpec(std::move(edges));
}

inline json to_json(const SmicaParams &params) {
  return json{{"A", to_json(params.A)},
              {"P", to_json(params.P)},
              {"Sigma", to_json(params.Sigma)},
              {"bands", to_json(params.bands)}};
}

inline SmicaParams params_from_json(const json &j) {
  try {
    SmicaParams params;
    params.bands = bands_from_json(j.at("bands"));
    params.A = matrix_from_json(j.at("A"), "A");
    params.P = matrix_from_json(j.at("P"), "P", params.A.cols());
    params.Sigma = matrix_from_json(j.at("Sigma"), "Sigma", params.A.rows());
    params.validate();
    return params;
  } catch (const json::exception &e) {
    throw DataError(std::string("params json: ") + e.what());
  }
}

inline json to_json(const SpectralCovarianceSet &set) {
  json mats = json::array();
  for (const auto &m : set.mats)
    mats.push_back(to_json(m));
  return json{{"p", set.p}, {"bands", to_json(set.bands)}, {"counts", set.counts},
              {"matrices", std::move(mats)}};
}

inline SpectralCovarianceSet covariances_from_json(const json &j) {
  try {
    SpectralCovarianceSet set;
    set.p = j.at("p").get<Eigen::Index>();
    set.bands = bands_from_json(j.at("bands"));
    set.counts = j.at("counts").get<std::vector<int>>();
    for (const auto &m : j.at("matrices"))
      set.mats.push_back(matrix_from_json(m, "matrices"));
    set.validate();
    return set;
  } catch (const json::exception &e) {
    throw DataError(std::string("covariance json: ") + e.what());
  }
}

inline json to_json(const FitReport &report) {
  return json{{"loss_history", report.loss_history},
              {"main_start", report.main_start},
              {"converged", report.converged},
              {"iterations", {{"warm", report.warm_iterations}, {"main", report.main_iterations}}}};
}

inline json to_json(const Unmixing &u) {
  return json{{"W", to_json(u.W)},
              {"criterion", u.criterion},
              {"criterion_history", u.criterion_history},
              {"converged", u.converged},
              {"sweeps", u.sweeps}};
}

inline json to_json(const SpatialFilter &f) {
  return json{{"w", to_json(f.w)},
              {"target_freq", f.target_freq},
              {"bandwidth", f.bandwidth},
              {"quotient", f.quotient},
              {"quotients", to_json(f.quotients)}};
}

inline json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_json(const std::string &path, const json &j) {
  std::ofstream out(path);
  if (!out)
    throw ConfigError("cannot write " + path);
  out << j.dump(2) << '\n';
}

} // namespace smica::io
