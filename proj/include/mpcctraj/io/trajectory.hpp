#pragma once

// Trajectory files. CSV has a header row and columns t, x_*, xdot_*, y_*,
// u_*; JSON carries the same columns plus the element start times. Values
// are printed with 17 significant digits, so reading back is exact.

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpcctraj/collocation.hpp"
#include "mpcctraj/error.hpp"

namespace mpcctraj::io {

inline std::vector<std::string> trajectory_columns(std::size_t n_x, std::size_t n_y, std::size_t n_u) {
  std::vector<std::string> cols{"t"};
  for (std::size_t k = 0; k < n_x; ++k) cols.push_back("x" + std::to_string(k));
  for (std::size_t k = 0; k < n_x; ++k) cols.push_back("xdot" + std::to_string(k));
  for (std::size_t k = 0; k < n_y; ++k) cols.push_back("y" + std::to_string(k));
  for (std::size_t k = 0; k < n_u; ++k) cols.push_back("u" + std::to_string(k));
  return cols;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<double> row_of(const Sample& s) {
  std::vector<double> r{s.t};
  r.insert(r.end(), s.x.begin(), s.x.end());
  r.insert(r.end(), s.xdot.begin(), s.xdot.end());
  r.insert(r.end(), s.y.begin(), s.y.end());
  r.insert(r.end(), s.u.begin(), s.u.end());
  return r;
}

inline Sample sample_of(const std::vector<double>& r, std::size_t nx, std::size_t ny, std::size_t nu) {
  require(r.size() == 1 + 2 * nx + ny + nu, ErrorCode::BadConfig, "trajectory row has the wrong width");
  Sample s;
  s.t = r[0];
  auto it = r.begin() + 1;
  s.x.assign(it, it + static_cast<std::ptrdiff_t>(nx));
  it += static_cast<std::ptrdiff_t>(nx);
  s.xdot.assign(it, it + static_cast<std::ptrdiff_t>(nx));
  it += static_cast<std::ptrdiff_t>(nx);
  s.y.assign(it, it + static_cast<std::ptrdiff_t>(ny));
  it += static_cast<std::ptrdiff_t>(ny);
  s.u.assign(it, it + static_cast<std::ptrdiff_t>(nu));
  return s;
}

inline double parse_double(const std::string& tok) {
  if (tok == "nan") return std::nan("");
  if (tok == "inf") return HUGE_VAL;
  if (tok == "-inf") return -HUGE_VAL;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    fail(ErrorCode::BadConfig, "bad number '" + tok + "' in trajectory file");
  }
  require(used == tok.size(), ErrorCode::BadConfig, "bad number '" + tok + "' in trajectory file");
  return v;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

}  // namespace detail

inline void write_csv(std::ostream& os, const Trajectory& traj) {
  const auto cols = trajectory_columns(traj.n_x, traj.n_y, traj.n_u);
  for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
  os << '\n';
  for (const auto& s : traj.samples) {
    const auto r = detail::row_of(s);
    for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << format_double(r[k]);
    os << '\n';
  }
}

/// Reads a CSV written by write_csv. Sizes come from the header; element
/// indices and local times are not stored and stay zero.
inline Trajectory read_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::BadConfig, "empty trajectory file");
  const auto header = detail::split(line);
  require(!header.empty() && header[0] == "t", ErrorCode::BadConfig, "trajectory header must start with 't'");
  Trajectory traj;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const auto& h = header[k];
    if (h.starts_with("xdot")) {
      continue;
    } else if (h.starts_with("x")) {
      ++traj.n_x;
    } else if (h.starts_with("y")) {
      ++traj.n_y;
    } else if (h.starts_with("u")) {
      ++traj.n_u;
    } else {
      fail(ErrorCode::BadConfig, "unknown trajectory column '" + h + "'");
    }
  }
  require(header == trajectory_columns(traj.n_x, traj.n_y, traj.n_u), ErrorCode::BadConfig,
          "trajectory header columns out of order");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    for (const auto& tok : detail::split(line)) r.push_back(detail::parse_double(tok));
    traj.samples.push_back(detail::sample_of(r, traj.n_x, traj.n_y, traj.n_u));
  }
  return traj;
}

inline nlohmann::json to_json(const Trajectory& traj) {
  nlohmann::json j;
  j["columns"] = trajectory_columns(traj.n_x, traj.n_y, traj.n_u);
  j["n_x"] = traj.n_x;
  j["n_y"] = traj.n_y;
  j["n_u"] = traj.n_u;
  j["element_starts"] = traj.element_starts;
  auto rows = nlohmann::json::array();
  for (const auto& s : traj.samples) rows.push_back(detail::row_of(s));
  j["rows"] = rows;
  return j;
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory traj;
  try {
    traj.n_x = j.at("n_x").get<std::size_t>();
    traj.n_y = j.at("n_y").get<std::size_t>();
    traj.n_u = j.at("n_u").get<std::size_t>();
    if (j.contains("element_starts")) traj.element_starts = j.at("element_starts").get<std::vector<double>>();
    for (const auto& r : j.at("rows")) {
      traj.samples.push_back(detail::sample_of(r.get<std::vector<double>>(), traj.n_x, traj.n_y, traj.n_u));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadConfig, std::string("bad trajectory JSON: ") + e.what());
  }
  return traj;
}

/// nlohmann prints doubles in shortest round-trip form.
inline void write_json(std::ostream& os, const Trajectory& traj) { os << to_json(traj).dump(1) << '\n'; }

inline Trajectory read_json(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadConfig, std::string("bad trajectory JSON: ") + e.what());
  }
  return trajectory_from_json(j);
}

/// Largest absolute difference over t, x, xdot, y, u; infinite when the
/// shapes differ.
inline double max_sample_difference(const Trajectory& a, const Trajectory& b) {
  if (a.n_x != b.n_x || a.n_y != b.n_y || a.n_u != b.n_u || a.samples.size() != b.samples.size()) return HUGE_VAL;
  double d = 0.0;
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    const auto ra = detail::row_of(a.samples[k]);
    const auto rb = detail::row_of(b.samples[k]);
    if (ra.size() != rb.size()) return HUGE_VAL;
    for (std::size_t c = 0; c < ra.size(); ++c) d = std::max(d, std::abs(ra[c] - rb[c]));
  }
  return d;
}

}  // namespace mpcctraj::io
