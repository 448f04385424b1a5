#pragma once

// One configured solve end to end: build, transcribe, relax, solve, sample
// and write the output files. Shared by the CLI and the tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpcctraj/collision.hpp"
#include "mpcctraj/collocation.hpp"
#include "mpcctraj/io/config.hpp"
#include "mpcctraj/io/trajectory.hpp"
#include "mpcctraj/ipm/solver.hpp"
#include "mpcctraj/mode_schedule.hpp"
#include "mpcctraj/mpcc.hpp"

namespace mpcctraj::io {

struct PairDistance {
  std::size_t i = 0;
  std::size_t j = 0;
  /// Smallest oracle distance over the collocation points.
  double min_distance = 0.0;
  /// Smallest smoothed distance sqrt(d^2 + eps^2) and the bound it must meet.
  double min_smoothed = 0.0;
  double required = 0.0;
};

struct RunResult {
  std::string example;
  RootScheme scheme;
  RelaxationPolicy policy;
  ValidatedProblem problem;
  NlpInstance nlp;
  ipm::Solution solution;
  /// Sampled at tau = k / N_c in every element plus the final time, in
  /// absolute time for mode problems.
  Trajectory trajectory;
  std::vector<double> durations;
  std::vector<PairDistance> distances;
};

/// Minimum distance of every separated pair over nodes 1..N_c of each element.
inline std::vector<PairDistance> pair_distances(const ValidatedProblem& vp, const NlpInstance& nlp,
                                                std::span<const double> x) {
  std::vector<PairDistance> out;
  const auto& def = vp.def;
  if (def.objects.size() < 2) return out;
  const auto specs = def.separations.empty() ? all_pairs(def.objects) : def.separations;
  for (const auto& sp : specs) {
    PairDistance pd{sp.i, sp.j, HUGE_VAL, HUGE_VAL, std::sqrt(sp.eps_ij * sp.eps_ij + sp.eps_smooth * sp.eps_smooth)};
    for (std::size_t e = 0; e < nlp.layout.num_elements; ++e) {
      for (std::size_t node = 1; node <= nlp.layout.order; ++node) {
        const auto vi = vertices_at(nlp, x, def.objects[sp.i], e, node);
        const auto vj = vertices_at(nlp, x, def.objects[sp.j], e, node);
        const double d = min_distance_oracle(vi, vj).distance;
        pd.min_distance = std::min(pd.min_distance, d);
        pd.min_smoothed = std::min(pd.min_smoothed, std::sqrt(d * d + sp.eps_smooth * sp.eps_smooth));
      }
    }
    out.push_back(pd);
  }
  return out;
}

/// Solves a configuration. `log` receives the iteration records.
inline RunResult run_config(const RunConfig& cfg, std::function<void(const std::string&)> log = {}) {
  RunResult res;
  res.example = cfg.example;
  res.scheme = scheme_of(cfg);
  res.policy = policy_of(cfg);
  res.problem = build_problem(cfg);
  res.nlp = build_nlp(res.problem, res.scheme);
  auto opts = solver_options_of(cfg);
  opts.log = std::move(log);
  res.solution = ipm::solve(res.nlp, res.policy, opts);
  res.trajectory = extract_trajectory(res.nlp, res.solution.x, res.scheme.order);
  if (res.problem.def.mode_count > 0) {
    res.durations = mode_durations(res.nlp, res.solution.x, res.problem.def.mode_count);
    bool positive = true;
    for (double T : res.durations) positive = positive && std::isfinite(T) && T > 0.0;
    if (positive) res.trajectory = unscale_trajectory(res.trajectory, res.durations, res.problem.def.info.t0);
  }
  res.distances = pair_distances(res.problem, res.nlp, res.solution.x);
  return res;
}

inline int exit_code(const ipm::Solution& s) { return s.optimal() ? 0 : 2; }

/// Summary record. Wall time is included only when `with_timing` is set, so
/// the default form is reproducible byte for byte.
inline nlohmann::json summary_json(const RunResult& r, bool with_timing = false) {
  nlohmann::json j;
  const auto& s = r.solution;
  j["example"] = r.example;
  j["status"] = std::string(ipm::to_string(s.status));
  j["objective"] = s.objective;
  j["iterations"] = s.iterations;
  j["num_vars"] = r.nlp.num_vars();
  j["num_rows"] = r.nlp.num_rows();
  j["roots"] = std::string(roots_name(r.scheme.kind));
  j["ne"] = r.nlp.layout.num_elements;
  j["nc"] = r.scheme.order;
  j["relaxation"] = std::string(relax_name(r.policy.mode));
  j["delta_final"] = s.final_delta;
  j["mu_final"] = s.final_mu;
  j["residuals"] = {{"stationarity", s.residuals.stationarity},
                    {"primal", s.residuals.primal},
                    {"complementarity", s.residuals.complementarity}};
  j["complementarity_residual"] = s.complementarity;
  if (!r.durations.empty()) j["durations"] = r.durations;
  auto pairs = nlohmann::json::array();
  for (const auto& d : r.distances) {
    pairs.push_back({{"i", d.i},
                     {"j", d.j},
                     {"min_distance", d.min_distance},
                     {"min_smoothed_distance", d.min_smoothed},
                     {"required", d.required}});
  }
  j["pair_distances"] = pairs;
  if (with_timing) j["solve_seconds"] = s.solve_seconds;
  return j;
}

inline std::string trajectory_text(const RunResult& r, OutputFormat fmt) {
  std::ostringstream os;
  if (fmt == OutputFormat::Csv) {
    write_csv(os, r.trajectory);
  } else {
    write_json(os, r.trajectory);
  }
  return os.str();
}

inline std::string iteration_log_text(const RunResult& r) {
  std::string out;
  for (const auto& rec : r.solution.log) out += ipm::detail::format_record(rec) + "\n";
  return out;
}

/// Writes trajectory.{csv,json}, iterations.log and summary.json into dir.
/// The trajectory and log files hold no timing data.
inline void write_outputs(const RunResult& r, const std::string& dir, OutputFormat fmt) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::BadConfig, "cannot create output directory '" + dir + "'");
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    require(f.good(), ErrorCode::BadConfig, "cannot write '" + name + "' in '" + dir + "'");
    f << text;
  };
  put(fmt == OutputFormat::Csv ? "trajectory.csv" : "trajectory.json", trajectory_text(r, fmt));
  put("iterations.log", iteration_log_text(r));
  put("summary.json", summary_json(r, true).dump(2) + "\n");
}

}  // namespace mpcctraj::io
