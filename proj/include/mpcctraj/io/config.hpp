#pragma once

// Run configuration: the example to build, scenario and problem overrides,
// an optional mode sequence, discretization, relaxation and solver settings.
// JSON files use the same field names as RunConfig; every field is optional
// except `example`.
//
//   {
//     "example": "pusher",
//     "scenario": {"goal": [0, 0.5, 3.14159], "mu_p": 0.3, "obstacles": [[[0,0,0], ...]]},
//     "problem": {"x0": [...], "bounds": {"u_upper": [...]}, "complementarities": [...]},
//     "modes": {"branches": [[1,1],[1,1]], "durations": [4,1], "duration_bounds": [[0.05,50],[0.05,50]],
//               "elements_per_mode": [20,20], "minimum_time": true},
//     "discretization": {"ne": 40, "nc": 1, "roots": "radau"},
//     "relaxation": {"mode": "per-mu", "delta": 1e-6, "rho": 10},
//     "solver": {"tol": 1e-8, "max_iter": 500},
//     "output": {"dir": "out", "format": "csv"}
//   }

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mpcctraj/collocation.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/ipm/solver.hpp"
#include "mpcctraj/mode_schedule.hpp"
#include "mpcctraj/mpcc.hpp"
#include "mpcctraj/problem.hpp"
#include "mpcctraj/systems/examples.hpp"

namespace mpcctraj::io {

using Json = nlohmann::json;

enum class OutputFormat { Csv, Json };

/// Declarative edits applied to the built example before validation.
struct ProblemOverrides {
  /// Expected sizes; a mismatch with the named dynamics is a config error.
  std::optional<std::size_t> n_x, n_y, n_u, n_p;
  std::optional<std::vector<double>> x0;
  std::optional<std::vector<double>> element_widths;
  /// Keys are VariableBounds field names such as "u_upper".
  std::map<std::string, std::vector<double>> bounds;
  std::optional<std::vector<ComplementarityPair>> complementarities;
};

struct RunConfig {
  std::string example;
  systems::ExampleOptions scenario;
  ProblemOverrides problem;
  std::optional<ModeSequence> modes;
  std::optional<std::size_t> num_elements;
  std::optional<std::size_t> order;
  std::optional<RootKind> roots;
  std::optional<RelaxationMode> relax;
  std::optional<double> delta;
  std::optional<double> rho;
  std::optional<double> tol;
  std::optional<std::size_t> max_iter;
  std::string out_dir = "out";
  OutputFormat format = OutputFormat::Csv;
};

inline RelaxationMode parse_relax(std::string_view s) {
  if (s == "per") return RelaxationMode::PerConstraint;
  if (s == "agg") return RelaxationMode::Aggregate;
  if (s == "per-mu") return RelaxationMode::PerConstraintBarrier;
  if (s == "agg-mu") return RelaxationMode::AggregateBarrier;
  if (s == "penalty") return RelaxationMode::Penalty;
  fail(ErrorCode::BadConfig, "unknown relaxation '" + std::string(s) + "' (per, agg, per-mu, agg-mu, penalty)");
}

constexpr std::string_view relax_name(RelaxationMode m) {
  switch (m) {
    case RelaxationMode::PerConstraint: return "per";
    case RelaxationMode::Aggregate: return "agg";
    case RelaxationMode::PerConstraintBarrier: return "per-mu";
    case RelaxationMode::AggregateBarrier: return "agg-mu";
    case RelaxationMode::Penalty: return "penalty";
  }
  return "per";
}

inline RootKind parse_roots(std::string_view s) {
  if (s == "legendre") return RootKind::Legendre;
  if (s == "radau") return RootKind::Radau;
  if (s == "euler") return RootKind::ExplicitEuler;
  fail(ErrorCode::BadConfig, "unknown roots '" + std::string(s) + "' (legendre, radau, euler)");
}

constexpr std::string_view roots_name(RootKind k) {
  switch (k) {
    case RootKind::Legendre: return "legendre";
    case RootKind::Radau: return "radau";
    case RootKind::ExplicitEuler: return "euler";
  }
  return "radau";
}

inline OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  fail(ErrorCode::BadConfig, "unknown output format '" + std::string(s) + "' (csv, json)");
}

namespace detail {

template <class T>
T get(const Json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::BadConfig, std::string("config field '") + what + "': " + e.what());
  }
}

template <class T>
void read(const Json& obj, const char* key, std::optional<T>& dst) {
  if (obj.contains(key)) dst = get<T>(obj.at(key), key);
}

inline void check_keys(const Json& obj, const char* where, std::initializer_list<std::string_view> allowed) {
  require(obj.is_object(), ErrorCode::BadConfig, std::string("config section '") + where + "' must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    require(ok, ErrorCode::BadConfig, std::string("unknown key '") + k + "' in '" + where + "'");
  }
}

inline VertexMatrix parse_vertices(const Json& j) {
  VertexMatrix v;
  require(j.is_array() && !j.empty(), ErrorCode::BadConfig, "an obstacle is a non-empty list of 3-vectors");
  for (const auto& p : j) {
    const auto q = get<std::vector<double>>(p, "obstacles");
    require(q.size() == 3, ErrorCode::BadConfig, "obstacle vertices must be 3-vectors");
    v.push_back({q[0], q[1], q[2]});
  }
  return v;
}

inline BoundSide parse_side(const Json& j) {
  const auto s = get<std::string>(j, "side");
  if (s == "lower") return BoundSide::Lower;
  if (s == "upper") return BoundSide::Upper;
  fail(ErrorCode::BadConfig, "complementarity side must be 'lower' or 'upper'");
}

inline bool is_bound_field(std::string_view k) {
  for (std::string_view f : {"x_lower", "x_upper", "xdot_lower", "xdot_upper", "y_lower", "y_upper", "u_lower",
                             "u_upper", "p_lower", "p_upper", "xf_lower", "xf_upper"}) {
    if (f == k) return true;
  }
  return false;
}

inline std::vector<double>& bound_field(VariableBounds& b, std::string_view k) {
  if (k == "x_lower") return b.x_lower;
  if (k == "x_upper") return b.x_upper;
  if (k == "xdot_lower") return b.xdot_lower;
  if (k == "xdot_upper") return b.xdot_upper;
  if (k == "y_lower") return b.y_lower;
  if (k == "y_upper") return b.y_upper;
  if (k == "u_lower") return b.u_lower;
  if (k == "u_upper") return b.u_upper;
  if (k == "p_lower") return b.p_lower;
  if (k == "p_upper") return b.p_upper;
  if (k == "xf_lower") return b.xf_lower;
  if (k == "xf_upper") return b.xf_upper;
  fail(ErrorCode::BadConfig, "unknown bound field '" + std::string(k) + "'");
}

/// JSON has no infinity literal; null entries and +-1e20 or beyond are read as infinite.
inline std::vector<double> parse_bound_vector(const Json& j, const std::string& key) {
  require(j.is_array(), ErrorCode::BadConfig, "bound '" + key + "' must be an array");
  const bool lower = key.ends_with("_lower");
  std::vector<double> out;
  for (const auto& v : j) {
    if (v.is_null()) {
      out.push_back(lower ? -kInf : kInf);
      continue;
    }
    double d = get<double>(v, key.c_str());
    if (d >= 1e20) d = kInf;
    if (d <= -1e20) d = -kInf;
    out.push_back(d);
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const Json& j) {
  using namespace detail;
  check_keys(j, "top level",
             {"example", "scenario", "problem", "modes", "discretization", "relaxation", "solver", "output"});
  RunConfig cfg;
  require(j.contains("example"), ErrorCode::BadConfig, "config needs an 'example' name");
  cfg.example = get<std::string>(j.at("example"), "example");
  bool known = false;
  for (auto n : systems::kExampleNames) known = known || n == cfg.example;
  require(known, ErrorCode::UnknownExample, "unknown example '" + cfg.example + "'");

  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    check_keys(s, "scenario", {"num_elements", "horizon", "goal", "mu_p", "f_n_max", "obstacles", "eps_ij", "eps_smooth"});
    auto& o = cfg.scenario;
    read(s, "num_elements", o.num_elements);
    read(s, "horizon", o.horizon);
    read(s, "goal", o.goal);
    read(s, "mu_p", o.mu_p);
    read(s, "f_n_max", o.f_n_max);
    read(s, "eps_ij", o.eps_ij);
    read(s, "eps_smooth", o.eps_smooth);
    if (s.contains("obstacles")) {
      std::vector<VertexMatrix> obs;
      require(s.at("obstacles").is_array(), ErrorCode::BadConfig, "obstacles must be a list");
      for (const auto& ob : s.at("obstacles")) obs.push_back(parse_vertices(ob));
      o.obstacles = obs;
    }
  }
  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    check_keys(p, "problem", {"n_x", "n_y", "n_u", "n_p", "x0", "element_widths", "bounds", "complementarities"});
    auto& po = cfg.problem;
    read(p, "n_x", po.n_x);
    read(p, "n_y", po.n_y);
    read(p, "n_u", po.n_u);
    read(p, "n_p", po.n_p);
    read(p, "x0", po.x0);
    read(p, "element_widths", po.element_widths);
    if (p.contains("bounds")) {
      const auto& b = p.at("bounds");
      require(b.is_object(), ErrorCode::BadConfig, "bounds must be an object");
      for (const auto& [k, v] : b.items()) {
        require(is_bound_field(k), ErrorCode::BadConfig, "unknown bound field '" + k + "'");
        po.bounds[k] = parse_bound_vector(v, k);
      }
    }
    if (p.contains("complementarities")) {
      std::vector<ComplementarityPair> pairs;
      for (const auto& c : p.at("complementarities")) {
        check_keys(c, "complementarities", {"y1", "y2", "side1", "side2"});
        require(c.contains("y1") && c.contains("y2"), ErrorCode::BadConfig, "complementarity needs y1 and y2");
        ComplementarityPair cp;
        cp.sigma1 = get<std::size_t>(c.at("y1"), "y1");
        cp.sigma2 = get<std::size_t>(c.at("y2"), "y2");
        if (c.contains("side1")) cp.side1 = parse_side(c.at("side1"));
        if (c.contains("side2")) cp.side2 = parse_side(c.at("side2"));
        pairs.push_back(cp);
      }
      po.complementarities = pairs;
    }
  }
  if (j.contains("modes")) {
    const auto& m = j.at("modes");
    check_keys(m, "modes", {"branches", "durations", "duration_bounds", "elements_per_mode", "minimum_time"});
    require(m.contains("branches") && m.contains("durations"), ErrorCode::BadConfig,
            "modes need 'branches' and 'durations'");
    ModeSequence seq;
    seq.modes = get<std::vector<std::vector<int>>>(m.at("branches"), "branches");
    seq.durations_init = get<std::vector<double>>(m.at("durations"), "durations");
    const std::size_t M = seq.modes.size();
    if (m.contains("duration_bounds")) {
      seq.duration_bounds = get<std::vector<std::pair<double, double>>>(m.at("duration_bounds"), "duration_bounds");
    } else {
      seq.duration_bounds.assign(M, {1e-3, 1e3});
    }
    if (m.contains("elements_per_mode")) {
      seq.elements_per_mode = get<std::vector<std::size_t>>(m.at("elements_per_mode"), "elements_per_mode");
    } else {
      seq.elements_per_mode.assign(M, 20);
    }
    if (m.contains("minimum_time")) seq.minimum_time = get<bool>(m.at("minimum_time"), "minimum_time");
    cfg.modes = seq;
  }
  if (j.contains("discretization")) {
    const auto& d = j.at("discretization");
    check_keys(d, "discretization", {"ne", "nc", "roots"});
    read(d, "ne", cfg.num_elements);
    read(d, "nc", cfg.order);
    if (d.contains("roots")) cfg.roots = parse_roots(get<std::string>(d.at("roots"), "roots"));
  }
  if (j.contains("relaxation")) {
    const auto& r = j.at("relaxation");
    check_keys(r, "relaxation", {"mode", "delta", "rho"});
    if (r.contains("mode")) cfg.relax = parse_relax(get<std::string>(r.at("mode"), "mode"));
    read(r, "delta", cfg.delta);
    read(r, "rho", cfg.rho);
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s, "solver", {"tol", "max_iter"});
    read(s, "tol", cfg.tol);
    read(s, "max_iter", cfg.max_iter);
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    check_keys(o, "output", {"dir", "format"});
    if (o.contains("dir")) cfg.out_dir = get<std::string>(o.at("dir"), "dir");
    if (o.contains("format")) cfg.format = parse_format(get<std::string>(o.at("format"), "format"));
  }
  return cfg;
}

inline RunConfig parse_config_text(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::BadConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::BadConfig, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Builds and validates the configured problem.
inline ValidatedProblem build_problem(const RunConfig& cfg) {
  systems::ExampleOptions opt = cfg.scenario;
  if (cfg.num_elements) {
    require(*cfg.num_elements >= 1, ErrorCode::BadConfig, "ne must be at least 1");
    opt.num_elements = cfg.num_elements;
  }
  ValidatedProblem vp = cfg.modes ? systems::make_mode_example(cfg.example, opt, *cfg.modes)
                                  : systems::make_example(cfg.example, opt);
  const auto& po = cfg.problem;
  auto check_dim = [](const std::optional<std::size_t>& want, std::size_t have, const char* what) {
    require(!want || *want == have, ErrorCode::BadConfig,
            std::string("config ") + what + " = " + std::to_string(want.value_or(0)) + " but the example has " +
                std::to_string(have));
  };
  const auto& in = vp.def.info;
  check_dim(po.n_x, in.n_x, "n_x");
  check_dim(po.n_y, in.n_y, "n_y");
  check_dim(po.n_u, in.n_u, "n_u");
  check_dim(po.n_p, in.n_p, "n_p");
  const bool edits = po.x0 || po.element_widths || !po.bounds.empty() || po.complementarities;
  if (!edits) return vp;
  ProblemDefinition def = vp.def;
  if (po.x0) def.x0 = *po.x0;
  if (po.element_widths) {
    def.info.element_widths = *po.element_widths;
    double sum = 0.0;
    for (double h : *po.element_widths) sum += h;
    def.info.tf = def.info.t0 + sum;
  }
  for (const auto& [k, v] : po.bounds) detail::bound_field(def.bounds, k) = v;
  if (po.complementarities) def.complementarities = *po.complementarities;
  return validate_problem(std::move(def));
}

inline RootScheme scheme_of(const RunConfig& cfg) {
  RootScheme s = systems::default_scheme(cfg.example);
  if (cfg.roots) s.kind = *cfg.roots;
  if (cfg.order) s.order = *cfg.order;
  if (s.kind == RootKind::ExplicitEuler && !cfg.order) s.order = 1;
  return s;
}

inline RelaxationPolicy policy_of(const RunConfig& cfg) {
  RelaxationPolicy p = systems::default_policy(cfg.example);
  if (cfg.relax) p.mode = *cfg.relax;
  if (cfg.delta) p.delta = *cfg.delta;
  if (cfg.rho) p.penalty_weight = *cfg.rho;
  return p;
}

inline ipm::SolverOptions solver_options_of(const RunConfig& cfg) {
  ipm::SolverOptions o;
  if (cfg.tol) o.kkt_tol = *cfg.tol;
  if (cfg.max_iter) o.max_iter = *cfg.max_iter;
  return o;
}

}  // namespace mpcctraj::io
