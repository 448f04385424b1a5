// mpcctraj command line: `solve` runs one configuration and writes the
// trajectory, iteration log and summary; `bench` repeats configurations and
// prints a timing table.
//
// Exit codes: 0 optimal, 2 solver did not reach Optimal, 1 usage or config
// error. MPCCTRAJ_LOG selects verbosity: quiet, info (default) or debug
// (iteration records on stderr).

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpcctraj/error.hpp"
#include "mpcctraj/io/config.hpp"
#include "mpcctraj/io/run.hpp"
#include "mpcctraj/systems/examples.hpp"

namespace {

using namespace mpcctraj;

enum class Verbosity { Quiet, Info, Debug };

Verbosity verbosity() {
  const char* v = std::getenv("MPCCTRAJ_LOG");
  if (!v) return Verbosity::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return Verbosity::Quiet;
  if (s == "debug" || s == "2") return Verbosity::Debug;
  return Verbosity::Info;
}

struct Flags {
  std::string example;
  std::string config;
  std::optional<std::size_t> ne, nc, max_iter;
  std::optional<std::string> roots, relax, format, out;
  std::optional<double> delta, rho, tol;
};

void add_run_flags(CLI::App& app, Flags& f) {
  app.add_option("--ne", f.ne, "number of finite elements")->check(CLI::PositiveNumber);
  app.add_option("--nc", f.nc, "collocation points per element");
  app.add_option("--roots", f.roots, "collocation roots: legendre, radau, euler");
  app.add_option("--relax", f.relax, "relaxation: per, agg, per-mu, agg-mu, penalty");
  app.add_option("--delta", f.delta, "relaxation parameter for per and agg");
  app.add_option("--rho", f.rho, "penalty weight");
  app.add_option("--tol", f.tol, "KKT tolerance");
  app.add_option("--max-iter", f.max_iter, "iteration limit");
}

/// Config file (if any) with command-line flags applied on top.
io::RunConfig resolve(const Flags& f, const std::string& example, const std::string& config) {
  io::RunConfig cfg;
  if (!config.empty()) {
    cfg = io::load_config(config);
  } else {
    cfg.example = example;
    bool known = false;
    for (auto n : systems::kExampleNames) known = known || n == example;
    require(known, ErrorCode::UnknownExample, "unknown example '" + example + "'");
  }
  if (f.ne) cfg.num_elements = f.ne;
  if (f.nc) cfg.order = f.nc;
  if (f.roots) cfg.roots = io::parse_roots(*f.roots);
  if (f.relax) cfg.relax = io::parse_relax(*f.relax);
  if (f.delta) cfg.delta = f.delta;
  if (f.rho) cfg.rho = f.rho;
  if (f.tol) cfg.tol = f.tol;
  if (f.max_iter) cfg.max_iter = f.max_iter;
  if (f.out) cfg.out_dir = *f.out;
  if (f.format) cfg.format = io::parse_format(*f.format);
  return cfg;
}

int run_solve(const Flags& f) {
  const auto cfg = resolve(f, f.example, f.config);
  const Verbosity v = verbosity();
  std::function<void(const std::string&)> log;
  if (v == Verbosity::Debug) log = [](const std::string& s) { std::cerr << s << '\n'; };
  const auto res = io::run_config(cfg, log);
  io::write_outputs(res, cfg.out_dir, cfg.format);
  if (v != Verbosity::Quiet) std::cout << io::summary_json(res, true).dump(2) << '\n';
  return io::exit_code(res.solution);
}

struct BenchRow {
  std::string system;
  std::size_t state_dim = 0;
  double mean = 0.0;
  double stdev = 0.0;
  std::size_t size = 0;
  double cost = 0.0;
  std::size_t iterations = 0;
  std::string status;
};

int run_bench(const Flags& f, const std::vector<std::string>& examples, const std::vector<std::string>& configs,
              std::size_t reps) {
  if (examples.empty() && configs.empty()) {
    std::cerr << "bench: empty config list\n";
    return 1;
  }
  std::vector<io::RunConfig> cfgs;
  for (const auto& e : examples) cfgs.push_back(resolve(f, e, ""));
  for (const auto& c : configs) cfgs.push_back(resolve(f, "", c));
  std::vector<BenchRow> rows;
  for (const auto& cfg : cfgs) {
    BenchRow row;
    row.system = cfg.example;
    std::vector<double> times;
    try {
      for (std::size_t r = 0; r < reps; ++r) {
        const auto res = io::run_config(cfg);
        times.push_back(res.solution.solve_seconds);
        row.state_dim = res.problem.def.info.n_x;
        row.size = res.nlp.num_vars();
        row.cost = res.solution.objective;
        row.iterations = res.solution.iterations;
        row.status = res.solution.optimal() ? "ok" : "failed:" + std::string(ipm::to_string(res.solution.status));
      }
    } catch (const Error& e) {
      row.status = std::string("failed:") + e.what();
    }
    if (!times.empty()) {
      double s = 0.0;
      for (double t : times) s += t;
      row.mean = s / static_cast<double>(times.size());
      double q = 0.0;
      for (double t : times) q += (t - row.mean) * (t - row.mean);
      row.stdev = times.size() > 1 ? std::sqrt(q / static_cast<double>(times.size() - 1)) : 0.0;
    }
    rows.push_back(row);
  }
  std::printf("%-20s %9s %22s %10s %16s %6s  %s\n", "system", "state_dim", "time_s(mean+-std)", "size", "cost",
              "iters", "status");
  for (const auto& r : rows) {
    char t[64];
    std::snprintf(t, sizeof t, "%.4f+-%.4f", r.mean, r.stdev);
    std::printf("%-20s %9zu %22s %10zu %16.8g %6zu  %s\n", r.system.c_str(), r.state_dim, t, r.size, r.cost,
                r.iterations, r.status.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory optimization with complementarity and collision constraints"};
  app.require_subcommand(1);

  Flags sf;
  auto* solve = app.add_subcommand("solve", "solve one example or config file");
  auto* ex = solve->add_option("--example", sf.example, "bundled example name");
  auto* cf = solve->add_option("--config", sf.config, "JSON config file");
  ex->excludes(cf);
  add_run_flags(*solve, sf);
  solve->add_option("--out", sf.out, "output directory");
  solve->add_option("--format", sf.format, "trajectory format: csv, json");

  Flags bf;
  std::vector<std::string> bench_examples;
  std::vector<std::string> bench_configs;
  std::size_t reps = 5;
  auto* bench = app.add_subcommand("bench", "repeat configurations and report timing");
  bench->add_option("--example", bench_examples, "bundled example name (repeatable)");
  bench->add_option("configs", bench_configs, "JSON config files");
  bench->add_option("--reps", reps, "repetitions per configuration")->check(CLI::PositiveNumber);
  add_run_flags(*bench, bf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*solve) {
      if (sf.example.empty() && sf.config.empty()) {
        std::cerr << "solve: one of --example or --config is required\n";
        return 1;
      }
      return run_solve(sf);
    }
    return run_bench(bf, bench_examples, bench_configs, reps);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
