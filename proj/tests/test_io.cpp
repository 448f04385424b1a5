#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "mpcctraj/io/config.hpp"
#include "mpcctraj/io/run.hpp"
#include "mpcctraj/io/trajectory.hpp"

using namespace mpcctraj;

namespace {

Trajectory random_trajectory(std::uint64_t seed, std::size_t nx, std::size_t ny, std::size_t nu, std::size_t rows) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> ex(-30, 30);
  auto val = [&] { return std::ldexp(u(rng), ex(rng)); };
  Trajectory tr;
  tr.n_x = nx;
  tr.n_y = ny;
  tr.n_u = nu;
  for (std::size_t k = 0; k < rows; ++k) {
    Sample s;
    s.t = 0.1 * static_cast<double>(k) + 1e-3 * u(rng);
    for (std::size_t c = 0; c < nx; ++c) s.x.push_back(val()), s.xdot.push_back(val());
    for (std::size_t c = 0; c < ny; ++c) s.y.push_back(val());
    for (std::size_t c = 0; c < nu; ++c) s.u.push_back(val());
    tr.samples.push_back(s);
  }
  return tr;
}

ErrorCode config_error(std::string_view text) {
  try {
    (void)io::parse_config_text(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

io::RunConfig pendulum_config(std::size_t ne) {
  io::RunConfig cfg;
  cfg.example = "pendulum";
  cfg.num_elements = ne;
  cfg.order = 2;
  cfg.roots = RootKind::Radau;
  return cfg;
}

}  // namespace

TEST(Io, CsvRoundTrip) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto tr = random_trajectory(seed, 3, seed - 1, 2, 17);
    std::stringstream ss;
    io::write_csv(ss, tr);
    const auto back = io::read_csv(ss);
    EXPECT_EQ(back.n_x, 3u);
    EXPECT_EQ(back.n_y, seed - 1);
    EXPECT_LE(io::max_sample_difference(tr, back), 1e-12);
    EXPECT_EQ(io::max_sample_difference(tr, back), 0.0);
  }
}

TEST(Io, JsonRoundTrip) {
  const auto tr = random_trajectory(9, 2, 1, 1, 11);
  std::stringstream ss;
  io::write_json(ss, tr);
  const auto back = io::read_json(ss);
  EXPECT_EQ(io::max_sample_difference(tr, back), 0.0);
}

TEST(Io, SolvedTrajectoryRoundTrips) {
  const auto res = io::run_config(pendulum_config(10));
  ASSERT_TRUE(res.solution.optimal());
  for (auto fmt : {io::OutputFormat::Csv, io::OutputFormat::Json}) {
    std::stringstream ss(io::trajectory_text(res, fmt));
    const auto back = fmt == io::OutputFormat::Csv ? io::read_csv(ss) : io::read_json(ss);
    EXPECT_LE(io::max_sample_difference(res.trajectory, back), 1e-12);
  }
}

TEST(Io, TrajectoryReadErrors) {
  for (std::string bad : {"", "x0,y0\n1,2\n", "t,q0\n1,2\n", "t,x0,xdot0\n1,2\n", "t,x0,xdot0\n1,abc,3\n"}) {
    std::stringstream ss(bad);
    EXPECT_THROW((void)io::read_csv(ss), Error) << bad;
  }
  std::stringstream js("{\"n_x\": 1}");
  EXPECT_THROW((void)io::read_json(js), Error);
  Trajectory a = random_trajectory(1, 1, 0, 0, 3), b = random_trajectory(1, 1, 0, 0, 4);
  EXPECT_EQ(io::max_sample_difference(a, b), HUGE_VAL);
}

TEST(Io, EnumParsing) {
  EXPECT_EQ(io::parse_relax("per"), RelaxationMode::PerConstraint);
  EXPECT_EQ(io::parse_relax("agg"), RelaxationMode::Aggregate);
  EXPECT_EQ(io::parse_relax("per-mu"), RelaxationMode::PerConstraintBarrier);
  EXPECT_EQ(io::parse_relax("agg-mu"), RelaxationMode::AggregateBarrier);
  EXPECT_EQ(io::parse_relax("penalty"), RelaxationMode::Penalty);
  EXPECT_EQ(io::parse_roots("legendre"), RootKind::Legendre);
  EXPECT_EQ(io::parse_roots("radau"), RootKind::Radau);
  EXPECT_EQ(io::parse_roots("euler"), RootKind::ExplicitEuler);
  EXPECT_EQ(io::parse_format("json"), io::OutputFormat::Json);
  for (auto f : {+[] { (void)io::parse_relax("scholtes"); }, +[] { (void)io::parse_roots("gauss"); },
                 +[] { (void)io::parse_format("xml"); }}) {
    try {
      f();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadConfig);
    }
  }
}

TEST(Io, ConfigParsing) {
  const auto cfg = io::parse_config_text(R"({
    "example": "pusher",
    "scenario": {"num_elements": 12, "mu_p": 0.4, "goal": [0.1, 0.2, 0.3]},
    "problem": {"n_x": 4, "bounds": {"u_upper": [0.6, null], "x_lower": [null, null, -1e30, -0.05]}},
    "discretization": {"ne": 15, "nc": 1, "roots": "radau"},
    "relaxation": {"mode": "agg", "delta": 1e-3, "rho": 5},
    "solver": {"tol": 1e-7, "max_iter": 100},
    "output": {"dir": "somewhere", "format": "json"}
  })");
  EXPECT_EQ(cfg.example, "pusher");
  EXPECT_EQ(cfg.scenario.num_elements, 12u);
  EXPECT_EQ(cfg.num_elements, 15u);
  EXPECT_EQ(cfg.problem.bounds.at("u_upper"), (std::vector<double>{0.6, kInf}));
  EXPECT_EQ(cfg.problem.bounds.at("x_lower")[2], -kInf);
  EXPECT_EQ(cfg.format, io::OutputFormat::Json);
  EXPECT_EQ(cfg.out_dir, "somewhere");

  const auto pol = io::policy_of(cfg);
  EXPECT_EQ(pol.mode, RelaxationMode::Aggregate);
  EXPECT_EQ(pol.delta, 1e-3);
  EXPECT_EQ(pol.penalty_weight, 5.0);
  const auto opts = io::solver_options_of(cfg);
  EXPECT_EQ(opts.kkt_tol, 1e-7);
  EXPECT_EQ(opts.max_iter, 100u);

  const auto vp = io::build_problem(cfg);
  EXPECT_EQ(vp.def.info.element_widths.size(), 15u);
  EXPECT_EQ(vp.def.bounds.u_upper[0], 0.6);
  EXPECT_EQ(vp.def.bounds.u_upper[1], kInf);
  EXPECT_DOUBLE_EQ(vp.def.bounds.u_lower[1], -0.4 * 0.5);
  EXPECT_EQ(vp.def.bounds.xf_lower[2], 0.3);
}

TEST(Io, ConfigDefaults) {
  const auto cfg = io::parse_config_text(R"({"example": "car_parking"})");
  EXPECT_EQ(io::policy_of(cfg).mode, RelaxationMode::AggregateBarrier);
  EXPECT_EQ(io::scheme_of(cfg).order, 1u);
  const auto pend = io::parse_config_text(R"({"example": "pendulum", "discretization": {"roots": "euler"}})");
  EXPECT_EQ(io::scheme_of(pend).kind, RootKind::ExplicitEuler);
  EXPECT_EQ(io::scheme_of(pend).order, 1u);
  const auto modes = io::parse_config_text(
      R"({"example": "double_integrator", "modes": {"branches": [[], []], "durations": [1, 1], "minimum_time": true}})");
  ASSERT_TRUE(modes.modes.has_value());
  EXPECT_EQ(modes.modes->elements_per_mode, (std::vector<std::size_t>{20, 20}));
  EXPECT_EQ(io::build_problem(modes).def.mode_count, 2u);
}

TEST(Io, ConfigErrors) {
  EXPECT_EQ(config_error("{not json"), ErrorCode::BadConfig);
  EXPECT_EQ(config_error(R"({})"), ErrorCode::BadConfig);
  EXPECT_EQ(config_error(R"({"example": "acrobot"})"), ErrorCode::UnknownExample);
  EXPECT_EQ(config_error(R"({"example": "pusher", "colour": 1})"), ErrorCode::BadConfig);
  EXPECT_EQ(config_error(R"({"example": "pusher", "discretization": {"roots": "gauss"}})"), ErrorCode::BadConfig);
  EXPECT_EQ(config_error(R"({"example": "pusher", "discretization": {"ne": "ten"}})"), ErrorCode::BadConfig);
  EXPECT_EQ(config_error(R"({"example": "pusher", "problem": {"bounds": {"z_lower": [0]}}})"), ErrorCode::BadConfig);
  EXPECT_EQ(config_error(R"({"example": "pusher", "scenario": {"obstacles": [[[0, 0]]]}})"), ErrorCode::BadConfig);
  EXPECT_EQ(config_error(R"({"example": "pusher", "modes": {"branches": [[1, 1]]}})"), ErrorCode::BadConfig);

  auto mismatch = io::parse_config_text(R"({"example": "pusher", "problem": {"n_x": 3}})");
  EXPECT_THROW((void)io::build_problem(mismatch), Error);
  auto zero = io::parse_config_text(R"({"example": "pusher"})");
  zero.num_elements = 0;
  EXPECT_THROW((void)io::build_problem(zero), Error);
  EXPECT_THROW((void)io::load_config("/nonexistent/config.json"), Error);
}

TEST(Io, RowCountContractAndProblemSize) {
  const auto res = io::run_config(pendulum_config(50));
  ASSERT_TRUE(res.solution.optimal());
  EXPECT_EQ(res.trajectory.samples.size(), 50u * 2u + 1u);
  EXPECT_EQ(res.nlp.num_vars(), expected_num_vars(res.problem.def.info, 2));
  // Closed form for n_x = 2, n_u = 1, N_c = 2: 50 * (2 * 3 + 3 * 2) + 2.
  EXPECT_EQ(res.nlp.num_vars(), 602u);
  const auto s = io::summary_json(res);
  EXPECT_EQ(s.at("num_vars").get<std::size_t>(), 602u);
  EXPECT_EQ(s.at("status").get<std::string>(), "Optimal");
  EXPECT_FALSE(s.contains("solve_seconds"));
  EXPECT_TRUE(io::summary_json(res, true).contains("solve_seconds"));
  EXPECT_EQ(io::exit_code(res.solution), 0);
}

TEST(Io, RepeatedRunsAreByteIdentical) {
  auto cfg = pendulum_config(20);
  const auto a = io::run_config(cfg);
  const auto b = io::run_config(cfg);
  EXPECT_EQ(io::trajectory_text(a, io::OutputFormat::Csv), io::trajectory_text(b, io::OutputFormat::Csv));
  EXPECT_EQ(io::trajectory_text(a, io::OutputFormat::Json), io::trajectory_text(b, io::OutputFormat::Json));
  EXPECT_EQ(io::iteration_log_text(a), io::iteration_log_text(b));
  EXPECT_EQ(io::summary_json(a).dump(), io::summary_json(b).dump());

  const auto dir = std::filesystem::temp_directory_path() / "mpcctraj_io_test";
  std::filesystem::remove_all(dir);
  io::write_outputs(a, dir.string(), io::OutputFormat::Csv);
  for (auto name : {"trajectory.csv", "iterations.log", "summary.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  std::ifstream f(dir / "trajectory.csv");
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(ss.str(), io::trajectory_text(a, io::OutputFormat::Csv));
  std::filesystem::remove_all(dir);
}

TEST(Io, PusherSummaryReportsRelaxedComplementarity) {
  io::RunConfig cfg;
  cfg.example = "pusher";
  cfg.relax = RelaxationMode::PerConstraint;
  cfg.delta = 1e-2;
  const auto res = io::run_config(cfg);
  ASSERT_TRUE(res.solution.optimal()) << ipm::to_string(res.solution.status);
  const auto s = io::summary_json(res);
  EXPECT_LE(s.at("complementarity_residual").get<double>(), 1e-2 + 1e-8);
  EXPECT_EQ(s.at("relaxation").get<std::string>(), "per");
}

TEST(Io, CarSummaryListsPairDistances) {
  io::RunConfig cfg;
  cfg.example = "car_parking";
  cfg.num_elements = 4;
  cfg.max_iter = 1;
  const auto res = io::run_config(cfg);
  EXPECT_EQ(io::exit_code(res.solution), 2);
  ASSERT_EQ(res.distances.size(), 2u);
  for (const auto& d : res.distances) {
    EXPECT_EQ(d.i, 0u);
    EXPECT_NEAR(d.required, std::sqrt(1e-4 + 1e-8), 1e-15);
    EXPECT_GE(d.min_distance, 0.0);
  }
  EXPECT_EQ(io::summary_json(res).at("pair_distances").size(), 2u);
}
