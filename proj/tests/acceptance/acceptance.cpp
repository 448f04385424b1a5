// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support.hpp"
#include "mpcctraj/collision.hpp"
#include "mpcctraj/io/run.hpp"
#include "mpcctraj/io/trajectory.hpp"
#include "mpcctraj/ipm/solver.hpp"
#include "mpcctraj/mode_schedule.hpp"
#include "mpcctraj/mpcc.hpp"
#include "mpcctraj/systems/examples.hpp"

using namespace mpcctraj;

namespace {

// Tolerances and runtime limits.
constexpr double kAc1Error = 1e-5;
constexpr double kAc1Ratio = 8.0;
constexpr double kAc1Seconds = 1.0;
constexpr double kAc2Rel = 1e-6;
constexpr std::size_t kAc2MaxVars = 200;
constexpr double kAc2Seconds = 10.0;
constexpr double kAc3Objective = 1e-3;
constexpr double kAc3Compl = 1e-8;
constexpr double kAc3Seconds = 5.0;
constexpr double kAc4Distance = 1e-4;
constexpr double kAc4Seconds = 30.0;
constexpr double kAc5Position = 1e-2;
constexpr double kAc5Angle = 5e-2;
constexpr double kAc5Compl = 1e-6;
constexpr double kAc5Slip = 1e-4;
constexpr double kAc5Cone = 1e-3;
constexpr double kAc5Seconds = 60.0;
constexpr double kAc6Terminal = 1e-2;
constexpr double kAc6Distance = 1e-6;
constexpr double kAc6Seconds = 60.0;
constexpr double kAc7Time = 1e-3;
constexpr double kAc7Continuity = 1e-8;
constexpr double kAc7Seconds = 60.0;
constexpr double kAc8RoundTrip = 1e-12;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int report(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.check(false, std::string("exception: ") + e.what());
  }
  const double elapsed = seconds_since(t0);
  if (limit_s > 0.0) out.check(elapsed < limit_s, fmt("runtime %.2f s over limit", elapsed));
  std::printf("AC%d %s %s (%.2f s): %s\n", id, out.pass ? "PASS" : "FAIL", title, elapsed, out.detail.c_str());
  std::fflush(stdout);
  return out.pass ? 0 : 1;
}

Outcome ac1() {
  Outcome o;
  auto error_at = [](std::size_t ne) {
    const auto nlp = transcribe(testing_support::decay_problem(ne), {RootKind::Radau, 2});
    const auto sol = ipm::solve(nlp);
    require(sol.optimal(), ErrorCode::InvalidArgument, "decay solve did not converge");
    const double x1 = sol.x[nlp.index(detail::key(VarClass::Xf, 0, 0, 0))];
    return std::abs(x1 - std::exp(-1.0));
  };
  const double e10 = error_at(10);
  const double e20 = error_at(20);
  o.check(e10 <= kAc1Error, fmt("error at N_e=10 is %.4e", e10));
  o.check(e10 / e20 >= kAc1Ratio, fmt("doubling ratio %.4f below 8", e10 / e20));
  o.note(fmt("err10=%.4e", e10) + fmt(" err20=%.4e", e20) + fmt(" ratio=%.4f", e10 / e20));
  return o;
}

NlpInstance small_instance(std::string_view name) {
  systems::ExampleOptions opt;
  opt.num_elements = name == "pusher_modes" ? 4 : 3;
  auto nlp = build_nlp(systems::make_example(name, opt), systems::default_scheme(name));
  if (!nlp.complementarities().empty()) nlp = reformulate(nlp, {RelaxationMode::PerConstraint, 1e-3, 10.0});
  return nlp;
}

Outcome ac2() {
  Outcome o;
  double worst = 0.0;
  std::size_t misses = 0;
  auto probe = [&](const std::string& label, const NlpInstance& nlp) {
    o.check(nlp.num_vars() <= kAc2MaxVars, label + " has too many variables for dense probing");
    const auto rep = testing_support::check_derivatives(nlp, 5, 2024);
    const double e = std::max({rep.gradient_error, rep.jacobian_error, rep.hessian_error});
    worst = std::max(worst, e);
    misses += rep.jacobian_misses + rep.hessian_misses;
    o.check(e <= kAc2Rel, label + fmt(" derivative error %.3e", e));
    o.check(rep.jacobian_misses + rep.hessian_misses == 0, label + " pattern misses dense nonzeros");
  };
  for (auto name : systems::kExampleNames) probe(std::string(name), small_instance(name));
  systems::ExampleOptions opt;
  opt.num_elements = 3;
  const auto pusher = build_nlp(systems::make_example("pusher", opt), {RootKind::Radau, 1});
  for (auto mode : {RelaxationMode::Aggregate, RelaxationMode::Penalty, RelaxationMode::AggregateBarrier}) {
    probe("pusher/" + std::to_string(static_cast<int>(mode)), reformulate(pusher, {mode, 1e-3, 10.0}));
  }
  o.note(fmt("worst scaled error %.3e", worst) + ", pattern misses " + std::to_string(misses));
  return o;
}

Outcome ac3() {
  Outcome o;
  const RelaxationMode modes[] = {RelaxationMode::PerConstraint, RelaxationMode::Aggregate,
                                  RelaxationMode::PerConstraintBarrier, RelaxationMode::AggregateBarrier,
                                  RelaxationMode::Penalty};
  const char* names[] = {"per", "agg", "per-mu", "agg-mu", "penalty"};
  // The exactly symmetric start is a saddle of the penalized objective, so
  // the starts are slightly off the diagonal or far from it.
  const double starts[][2] = {{0.5, 0.51}, {0.6, 0.4}, {2.0, 2.0}};
  std::string objs;
  for (std::size_t k = 0; k < 5; ++k) {
    double worst = 0.0;
    for (const auto& s : starts) {
      const auto sol = ipm::solve(testing_support::branch_mpcc(1.0, 1.0, s[0], s[1]), RelaxationPolicy{modes[k], 1e-6, 10.0});
      const double f = (sol.x[0] - 1.0) * (sol.x[0] - 1.0) + (sol.x[1] - 1.0) * (sol.x[1] - 1.0);
      o.check(sol.optimal(), std::string(names[k]) + " status " + std::string(ipm::to_string(sol.status)));
      o.check(std::abs(f - 1.0) <= kAc3Objective, std::string(names[k]) + fmt(" objective %.6f", f));
      worst = std::max(worst, std::abs(f - 1.0));
    }
    objs += std::string(k ? " " : "") + names[k] + fmt(" |f-1|<=%.1e", worst);
  }
  for (double delta : {1e-2, 1e-4, 1e-6}) {
    const auto nlp = testing_support::branch_mpcc();
    const auto sol = ipm::solve(nlp, RelaxationPolicy{RelaxationMode::PerConstraint, delta, 10.0});
    const double r = complementarity_residual(nlp, sol.x);
    o.check(sol.optimal(), fmt("per delta=%.0e not optimal", delta));
    o.check(r <= delta + kAc3Compl, fmt("per delta=%.0e", delta) + fmt(" residual %.3e", r));
  }
  o.note(objs);
  return o;
}

VertexMatrix random_polytope(std::mt19937_64& rng, const Point3& c) {
  std::uniform_int_distribution<int> count(3, 8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VertexMatrix v(static_cast<std::size_t>(count(rng)));
  for (auto& p : v) {
    for (std::size_t d = 0; d < 3; ++d) p[d] = c[d] + u(rng);
  }
  return v;
}

Outcome ac4() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  std::size_t touching = 0;
  for (int t = 0; t < 50; ++t) {
    const auto vi = random_polytope(rng, {0, 0, 0});
    const auto vj = random_polytope(rng, {2.0 + 1.5 * u(rng), u(rng), u(rng)});
    const double truth = min_distance_oracle(vi, vj).distance;
    if (truth < 1e-9) ++touching;
    const auto nlp = build_pair_system(vi, vj);
    const auto sol = ipm::solve(nlp, RelaxationPolicy{RelaxationMode::PerConstraintBarrier, 1e-6, 10.0});
    o.check(sol.optimal(), "pair " + std::to_string(t) + " status " + std::string(ipm::to_string(sol.status)));
    const auto pv = read_pair_variables(nlp, sol.x, 0, 0, 0, vi.size(), vj.size());
    const double err = std::abs(implied_distance(vi, vj, pv) - truth);
    worst = std::max(worst, err);
    o.check(err <= kAc4Distance, "pair " + std::to_string(t) + fmt(" distance error %.3e", err));
  }

  // Count check against the scaling formula.
  auto moving_squares = [](std::size_t ne, std::size_t n_o) {
    ProblemDefinition def;
    def.info.n_x = 2 * n_o;
    def.info.tf = 1.0;
    def.info.element_widths = ProblemInfo::uniform_widths(ne, 0.0, 1.0);
    def.bounds = VariableBounds::free(def.info);
    def.x0.assign(2 * n_o, 0.0);
    for (std::size_t k = 0; k < n_o; ++k) def.x0[2 * k] = 3.0 * static_cast<double>(k);
    def.dynamics = [](const DaePoint& p) { return std::vector<Var>(p.xdot.begin(), p.xdot.end()); };
    for (std::size_t k = 0; k < n_o; ++k) {
      PolytopeObject obj;
      obj.id = "o" + std::to_string(k);
      obj.n_v = 4;
      obj.vertex_map = [k](VarSpan x, VarSpan) {
        return systems::rectangle_vertices<Var>(x[2 * k], x[2 * k + 1], Var(0.0), -0.5, 0.5, -0.5, 0.5);
      };
      def.objects.push_back(obj);
    }
    const auto vp = validate_problem(def);
    return build_nlp(vp, {RootKind::Radau, 1}).num_vars() - transcribe(vp, {RootKind::Radau, 1}).num_vars();
  };
  const std::size_t added = moving_squares(10, 2);
  o.check(added == 180 && expected_collision_vars(10, 2, 4) == 180, "N_e=10 n_O=2 count " + std::to_string(added));
  for (std::size_t ne : {1u, 5u}) {
    for (std::size_t n_o : {3u, 4u}) {
      const std::size_t got = moving_squares(ne, n_o);
      const std::size_t want = ne * n_o * (n_o - 1) * (4 + 4 + 1);
      o.check(got == want, "count " + std::to_string(got) + " != " + std::to_string(want));
    }
  }
  o.note(fmt("worst distance error %.3e", worst) + ", " + std::to_string(touching) + " overlapping pairs, count(10,2,4)=" +
         std::to_string(added));
  return o;
}

double angle_error(double a, double b) { return std::abs(std::remainder(a - b, 2.0 * std::numbers::pi)); }

Outcome ac5() {
  Outcome o;
  const auto vp = systems::make_example("pusher");
  const std::size_t ne = vp.def.info.num_elements();
  o.check(ne <= 50, "more than 50 elements");
  o.check(vp.def.x0[0] == 0.0 && vp.def.x0[1] == 0.0 && vp.def.x0[2] == 0.0, "initial pose");
  const double mu = vp.def.bounds.u_upper[1] / vp.def.bounds.u_upper[0];
  o.check(std::abs(mu - 0.3) <= 1e-15, "friction coefficient");
  o.check(vp.def.bounds.u_upper[0] == 0.5, "f_n bound");
  const auto nlp = build_nlp(vp, {RootKind::Radau, 1});
  const auto sol = ipm::solve(nlp, systems::default_policy("pusher"));
  o.check(sol.optimal(), std::string("status ") + std::string(ipm::to_string(sol.status)));
  const auto traj = extract_trajectory(nlp, sol.x, 1);
  const auto& xf = traj.samples.back().x;
  const double pos = std::hypot(xf[0] - 0.0, xf[1] - 0.5);
  const double ang = angle_error(xf[2], std::numbers::pi);
  o.check(pos <= kAc5Position, fmt("terminal position error %.3e", pos));
  o.check(ang <= kAc5Angle, fmt("terminal angle error %.3e", ang));
  const double compl_res = complementarity_residual(nlp, sol.x);
  o.check(compl_res <= sol.final_delta + kAc5Compl, fmt("complementarity %.3e", compl_res));
  double worst_cone = 0.0;
  std::size_t slipping = 0;
  for (std::size_t e = 0; e < ne; ++e) {
    auto at = [&](VarClass cls, std::size_t c) { return sol.x[nlp.index(detail::key(cls, e, 1, c))]; };
    const double pdot = at(VarClass::Y, 0) - at(VarClass::Y, 1);
    if (std::abs(pdot) <= kAc5Slip) continue;
    ++slipping;
    worst_cone = std::max(worst_cone, std::abs(std::abs(at(VarClass::U, 1)) - mu * at(VarClass::U, 0)));
  }
  o.check(worst_cone <= kAc5Cone, fmt("cone boundary gap %.3e", worst_cone));
  o.note("N_e=" + std::to_string(ne) + ", iterations " + std::to_string(sol.iterations) + fmt(", pos err %.2e", pos) +
         fmt(", complementarity %.2e", compl_res) + fmt(" (delta_final %.1e)", sol.final_delta) + ", slipping points " +
         std::to_string(slipping) + fmt(", cone gap %.2e", worst_cone));
  return o;
}

Outcome ac6() {
  Outcome o;
  const auto vp = systems::make_example("car_parking");
  o.check(vp.def.x0 == std::vector<double>{1.0, 4.0, 0.0, 0.0}, "start state");
  o.check(vp.def.objects.size() == 3, "expected the car and two obstacles");
  const auto nlp = build_nlp(vp, {RootKind::Radau, 1});
  const auto sol = ipm::solve(nlp, systems::default_policy("car_parking"));
  o.check(sol.optimal(), std::string("status ") + std::string(ipm::to_string(sol.status)));
  const auto traj = extract_trajectory(nlp, sol.x, 1);
  const auto& xf = traj.samples.back().x;
  const std::vector<double> goal{2.0, 2.5, std::numbers::pi / 2, 0.0};
  double term = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    term = std::max(term, c == 2 ? angle_error(xf[c], goal[c]) : std::abs(xf[c] - goal[c]));
  }
  o.check(term <= kAc6Terminal, fmt("terminal error %.3e", term));
  // Smoothed distance between the solved witness points, and the true
  // polytope distance for reference.
  double margin = HUGE_VAL;
  double geometric = HUGE_VAL;
  const auto& d = vp.def;
  for (std::size_t s = 0; s < d.separations.size(); ++s) {
    const auto& sp = d.separations[s];
    const double required = std::sqrt(sp.eps_ij * sp.eps_ij + sp.eps_smooth * sp.eps_smooth);
    for (std::size_t e = 0; e < nlp.layout.num_elements; ++e) {
      const auto vi = vertices_at(nlp, sol.x, d.objects[sp.i], e, 1);
      const auto vj = vertices_at(nlp, sol.x, d.objects[sp.j], e, 1);
      const auto pv = read_pair_variables(nlp, sol.x, e, 1, s, vi.size(), vj.size());
      const double implied = implied_distance(vi, vj, pv);
      margin = std::min(margin, std::sqrt(implied * implied + sp.eps_smooth * sp.eps_smooth) - required);
      const double true_d = min_distance_oracle(vi, vj).distance;
      geometric = std::min(geometric, std::sqrt(true_d * true_d + sp.eps_smooth * sp.eps_smooth) - required);
    }
  }
  o.check(margin >= -kAc6Distance, fmt("separation margin %.3e", margin));
  o.note("iterations " + std::to_string(sol.iterations) + fmt(", terminal err %.2e", term) +
         fmt(", min smoothed-distance margin %.3e", margin) +
         fmt(" (oracle geometry %.3e)", geometric));
  return o;
}

Outcome ac7() {
  Outcome o;
  {
    const auto mp = systems::double_integrator_min_time();
    const auto nlp = build_nlp(mp, {RootKind::Radau, 2});
    const auto sol = ipm::solve(nlp);
    o.check(sol.optimal(), "double integrator status " + std::string(ipm::to_string(sol.status)));
    const double T = mode_durations(nlp, sol.x, 1)[0];
    o.check(std::abs(T - 2.0) <= kAc7Time, fmt("double integrator T = %.6f", T));
    o.note(fmt("DI T=%.6f", T));
  }
  const auto mp = systems::make_example("pusher_modes");
  const auto nlp = build_nlp(mp, {RootKind::Radau, 1});
  const auto sol = ipm::solve(nlp);
  o.check(sol.optimal(), "pusher_modes status " + std::string(ipm::to_string(sol.status)));
  const std::size_t M = mp.def.mode_count;
  const auto T = mode_durations(nlp, sol.x, M);
  for (double t : T) o.check(t > 0.0, fmt("nonpositive duration %.3e", t));
  // State continuity at each mode switch.
  const std::size_t ne = nlp.layout.num_elements;
  const std::size_t per_mode = ne / M;
  double jump = 0.0;
  for (std::size_t m = 1; m < M; ++m) {
    const std::size_t e = m * per_mode;
    for (std::size_t c = 0; c < nlp.layout.n_x; ++c) {
      jump = std::max(jump, std::abs(sol.x[nlp.index(detail::key(VarClass::X, e - 1, 1, c))] -
                                     sol.x[nlp.index(detail::key(VarClass::X, e, 0, c))]));
    }
  }
  o.check(jump <= kAc7Continuity, fmt("state jump %.3e at switch", jump));
  // Pinned bounds hold exactly.
  std::size_t violations = 0;
  for (std::size_t e = 0; e < ne; ++e) {
    const NodeContext ctx{static_cast<double>(e) / per_mode, e, 1, 0};
    const auto pb = mp.point_bounds(ctx);
    for (std::size_t c = 0; c < nlp.layout.n_y; ++c) {
      if (pb.y_lower[c] != pb.y_upper[c]) continue;
      if (sol.x[nlp.index(detail::key(VarClass::Y, e, 1, c))] != pb.y_lower[c]) ++violations;
    }
  }
  o.check(violations == 0, std::to_string(violations) + " pinned values off their bound");
  std::string ts;
  for (double t : T) ts += fmt(" %.4f", t);
  o.note("pusher_modes T =" + ts + fmt(", switch jump %.1e", jump));
  return o;
}

Outcome ac8() {
  Outcome o;
  io::RunConfig cfg;
  cfg.example = "pusher";
  cfg.num_elements = 30;
  const auto a = io::run_config(cfg);
  const auto b = io::run_config(cfg);
  for (auto f : {io::OutputFormat::Csv, io::OutputFormat::Json}) {
    o.check(io::trajectory_text(a, f) == io::trajectory_text(b, f), "trajectory text differs between runs");
    std::stringstream ss(io::trajectory_text(a, f));
    const auto back = f == io::OutputFormat::Csv ? io::read_csv(ss) : io::read_json(ss);
    const double d = io::max_sample_difference(a.trajectory, back);
    o.check(d <= kAc8RoundTrip, fmt("round trip difference %.3e", d));
  }
  o.check(io::iteration_log_text(a) == io::iteration_log_text(b), "iteration logs differ");
  o.check(io::summary_json(a).dump() == io::summary_json(b).dump(), "summaries differ");
  o.check(a.solution.x == b.solution.x, "primal vectors differ");
  o.note(std::to_string(a.trajectory.samples.size()) + " samples, status " +
         std::string(ipm::to_string(a.solution.status)));
  return o;
}

}  // namespace

int main() {
  int failed = 0;
  failed += report(1, "collocation accuracy and order", kAc1Seconds, ac1);
  failed += report(2, "derivatives and sparsity", kAc2Seconds, ac2);
  failed += report(3, "MPCC branch oracle", kAc3Seconds, ac3);
  failed += report(4, "collision system vs distance oracle", kAc4Seconds, ac4);
  failed += report(5, "pusher-slider", kAc5Seconds, ac5);
  failed += report(6, "car parking", kAc6Seconds, ac6);
  failed += report(7, "mode sequences", kAc7Seconds, ac7);
  failed += report(8, "determinism and I/O", 0.0, ac8);
  std::printf("%d of 8 criteria failed\n", failed);
  return failed;
}
