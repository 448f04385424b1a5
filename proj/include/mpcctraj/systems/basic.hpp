#pragma once

// Smooth baselines: torque-limited pendulum swing-up and the double integrator.

#include <cmath>
#include <numbers>
#include <vector>

#include "mpcctraj/autodiff/tape.hpp"
#include "mpcctraj/mode_schedule.hpp"
#include "mpcctraj/problem.hpp"
#include "mpcctraj/systems/common.hpp"

namespace mpcctraj::systems {

struct PendulumParams {
  double gravity = 9.81;
  double length = 1.0;
  double damping = 0.1;
  double torque_max = 5.0;
};

/// theta'' = u - (g / l) sin(theta) - b theta', from hanging at rest to upright.
inline ValidatedProblem pendulum(const ExampleOptions& opt = {}, const PendulumParams& p = {}) {
  const double T = opt.horizon.value_or(4.0);
  const std::size_t ne = opt.num_elements.value_or(50);
  const std::vector<double> goal = opt.goal.value_or(std::vector<double>{std::numbers::pi, 0.0});
  require(goal.size() == 2, ErrorCode::DimensionMismatch, "pendulum goal is (theta, omega)");
  ProblemDefinition def;
  def.name = "pendulum";
  def.info.n_x = 2;
  def.info.n_u = 1;
  def.info.tf = T;
  def.info.element_widths = ProblemInfo::uniform_widths(ne, 0.0, T);
  def.bounds.x_lower = {-kInf, -kInf};
  def.bounds.x_upper = {kInf, kInf};
  def.bounds.u_lower = {-p.torque_max};
  def.bounds.u_upper = {p.torque_max};
  def.bounds.xf_lower = goal;
  def.bounds.xf_upper = goal;
  def.x0 = {0.0, 0.0};
  def.initial_guess = linear_guess(def.x0, goal, 0.0, T, {}, {0.0});
  def.dynamics = [p](const DaePoint& pt) {
    return std::vector<Var>{pt.xdot[0] - pt.x[1],
                            pt.xdot[1] - (pt.u[0] - (p.gravity / p.length) * sin(pt.x[0]) - p.damping * pt.x[1])};
  };
  def.stage_cost = [](const DaePoint& pt) { return square(pt.u[0]); };
  return validate_problem(std::move(def));
}

/// x1' = x2, x2' = u with |u| <= 1, rest to rest over unit distance. With
/// effort_cost the running cost is u^2; without it the problem only exists to
/// feed a minimum-time mode schedule.
inline ValidatedProblem double_integrator(const ExampleOptions& opt = {}, bool effort_cost = true) {
  const double T = opt.horizon.value_or(3.0);
  const std::size_t ne = opt.num_elements.value_or(20);
  const std::vector<double> goal = opt.goal.value_or(std::vector<double>{1.0, 0.0});
  require(goal.size() == 2, ErrorCode::DimensionMismatch, "double integrator goal is (position, velocity)");
  ProblemDefinition def;
  def.name = "double_integrator";
  def.info.n_x = 2;
  def.info.n_u = 1;
  def.info.tf = T;
  def.info.element_widths = ProblemInfo::uniform_widths(ne, 0.0, T);
  def.bounds.x_lower = {-kInf, -kInf};
  def.bounds.x_upper = {kInf, kInf};
  def.bounds.u_lower = {-1.0};
  def.bounds.u_upper = {1.0};
  def.bounds.xf_lower = goal;
  def.bounds.xf_upper = goal;
  def.x0 = {0.0, 0.0};
  def.initial_guess = linear_guess(def.x0, {goal[0], 0.0}, 0.0, T, {}, {0.0});
  def.dynamics = [](const DaePoint& pt) {
    return std::vector<Var>{pt.xdot[0] - pt.x[1], pt.xdot[1] - pt.u[0]};
  };
  if (effort_cost) def.stage_cost = [](const DaePoint& pt) { return square(pt.u[0]); };
  return validate_problem(std::move(def));
}

/// Single-mode minimum-time double integrator on scaled time.
inline ValidatedProblem double_integrator_min_time(std::size_t num_elements = 20, double duration_guess = 3.0) {
  ExampleOptions opt;
  opt.horizon = duration_guess;
  auto base = double_integrator(opt, false);
  ModeSequence seq;
  seq.modes = {{}};
  seq.durations_init = {duration_guess};
  seq.duration_bounds = {{0.1, 100.0}};
  seq.elements_per_mode = {num_elements};
  seq.minimum_time = true;
  return build_mode_problem(base, seq);
}

}  // namespace mpcctraj::systems
