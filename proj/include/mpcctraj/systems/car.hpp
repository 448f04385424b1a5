#pragma once

// Kinematic bicycle parking between two static boxes. x = (x, y, theta, v)
// with (x, y) the rear-axle center; u = (steer, accel).

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mpcctraj/autodiff/tape.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/problem.hpp"
#include "mpcctraj/systems/common.hpp"

namespace mpcctraj::systems {

struct CarParams {
  double wheelbase = 0.25;
  double steer_max = 0.6;
  double accel_max = 1.0;
  double v_max = 1.0;
  /// Body rectangle relative to the rear axle, along and across the heading.
  double rear_overhang = 0.1;
  double length = 0.45;
  double width = 0.25;

  void check() const {
    require(wheelbase > 0.0 && steer_max > 0.0 && accel_max > 0.0 && v_max > 0.0, ErrorCode::InvalidArgument,
            "car parameters");
    require(length > rear_overhang && width > 0.0, ErrorCode::InvalidArgument, "car body dimensions");
  }
};

template <class T>
std::vector<T> car_residual(std::span<const T> x, std::span<const T> xdot, std::span<const T> u, const CarParams& p) {
  using std::cos;
  using std::sin;
  using std::tan;
  return {xdot[0] - x[3] * cos(x[2]), xdot[1] - x[3] * sin(x[2]), xdot[2] - x[3] * tan(u[0]) / p.wheelbase,
          xdot[3] - u[1]};
}

inline PolytopeObject car_object(const CarParams& p) {
  PolytopeObject obj;
  obj.id = "car";
  obj.n_v = 4;
  obj.is_static = false;
  const double lo = -p.rear_overhang;
  const double hi = p.length - p.rear_overhang;
  const double w = 0.5 * p.width;
  obj.vertex_map = [=](VarSpan x, VarSpan) { return rectangle_vertices<Var>(x[0], x[1], x[2], lo, hi, -w, w); };
  return obj;
}

/// Boxes on either side of a slot centered at x = 2 below the lane y = 4.
inline std::vector<VertexMatrix> parking_default_obstacles() {
  return {box(0.0, 1.7, 1.5, 3.0), box(2.3, 4.0, 1.5, 3.0)};
}

inline ValidatedProblem car_parking(const ExampleOptions& opt = {}, const CarParams& params = {}) {
  params.check();
  const double T = opt.horizon.value_or(10.0);
  const std::size_t ne = opt.num_elements.value_or(40);
  const std::vector<double> goal = opt.goal.value_or(std::vector<double>{2.0, 2.5, std::numbers::pi / 2, 0.0});
  require(goal.size() == 4, ErrorCode::DimensionMismatch, "car goal is (x, y, theta, v)");
  ProblemDefinition def;
  def.name = "car_parking";
  def.info.n_x = 4;
  def.info.n_u = 2;
  def.info.tf = T;
  def.info.element_widths = ProblemInfo::uniform_widths(ne, 0.0, T);
  auto& b = def.bounds;
  b.x_lower = {-kInf, -kInf, -kInf, -params.v_max};
  b.x_upper = {kInf, kInf, kInf, params.v_max};
  b.u_lower = {-params.steer_max, -params.accel_max};
  b.u_upper = {params.steer_max, params.accel_max};
  b.xf_lower = goal;
  b.xf_upper = goal;
  def.x0 = {1.0, 4.0, 0.0, 0.0};
  if (opt.goal) {
    def.initial_guess = linear_guess(def.x0, goal, 0.0, T, {}, {0.0, 0.0});
  } else {
    // Drive past the slot, reverse along a full-lock arc, then straight back.
    const double r = params.wheelbase / std::tan(params.steer_max);
    const double xa = goal[0] + r;
    const double ya = def.x0[1] - r;
    const double q = std::numbers::pi / 4;
    const double s = T / 10.0;
    def.initial_guess = waypoint_guess(
        {0.0, 1.5 * s, 3.0 * s, 4.0 * s, 5.0 * s, T},
        {def.x0,
         {0.5 * (def.x0[0] + xa), def.x0[1], 0.0, 0.6},
         {xa, def.x0[1], 0.0, 0.0},
         {xa - r * std::sin(q), ya + r * std::cos(q), q, -0.3},
         {goal[0], ya, 2 * q, -0.3},
         goal},
        {}, {0.0, 0.0});
  }
  def.dynamics = [params](const DaePoint& pt) { return car_residual<Var>(pt.x, pt.xdot, pt.u, params); };
  def.stage_cost = [](const DaePoint& pt) { return square(pt.u[1]) + 0.1 * square(pt.u[0]) + 0.1 * square(pt.x[3]); };
  def.objects.push_back(car_object(params));
  for (auto& o : static_objects(opt.obstacles.value_or(parking_default_obstacles()))) def.objects.push_back(o);
  for (std::size_t k = 1; k < def.objects.size(); ++k) {
    def.separations.push_back(SeparationSpec{0, k, opt.eps_ij.value_or(1e-2), opt.eps_smooth.value_or(1e-4)});
  }
  return validate_problem(std::move(def));
}

}  // namespace mpcctraj::systems
