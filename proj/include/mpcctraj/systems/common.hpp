#pragma once

// Shared pieces of the bundled scenarios: goal-interpolating guesses and
// planar rectangle vertex maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mpcctraj/autodiff/tape.hpp"
#include "mpcctraj/collision.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/problem.hpp"

namespace mpcctraj::systems {

/// Scenario overrides; unset fields keep the scenario defaults.
struct ExampleOptions {
  std::optional<std::size_t> num_elements;
  std::optional<double> horizon;
  std::optional<std::vector<double>> goal;
  std::optional<double> mu_p;
  std::optional<double> f_n_max;
  std::optional<std::vector<VertexMatrix>> obstacles;
  std::optional<double> eps_ij;
  std::optional<double> eps_smooth;
};

/// Straight-line state guess from x0 to goal over [t0, tf] with the matching
/// constant derivative. Entries of goal that are NaN stay at x0.
inline GuessFn linear_guess(std::vector<double> x0, std::vector<double> goal, double t0, double tf,
                            std::vector<double> y = {}, std::vector<double> u = {}) {
  return [=](double t) {
    const double s = std::clamp((t - t0) / (tf - t0), 0.0, 1.0);
    PointGuess g;
    for (std::size_t k = 0; k < x0.size(); ++k) {
      const double target = std::isnan(goal[k]) ? x0[k] : goal[k];
      g.x.push_back(x0[k] + s * (target - x0[k]));
      g.xdot.push_back((target - x0[k]) / (tf - t0));
    }
    g.y = y;
    g.u = u;
    return g;
  };
}

/// Piecewise-linear state guess through (time, state) waypoints, with the
/// segment slope as the derivative guess. Times must increase.
inline GuessFn waypoint_guess(std::vector<double> times, std::vector<std::vector<double>> states,
                              std::vector<double> y = {}, std::vector<double> u = {}) {
  require(times.size() >= 2 && times.size() == states.size(), ErrorCode::DimensionMismatch, "waypoint lists");
  for (std::size_t k = 1; k < times.size(); ++k) {
    require(times[k] > times[k - 1] && states[k].size() == states[0].size(), ErrorCode::InvalidArgument,
            "waypoints must have increasing times and equal sizes");
  }
  return [=](double t) {
    std::size_t k = 0;
    while (k + 2 < times.size() && t > times[k + 1]) ++k;
    const double h = times[k + 1] - times[k];
    const double s = std::clamp((t - times[k]) / h, 0.0, 1.0);
    PointGuess g;
    for (std::size_t c = 0; c < states[k].size(); ++c) {
      const double d = states[k + 1][c] - states[k][c];
      g.x.push_back(states[k][c] + s * d);
      g.xdot.push_back(d / h);
    }
    g.y = y;
    g.u = u;
    return g;
  };
}

/// Vertices of a rectangle [lo_x, hi_x] x [lo_y, hi_y] in a body frame at
/// pose (px, py, th), z = 0, in counterclockwise order.
template <class T>
std::vector<T> rectangle_vertices(T px, T py, T th, double lo_x, double hi_x, double lo_y, double hi_y) {
  using std::cos;
  using std::sin;
  const T c = cos(th);
  const T s = sin(th);
  const std::array<std::array<double, 2>, 4> body{{{lo_x, lo_y}, {hi_x, lo_y}, {hi_x, hi_y}, {lo_x, hi_y}}};
  std::vector<T> out;
  for (const auto& b : body) {
    out.push_back(px + c * b[0] - s * b[1]);
    out.push_back(py + s * b[0] + c * b[1]);
    out.push_back(T(0.0));
  }
  return out;
}

/// Axis-aligned static box in the plane z = 0.
inline VertexMatrix box(double x0, double x1, double y0, double y1) {
  return {{x0, y0, 0.0}, {x1, y0, 0.0}, {x1, y1, 0.0}, {x0, y1, 0.0}};
}

inline std::vector<PolytopeObject> static_objects(const std::vector<VertexMatrix>& obstacles) {
  std::vector<PolytopeObject> out;
  for (std::size_t k = 0; k < obstacles.size(); ++k) {
    out.push_back(PolytopeObject::fixed("obstacle" + std::to_string(k), obstacles[k]));
  }
  return out;
}

}  // namespace mpcctraj::systems
