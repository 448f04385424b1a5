#pragma once

// Quasi-static pusher-slider with an ellipsoidal limit surface. The pusher
// touches one face of a square slider; Coulomb friction at the contact is
// expressed through two complementarity pairs on the slip velocities.
//
// x = (x, y, theta, p_y), u = (f_n, f_t), y = (pdot+, pdot-, xi+, xi-) with
// xi+ = mu f_n - f_t and xi- = mu f_n + f_t.

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mpcctraj/autodiff/tape.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/mode_schedule.hpp"
#include "mpcctraj/problem.hpp"
#include "mpcctraj/systems/common.hpp"

namespace mpcctraj::systems {

struct PusherSliderParams {
  double mu_p = 0.3;
  double f_n_max = 0.5;
  std::array<double, 3> limit_surface_diag{1.0, 1.0, 1.0 / (0.05 * 0.05)};
  double half_width = 0.05;

  void check() const {
    require(mu_p > 0.0 && f_n_max > 0.0 && half_width > 0.0, ErrorCode::InvalidArgument, "pusher parameters");
    for (double l : limit_surface_diag) require(l > 0.0, ErrorCode::InvalidArgument, "limit surface diagonal");
  }
};

/// Contact face, counterclockwise from the left face. Face k is the left-face
/// geometry rotated by -k * 90 degrees in the body frame.
enum class PusherFace { Left = 0, Top = 1, Right = 2, Bottom = 3 };

/// Body-frame twist (v_x, v_y, omega) from the contact forces.
template <class T>
std::array<T, 3> pusher_twist(T p_y, T f_n, T f_t, const PusherSliderParams& prm, PusherFace face) {
  // Left face: contact (-a, p_y), normal (1, 0), tangent (0, 1).
  double c[2] = {-prm.half_width, 0.0};
  double n[2] = {1.0, 0.0};
  double t[2] = {0.0, 1.0};
  const int k = static_cast<int>(face);
  auto rot = [k](double v[2]) {
    for (int r = 0; r < k; ++r) {
      const double x = v[0];
      v[0] = v[1];
      v[1] = -x;
    }
  };
  rot(c);
  rot(n);
  rot(t);
  // Contact point moves along the tangent with p_y.
  const T cx = T(c[0]) + p_y * t[0];
  const T cy = T(c[1]) + p_y * t[1];
  const T fx = f_n * n[0] + f_t * t[0];
  const T fy = f_n * n[1] + f_t * t[1];
  const T tau = cx * fy - cy * fx;
  const auto& L = prm.limit_surface_diag;
  return {fx * L[0], fy * L[1], tau * L[2]};
}

/// Six residual rows: four state rows xdot - f(x, u) and the two friction
/// cone slack definitions.
template <class T>
std::vector<T> pusher_slider_residual(std::span<const T> x, std::span<const T> xdot, std::span<const T> y,
                                      std::span<const T> u, const PusherSliderParams& prm,
                                      PusherFace face = PusherFace::Left) {
  using std::cos;
  using std::sin;
  const auto tw = pusher_twist<T>(x[3], u[0], u[1], prm, face);
  const T c = cos(x[2]);
  const T s = sin(x[2]);
  std::vector<T> r;
  r.push_back(xdot[0] - (c * tw[0] - s * tw[1]));
  r.push_back(xdot[1] - (s * tw[0] + c * tw[1]));
  r.push_back(xdot[2] - tw[2]);
  r.push_back(xdot[3] - (y[0] - y[1]));
  r.push_back(y[2] - (prm.mu_p * u[0] - u[1]));
  r.push_back(y[3] - (prm.mu_p * u[0] + u[1]));
  return r;
}

struct PusherScenario {
  PusherSliderParams params;
  std::vector<double> goal{0.0, 0.5, std::numbers::pi};
  double horizon = 5.0;
  std::size_t num_elements = 40;
  double slip_max = 1.0;
  /// Face used in each mode; the default uses the left face throughout.
  std::vector<PusherFace> faces{PusherFace::Left};
};

/// Pusher-slider problem from rest at the origin with p_y(0) = 0 and a hard
/// terminal pose. Cost is control effort plus a small slip penalty.
inline ProblemDefinition pusher_definition(const PusherScenario& sc) {
  sc.params.check();
  require(sc.goal.size() == 3, ErrorCode::DimensionMismatch, "pusher goal is (x, y, theta)");
  require(!sc.faces.empty(), ErrorCode::InvalidArgument, "pusher needs a contact face");
  const auto& prm = sc.params;
  ProblemDefinition def;
  def.name = "pusher";
  def.info.n_x = 4;
  def.info.n_y = 4;
  def.info.n_u = 2;
  def.info.t0 = 0.0;
  def.info.tf = sc.horizon;
  def.info.element_widths = ProblemInfo::uniform_widths(sc.num_elements, 0.0, sc.horizon);
  auto& b = def.bounds;
  const double a = prm.half_width;
  b.x_lower = {-kInf, -kInf, -kInf, -a};
  b.x_upper = {kInf, kInf, kInf, a};
  b.y_lower = {0.0, 0.0, 0.0, 0.0};
  b.y_upper = {sc.slip_max, sc.slip_max, kInf, kInf};
  b.u_lower = {0.0, -prm.mu_p * prm.f_n_max};
  b.u_upper = {prm.f_n_max, prm.mu_p * prm.f_n_max};
  b.xf_lower = {sc.goal[0], sc.goal[1], sc.goal[2], -a};
  b.xf_upper = {sc.goal[0], sc.goal[1], sc.goal[2], a};
  def.x0 = {0.0, 0.0, 0.0, 0.0};
  const double fn0 = 0.2 * prm.f_n_max;
  def.initial_guess = linear_guess(def.x0, {sc.goal[0], sc.goal[1], sc.goal[2], 0.0}, 0.0, sc.horizon,
                                   {0.0, 0.0, prm.mu_p * fn0, prm.mu_p * fn0}, {fn0, 0.0});
  const auto faces = sc.faces;
  def.dynamics = [prm, faces](const DaePoint& pt) {
    const PusherFace face = faces[std::min(pt.ctx.mode, faces.size() - 1)];
    return pusher_slider_residual<Var>(pt.x, pt.xdot, pt.y, pt.u, prm, face);
  };
  def.stage_cost = [](const DaePoint& pt) {
    return square(pt.u[0]) + square(pt.u[1]) + 0.1 * (square(pt.y[0]) + square(pt.y[1]));
  };
  def.complementarities = {ComplementarityPair{0, 2, BoundSide::Lower, BoundSide::Lower, 0},
                           ComplementarityPair{1, 3, BoundSide::Lower, BoundSide::Lower, 0}};
  return def;
}

/// Slider footprint as a moving square driven by (x, y, theta).
inline PolytopeObject slider_object(const PusherSliderParams& prm) {
  PolytopeObject obj;
  obj.id = "slider";
  obj.n_v = 4;
  obj.is_static = false;
  const double a = prm.half_width;
  obj.vertex_map = [a](VarSpan x, VarSpan) { return rectangle_vertices<Var>(x[0], x[1], x[2], -a, a, -a, a); };
  return obj;
}

inline ValidatedProblem pusher(const ExampleOptions& opt = {}) {
  PusherScenario sc;
  if (opt.num_elements) sc.num_elements = *opt.num_elements;
  if (opt.horizon) sc.horizon = *opt.horizon;
  if (opt.goal) sc.goal = *opt.goal;
  if (opt.mu_p) sc.params.mu_p = *opt.mu_p;
  if (opt.f_n_max) sc.params.f_n_max = *opt.f_n_max;
  return validate_problem(pusher_definition(sc));
}

/// Default obstacles flanking the goal (0.5, 0.5).
inline std::vector<VertexMatrix> pusher_default_obstacles() {
  return {box(0.25, 0.35, 0.40, 0.60), box(0.65, 0.75, 0.40, 0.60)};
}

inline ValidatedProblem pusher_obstacles(const ExampleOptions& opt = {}) {
  PusherScenario sc;
  sc.goal = {0.5, 0.5, 0.0};
  sc.horizon = 6.0;
  if (opt.num_elements) sc.num_elements = *opt.num_elements;
  if (opt.horizon) sc.horizon = *opt.horizon;
  if (opt.goal) sc.goal = *opt.goal;
  if (opt.mu_p) sc.params.mu_p = *opt.mu_p;
  if (opt.f_n_max) sc.params.f_n_max = *opt.f_n_max;
  ProblemDefinition def = pusher_definition(sc);
  def.name = "pusher_obstacles";
  def.objects.push_back(slider_object(sc.params));
  for (auto& o : static_objects(opt.obstacles.value_or(pusher_default_obstacles()))) def.objects.push_back(o);
  for (std::size_t k = 1; k < def.objects.size(); ++k) {
    def.separations.push_back(SeparationSpec{0, k, opt.eps_ij.value_or(1e-2), opt.eps_smooth.value_or(1e-4)});
  }
  return validate_problem(std::move(def));
}

/// Two sticking-contact modes, left face then top face, minimum time to the
/// goal (0, 0, pi). Both slip velocities are pinned to zero in every mode.
inline ModeSequence pusher_mode_sequence(std::size_t elements_per_mode = 20) {
  ModeSequence seq;
  seq.modes = {{1, 1}, {1, 1}};
  seq.durations_init = {4.0, 1.0};
  seq.duration_bounds = {{0.05, 50.0}, {0.05, 50.0}};
  seq.elements_per_mode = {elements_per_mode, elements_per_mode};
  seq.minimum_time = true;
  return seq;
}

/// Base problem for pusher mode schedules: one face per mode, no running cost.
inline ValidatedProblem pusher_modes_base(const ExampleOptions& opt, std::vector<PusherFace> faces,
                                          std::size_t num_elements) {
  PusherScenario sc;
  sc.goal = {0.0, 0.0, std::numbers::pi};
  sc.faces = std::move(faces);
  if (opt.goal) sc.goal = *opt.goal;
  if (opt.mu_p) sc.params.mu_p = *opt.mu_p;
  if (opt.f_n_max) sc.params.f_n_max = *opt.f_n_max;
  sc.num_elements = num_elements;
  ProblemDefinition def = pusher_definition(sc);
  def.stage_cost = nullptr;
  return validate_problem(std::move(def));
}

/// Mode k pushes on face k mod 4 starting from the left face.
inline ValidatedProblem pusher_modes(const ExampleOptions& opt, const ModeSequence& seq) {
  std::vector<PusherFace> faces;
  for (std::size_t m = 0; m < seq.num_modes(); ++m) faces.push_back(static_cast<PusherFace>(m % 4));
  auto out = build_mode_problem(pusher_modes_base(opt, faces, seq.num_elements()), seq);
  out.def.name = "pusher_modes";
  return out;
}

inline ValidatedProblem pusher_modes(const ExampleOptions& opt = {}) {
  const std::size_t per_mode = opt.num_elements ? std::max<std::size_t>(*opt.num_elements / 2, 1) : 20;
  return pusher_modes(opt, pusher_mode_sequence(per_mode));
}

}  // namespace mpcctraj::systems
