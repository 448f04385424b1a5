#pragma once

// User-facing description of a DAE optimal-control problem: dimensions, grid,
// bounds, residual and cost callbacks on AD variables, complementarity pairs
// and polytope objects.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mpcctraj/autodiff/derivatives.hpp"
#include "mpcctraj/autodiff/tape.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/nlp.hpp"

namespace mpcctraj {

using ad::Var;
using VarSpan = std::span<const Var>;

struct ProblemInfo {
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  std::size_t n_u = 0;
  std::size_t n_p = 0;
  std::vector<double> element_widths;
  double t0 = 0.0;
  double tf = 1.0;

  std::size_t num_elements() const { return element_widths.size(); }

  static std::vector<double> uniform_widths(std::size_t n_e, double t0, double tf) {
    require(n_e >= 1, ErrorCode::BadGrid, "at least one finite element is required");
    return std::vector<double>(n_e, (tf - t0) / static_cast<double>(n_e));
  }
};

struct VariableBounds {
  std::vector<double> x_lower, x_upper;
  std::vector<double> xdot_lower, xdot_upper;
  std::vector<double> y_lower, y_upper;
  std::vector<double> u_lower, u_upper;
  std::vector<double> p_lower, p_upper;
  /// Bounds on x(tf); empty means unbounded.
  std::vector<double> xf_lower, xf_upper;

  /// Unbounded box of the right sizes. Parameters stay empty.
  static VariableBounds free(const ProblemInfo& info) {
    VariableBounds b;
    auto fill = [](std::vector<double>& lo, std::vector<double>& hi, std::size_t n) {
      lo.assign(n, -kInf);
      hi.assign(n, kInf);
    };
    fill(b.x_lower, b.x_upper, info.n_x);
    fill(b.xdot_lower, b.xdot_upper, info.n_x);
    fill(b.y_lower, b.y_upper, info.n_y);
    fill(b.u_lower, b.u_upper, info.n_u);
    return b;
  }
};

enum class BoundSide { Lower, Upper };

/// Complementarity between y[sigma1] and y[sigma2] at the bound values named
/// by side1/side2. alpha == 0 asks validation to fill in the sign.
struct ComplementarityPair {
  std::size_t sigma1 = 0;
  std::size_t sigma2 = 0;
  BoundSide side1 = BoundSide::Lower;
  BoundSide side2 = BoundSide::Lower;
  int alpha = 0;
};

constexpr int alpha_sign(BoundSide side1, BoundSide side2) { return side1 == side2 ? 1 : -1; }

/// Position of a collocation point handed to every callback.
struct NodeContext {
  double t = 0.0;
  std::size_t element = 0;
  std::size_t node = 0;
  /// Mode index within a mode sequence; 0 outside mode problems.
  std::size_t mode = 0;
};

/// Variables at one collocation point.
struct DaePoint {
  VarSpan xdot;
  VarSpan x;
  VarSpan y;
  VarSpan u;
  VarSpan p;
  NodeContext ctx;
};

struct PointGuess {
  std::vector<double> x;
  std::vector<double> xdot;
  std::vector<double> y;
  std::vector<double> u;
};

/// Bounds on the point-local variables; a node_bounds callback may tighten
/// them per collocation point.
struct PointBounds {
  std::vector<double> y_lower, y_upper;
  std::vector<double> u_lower, u_upper;
};

using DynamicsFn = std::function<std::vector<Var>(const DaePoint&)>;
using StageCostFn = std::function<Var(const DaePoint&)>;
using MayerFn = std::function<Var(VarSpan xf, VarSpan p)>;
using GuessFn = std::function<PointGuess(double t)>;
using NodeBoundsFn = std::function<void(const NodeContext&, PointBounds&)>;
/// Vertex coordinates column by column: entry 3k + d is coordinate d of vertex k.
using VertexMapFn = std::function<std::vector<Var>(VarSpan x, VarSpan y)>;

struct PolytopeObject {
  std::string id;
  std::size_t n_v = 0;
  bool is_static = false;
  VertexMapFn vertex_map;

  /// Object with constant vertices given as (x, y, z) triples.
  static PolytopeObject fixed(std::string id, const std::vector<std::array<double, 3>>& vertices) {
    std::vector<double> flat;
    for (const auto& v : vertices) flat.insert(flat.end(), v.begin(), v.end());
    PolytopeObject obj;
    obj.id = std::move(id);
    obj.n_v = vertices.size();
    obj.is_static = true;
    obj.vertex_map = [flat](VarSpan, VarSpan) { return std::vector<Var>(flat.begin(), flat.end()); };
    return obj;
  }
};

struct SeparationSpec {
  std::size_t i = 0;
  std::size_t j = 1;
  double eps_ij = 1e-2;
  double eps_smooth = 1e-4;
};

struct ProblemDefinition {
  std::string name;
  ProblemInfo info;
  VariableBounds bounds;
  std::vector<double> x0;
  GuessFn initial_guess;
  std::vector<double> p_guess;
  DynamicsFn dynamics;
  StageCostFn stage_cost;
  MayerFn mayer_cost;
  NodeBoundsFn node_bounds;
  std::vector<ComplementarityPair> complementarities;
  std::vector<PolytopeObject> objects;
  /// Pairs to separate. Empty with two or more objects means every pair that
  /// has at least one moving object, with default tolerances.
  std::vector<SeparationSpec> separations;
  /// Complementarity pairs replaced by pinned bounds. They still reduce the
  /// residual row count like ordinary pairs.
  std::size_t pinned_pairs = 0;
  /// Number of modes when the problem lives on scaled mode time.
  std::size_t mode_count = 0;
};

/// A definition that passed validation, with derived sizes filled in.
struct ValidatedProblem {
  ProblemDefinition def;
  std::size_t n_c = 0;
  std::size_t residual_rows = 0;

  const ProblemInfo& info() const { return def.info; }

  /// Bounds at one collocation point after the node_bounds hook.
  PointBounds point_bounds(const NodeContext& ctx) const {
    PointBounds pb{def.bounds.y_lower, def.bounds.y_upper, def.bounds.u_lower, def.bounds.u_upper};
    if (def.node_bounds) def.node_bounds(ctx, pb);
    return pb;
  }

  PointGuess guess_at(double t) const {
    PointGuess g = def.initial_guess ? def.initial_guess(t) : PointGuess{};
    const auto& in = def.info;
    auto pad = [](std::vector<double>& v, std::size_t n, double fill) {
      if (v.size() != n) v.assign(n, fill);
    };
    if (g.x.size() != in.n_x) g.x = def.x0;
    pad(g.x, in.n_x, 0.0);
    pad(g.xdot, in.n_x, 0.0);
    pad(g.y, in.n_y, 0.0);
    pad(g.u, in.n_u, 0.0);
    return g;
  }
};

namespace detail {

inline void check_sizes(const std::vector<double>& lo, const std::vector<double>& hi, std::size_t n,
                        const char* what) {
  require(lo.size() == n && hi.size() == n, ErrorCode::DimensionMismatch, std::string(what) + " bound size");
  for (std::size_t k = 0; k < n; ++k) {
    require(!std::isnan(lo[k]) && !std::isnan(hi[k]), ErrorCode::NonFiniteValue, std::string(what) + " bound is NaN");
    require(lo[k] <= hi[k], ErrorCode::InvalidArgument, std::string(what) + " lower bound exceeds upper bound");
  }
}

inline double side_value(const VariableBounds& b, std::size_t idx, BoundSide side) {
  return side == BoundSide::Lower ? b.y_lower[idx] : b.y_upper[idx];
}

}  // namespace detail

/// Bound value nu for one side of a pair.
inline double pair_bound(const VariableBounds& b, std::size_t idx, BoundSide side) {
  return detail::side_value(b, idx, side);
}

/// Checks a definition and probes its callbacks once at the initial guess.
inline ValidatedProblem validate_problem(ProblemDefinition def) {
  const auto& in = def.info;
  require(in.num_elements() >= 1, ErrorCode::BadGrid, "at least one finite element is required");
  require(std::isfinite(in.t0) && std::isfinite(in.tf) && in.tf > in.t0, ErrorCode::BadGrid,
          "horizon must satisfy t0 < tf");
  double sum = 0.0;
  for (double h : in.element_widths) {
    require(std::isfinite(h) && h > 0.0, ErrorCode::BadGrid, "element widths must be positive");
    sum += h;
  }
  const double horizon = in.tf - in.t0;
  require(std::abs(sum - horizon) <= 1e-12 * std::max(1.0, std::abs(horizon)), ErrorCode::BadGrid,
          "element widths must sum to tf - t0");

  auto& b = def.bounds;
  if (b.xdot_lower.empty() && b.xdot_upper.empty()) {
    b.xdot_lower.assign(in.n_x, -kInf);
    b.xdot_upper.assign(in.n_x, kInf);
  }
  detail::check_sizes(b.x_lower, b.x_upper, in.n_x, "x");
  detail::check_sizes(b.xdot_lower, b.xdot_upper, in.n_x, "xdot");
  detail::check_sizes(b.y_lower, b.y_upper, in.n_y, "y");
  detail::check_sizes(b.u_lower, b.u_upper, in.n_u, "u");
  if (!b.xf_lower.empty() || !b.xf_upper.empty()) detail::check_sizes(b.xf_lower, b.xf_upper, in.n_x, "x(tf)");
  if (in.n_p > 0) {
    require(b.p_lower.size() == in.n_p && b.p_upper.size() == in.n_p && def.p_guess.size() == in.n_p,
            ErrorCode::MissingParamData, "parameters need bounds and an initial guess");
    detail::check_sizes(b.p_lower, b.p_upper, in.n_p, "p");
  } else {
    require(b.p_lower.empty() && b.p_upper.empty() && def.p_guess.empty(), ErrorCode::DimensionMismatch,
            "parameter data given with n_p = 0");
  }
  require(def.x0.size() == in.n_x, ErrorCode::DimensionMismatch, "initial state size");
  require(static_cast<bool>(def.dynamics), ErrorCode::InvalidArgument, "dynamics callback is required");

  const std::size_t n_c = def.complementarities.size();
  require(n_c <= in.n_y, ErrorCode::BadComplementarity, "more complementarity pairs than algebraic variables");
  for (auto& pair : def.complementarities) {
    require(pair.sigma1 < in.n_y && pair.sigma2 < in.n_y, ErrorCode::BadComplementarity,
            "complementarity index out of range");
    require(pair.sigma1 != pair.sigma2, ErrorCode::BadComplementarity, "complementarity indices must differ");
    require(std::isfinite(detail::side_value(b, pair.sigma1, pair.side1)) &&
                std::isfinite(detail::side_value(b, pair.sigma2, pair.side2)),
            ErrorCode::BadComplementarity, "complementarity side refers to an infinite bound");
    const int expected = alpha_sign(pair.side1, pair.side2);
    require(pair.alpha == 0 || pair.alpha == expected, ErrorCode::BadComplementarity,
            "alpha sign inconsistent with bound sides");
    pair.alpha = expected;
  }
  require(n_c + def.pinned_pairs <= in.n_y, ErrorCode::BadComplementarity,
          "more pinned and complementarity pairs than algebraic variables");
  const std::size_t rows = in.n_x + in.n_y - n_c - def.pinned_pairs;

  for (const auto& s : def.separations) {
    require(s.i < s.j && s.j < def.objects.size(), ErrorCode::InvalidArgument, "separation pair index");
    require(s.eps_ij > 0.0 && s.eps_smooth > 0.0, ErrorCode::InvalidArgument, "separation tolerances must be positive");
  }

  ValidatedProblem vp{std::move(def), n_c, rows};
  const auto& d = vp.def;
  const NodeContext ctx{in.t0, 0, 1};
  const PointGuess g = vp.guess_at(in.t0);
  const std::vector<double> p_values = d.p_guess;

  // Flattened callback for probing: inputs are (xdot, x, y, u, p).
  const std::size_t nx = in.n_x, ny = in.n_y, nu = in.n_u, np = in.n_p;
  std::vector<double> point;
  point.insert(point.end(), g.xdot.begin(), g.xdot.end());
  point.insert(point.end(), g.x.begin(), g.x.end());
  point.insert(point.end(), g.y.begin(), g.y.end());
  point.insert(point.end(), g.u.begin(), g.u.end());
  point.insert(point.end(), p_values.begin(), p_values.end());
  auto split = [=](VarSpan v) {
    return DaePoint{v.subspan(0, nx), v.subspan(nx, nx), v.subspan(2 * nx, ny), v.subspan(2 * nx + ny, nu),
                    v.subspan(2 * nx + ny + nu, np), ctx};
  };
  auto dyn = [&](VarSpan v) { return d.dynamics(split(v)); };
  const auto dyn_values = ad::evaluate_direct(dyn, point);
  require(dyn_values.size() == rows, ErrorCode::DimensionMismatch,
          "dynamics residual has " + std::to_string(dyn_values.size()) + " rows, expected " + std::to_string(rows));
  ad::detail::check_finite(dyn_values, "dynamics residual at the initial guess");
  (void)ad::record_checked(dyn, point, rows);
  if (d.stage_cost) {
    auto cost = [&](VarSpan v) { return std::vector<Var>{d.stage_cost(split(v))}; };
    ad::detail::check_finite(ad::evaluate_direct(cost, point), "stage cost at the initial guess");
    (void)ad::record_checked(cost, point, 1);
  }
  if (d.mayer_cost) {
    std::vector<double> xf_point(g.x);
    xf_point.insert(xf_point.end(), p_values.begin(), p_values.end());
    auto mayer = [&](VarSpan v) { return std::vector<Var>{d.mayer_cost(v.subspan(0, nx), v.subspan(nx, np))}; };
    ad::detail::check_finite(ad::evaluate_direct(mayer, xf_point), "terminal cost at the initial guess");
    (void)ad::record_checked(mayer, xf_point, 1);
  }
  for (const auto& obj : d.objects) {
    require(obj.n_v >= 1 && static_cast<bool>(obj.vertex_map), ErrorCode::BadVertexMatrix,
            "object needs at least one vertex and a vertex map");
  }
  return vp;
}

/// Re-validation of an already validated problem yields the same structure.
inline ValidatedProblem validate_problem(const ValidatedProblem& vp) { return validate_problem(vp.def); }

/// Compares the plain-data parts of two validated problems.
inline bool same_structure(const ValidatedProblem& a, const ValidatedProblem& b) {
  auto pairs_equal = [](const ComplementarityPair& p, const ComplementarityPair& q) {
    return p.sigma1 == q.sigma1 && p.sigma2 == q.sigma2 && p.side1 == q.side1 && p.side2 == q.side2 &&
           p.alpha == q.alpha;
  };
  const auto& ia = a.def.info;
  const auto& ib = b.def.info;
  const auto& ba = a.def.bounds;
  const auto& bb = b.def.bounds;
  bool eq = ia.n_x == ib.n_x && ia.n_y == ib.n_y && ia.n_u == ib.n_u && ia.n_p == ib.n_p &&
            ia.element_widths == ib.element_widths && ia.t0 == ib.t0 && ia.tf == ib.tf && a.n_c == b.n_c &&
            a.residual_rows == b.residual_rows && a.def.x0 == b.def.x0 && a.def.p_guess == b.def.p_guess &&
            ba.x_lower == bb.x_lower && ba.x_upper == bb.x_upper && ba.xdot_lower == bb.xdot_lower &&
            ba.xdot_upper == bb.xdot_upper && ba.y_lower == bb.y_lower && ba.y_upper == bb.y_upper &&
            ba.u_lower == bb.u_lower && ba.u_upper == bb.u_upper && ba.p_lower == bb.p_lower &&
            ba.p_upper == bb.p_upper && ba.xf_lower == bb.xf_lower && ba.xf_upper == bb.xf_upper &&
            a.def.complementarities.size() == b.def.complementarities.size() &&
            a.def.objects.size() == b.def.objects.size();
  for (std::size_t k = 0; eq && k < a.def.complementarities.size(); ++k) {
    eq = pairs_equal(a.def.complementarities[k], b.def.complementarities[k]);
  }
  return eq;
}

}  // namespace mpcctraj
