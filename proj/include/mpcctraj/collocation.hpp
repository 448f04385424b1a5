#pragma once

// Orthogonal collocation on finite elements: roots, Lagrange bases, the
// transcription of a validated problem into an NlpInstance, and the
// reconstruction of continuous trajectories from a primal vector.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mpcctraj/autodiff/derivatives.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/nlp.hpp"
#include "mpcctraj/problem.hpp"

namespace mpcctraj {

struct RootScheme {
  RootKind kind = RootKind::Radau;
  std::size_t order = 1;
};

inline constexpr std::size_t kMaxCollocationOrder = 5;

namespace detail {

/// Legendre P_n and its derivative at s in [-1, 1].
inline void legendre(std::size_t n, double s, double& p, double& dp) {
  double p0 = 1.0;
  double p1 = s;
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  for (std::size_t k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * s * p1 - (k - 1.0) * p0) / static_cast<double>(k);
    p0 = p1;
    p1 = pk;
  }
  p = p1;
  // (s^2 - 1) P_n' = n (s P_n - P_{n-1}); avoid the endpoint by the closed form.
  if (std::abs(std::abs(s) - 1.0) < 1e-15) {
    const double sign = (s > 0 || n % 2 == 1) ? 1.0 : -1.0;
    dp = sign * 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);
  } else {
    dp = static_cast<double>(n) * (s * p1 - p0) / (s * s - 1.0);
  }
}

/// Roots of g on (-1, 1] by Newton with implicit deflation of the roots
/// already found. g returns value and derivative.
template <class G>
std::vector<double> deflated_newton(G&& g, std::vector<double> known, std::vector<double> guesses) {
  for (double s : guesses) {
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      double val = 0.0;
      double der = 0.0;
      g(s, val, der);
      double corr = 0.0;
      for (double r : known) corr += 1.0 / (s - r);
      const double step = val / (der - val * corr);
      s -= step;
      if (std::abs(step) < 1e-14) {
        converged = true;
        break;
      }
    }
    require(converged, ErrorCode::UnsupportedOrder, "collocation root iteration did not converge");
    known.push_back(s);
  }
  return known;
}

}  // namespace detail

/// Collocation roots r_1 < ... < r_Nc in (0, 1].
inline std::vector<double> collocation_roots(const RootScheme& scheme) {
  const std::size_t n = scheme.order;
  require(n >= 1 && n <= kMaxCollocationOrder, ErrorCode::UnsupportedOrder,
          "collocation order must be in [1, 5], got " + std::to_string(n));
  if (scheme.kind == RootKind::ExplicitEuler) {
    require(n == 1, ErrorCode::UnsupportedOrder, "explicit Euler has order 1");
    return {1.0};
  }
  std::vector<double> guesses;
  for (std::size_t k = 0; k < n; ++k) {
    guesses.push_back(-std::cos((2.0 * k + 1.0) * std::numbers::pi / (2.0 * n)));
  }
  std::vector<double> s;
  if (scheme.kind == RootKind::Legendre) {
    s = detail::deflated_newton(
        [n](double x, double& v, double& d) { detail::legendre(n, x, v, d); }, {}, guesses);
  } else {
    // Right Radau: roots of P_n - P_{n-1}, one of which is s = 1.
    guesses.pop_back();
    s = detail::deflated_newton(
        [n](double x, double& v, double& d) {
          double pn, dpn, pm, dpm;
          detail::legendre(n, x, pn, dpn);
          detail::legendre(n - 1, x, pm, dpm);
          v = pn - pm;
          d = dpn - dpm;
        },
        {1.0}, guesses);
  }
  std::vector<double> roots;
  for (double v : s) roots.push_back(0.5 * (v + 1.0));
  std::sort(roots.begin(), roots.end());
  if (scheme.kind == RootKind::Radau) roots.back() = 1.0;
  return roots;
}

enum class BasisFamily { Differential, Algebraic };

/// Lagrange bases over one element. Differential basis Omega uses nodes
/// r_0 = 0, r_1..r_Nc; algebraic basis Psi uses r_1..r_Nc.
struct CollocationBasis {
  std::vector<double> roots;
  std::vector<double> nodes;
  std::vector<double> omega_at_one;
  /// omega_prime[j - 1][k] = Omega_k'(r_j), j = 1..Nc, k = 0..Nc.
  std::vector<std::vector<double>> omega_prime;
  std::vector<double> quad_weights;

  std::size_t order() const { return roots.size(); }

  std::span<const double> family_nodes(BasisFamily fam) const {
    return fam == BasisFamily::Differential ? std::span<const double>(nodes) : std::span<const double>(roots);
  }

  double eval(BasisFamily fam, std::size_t j, double tau) const {
    const auto pts = family_nodes(fam);
    double v = 1.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k != j) v *= (tau - pts[k]) / (pts[j] - pts[k]);
    }
    return v;
  }

  double derivative(BasisFamily fam, std::size_t j, double tau) const {
    const auto pts = family_nodes(fam);
    double total = 0.0;
    for (std::size_t m = 0; m < pts.size(); ++m) {
      if (m == j) continue;
      double term = 1.0 / (pts[j] - pts[m]);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        if (k != j && k != m) term *= (tau - pts[k]) / (pts[j] - pts[k]);
      }
      total += term;
    }
    return total;
  }
};

inline double basis_eval(const CollocationBasis& basis, BasisFamily fam, std::size_t j, double tau) {
  return basis.eval(fam, j, tau);
}

inline CollocationBasis make_basis(std::vector<double> roots) {
  CollocationBasis b;
  b.roots = std::move(roots);
  b.nodes.push_back(0.0);
  b.nodes.insert(b.nodes.end(), b.roots.begin(), b.roots.end());
  const std::size_t n = b.roots.size();
  for (std::size_t j = 0; j <= n; ++j) b.omega_at_one.push_back(b.eval(BasisFamily::Differential, j, 1.0));
  b.omega_prime.assign(n, std::vector<double>(n + 1));
  for (std::size_t j = 1; j <= n; ++j) {
    for (std::size_t k = 0; k <= n; ++k) b.omega_prime[j - 1][k] = b.derivative(BasisFamily::Differential, k, b.nodes[j]);
  }
  // Exact integral over [0, 1] of each Psi_j through its monomial expansion.
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> coeff{1.0};
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) continue;
      const double scale = 1.0 / (b.roots[j] - b.roots[k]);
      std::vector<double> next(coeff.size() + 1, 0.0);
      for (std::size_t m = 0; m < coeff.size(); ++m) {
        next[m + 1] += coeff[m] * scale;
        next[m] -= coeff[m] * b.roots[k] * scale;
      }
      coeff = std::move(next);
    }
    double integral = 0.0;
    for (std::size_t m = 0; m < coeff.size(); ++m) integral += coeff[m] / static_cast<double>(m + 1);
    b.quad_weights.push_back(integral);
  }
  return b;
}

inline CollocationBasis make_basis(const RootScheme& scheme) { return make_basis(collocation_roots(scheme)); }

namespace detail {

inline VarKey key(VarClass cls, std::size_t i, std::size_t j, std::size_t c) {
  return VarKey{cls, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(c), 0};
}

inline std::vector<std::size_t> indices(const NlpInstance& nlp, VarClass cls, std::size_t i, std::size_t j,
                                        std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t c = 0; c < n; ++c) out[c] = nlp.index(key(cls, i, j, c));
  return out;
}

inline void append(std::vector<std::size_t>& dst, const std::vector<std::size_t>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

inline std::vector<double> gather_init(const NlpInstance& nlp, std::span<const std::size_t> vars) {
  std::vector<double> v(vars.size());
  for (std::size_t k = 0; k < vars.size(); ++k) v[k] = nlp.initial()[vars[k]];
  return v;
}

/// Linear rows sum_k coeff[r][k] * vars[k] recorded as a tape.
inline ad::Tape linear_tape(const std::vector<std::vector<double>>& coeff, std::span<const double> point) {
  return ad::record(
      [&](VarSpan v) {
        std::vector<Var> rows;
        for (const auto& c : coeff) {
          Var acc = 0.0;
          for (std::size_t k = 0; k < c.size(); ++k) {
            if (c[k] != 0.0) acc += c[k] * v[k];
          }
          rows.push_back(acc);
        }
        return rows;
      },
      point, coeff.size());
}

}  // namespace detail

/// Node time of point (i, j) on the problem grid.
inline double node_time(const CollocationLayout& layout, std::size_t i, double tau) {
  return layout.element_starts[i] + tau * layout.widths[i];
}

inline NlpInstance transcribe(const ValidatedProblem& problem, const RootScheme& scheme) {
  const auto& def = problem.def;
  const auto& in = def.info;
  if (!def.complementarities.empty()) {
    require(scheme.order == 1, ErrorCode::IncompatibleScheme,
            "complementarity constraints require collocation order 1");
  }
  const auto roots = collocation_roots(scheme);
  const auto basis = make_basis(roots);
  const std::size_t ne = in.num_elements();
  const std::size_t nc = scheme.order;
  const std::size_t nx = in.n_x, ny = in.n_y, nu = in.n_u, np = in.n_p;
  const bool euler = scheme.kind == RootKind::ExplicitEuler;

  NlpInstance nlp;
  auto& L = nlp.layout;
  L.present = true;
  L.n_x = nx;
  L.n_y = ny;
  L.n_u = nu;
  L.n_p = np;
  L.num_elements = ne;
  L.order = nc;
  L.kind = scheme.kind;
  L.roots = roots;
  L.widths = in.element_widths;
  L.t0 = in.t0;
  L.tf = in.tf;
  double start = in.t0;
  for (double h : in.element_widths) {
    L.element_starts.push_back(start);
    start += h;
  }

  const auto& b = def.bounds;
  for (std::size_t i = 0; i < ne; ++i) {
    for (std::size_t j = 0; j <= nc; ++j) {
      const double t = node_time(L, i, basis.nodes[j]);
      const auto g = problem.guess_at(t);
      for (std::size_t c = 0; c < nx; ++c) {
        const bool initial = i == 0 && j == 0;
        nlp.add_variable(detail::key(VarClass::X, i, j, c), initial ? def.x0[c] : b.x_lower[c],
                         initial ? def.x0[c] : b.x_upper[c], initial ? def.x0[c] : g.x[c]);
      }
    }
    for (std::size_t j = 1; j <= nc; ++j) {
      const double t = node_time(L, i, basis.nodes[j]);
      const auto g = problem.guess_at(t);
      const auto pb = problem.point_bounds(NodeContext{t, i, j});
      require(pb.y_lower.size() == ny && pb.y_upper.size() == ny && pb.u_lower.size() == nu &&
                  pb.u_upper.size() == nu,
              ErrorCode::DimensionMismatch, "node bounds size");
      for (std::size_t c = 0; c < nx; ++c) {
        nlp.add_variable(detail::key(VarClass::Xdot, i, j, c), b.xdot_lower[c], b.xdot_upper[c], g.xdot[c]);
      }
      for (std::size_t c = 0; c < ny; ++c) {
        nlp.add_variable(detail::key(VarClass::Y, i, j, c), pb.y_lower[c], pb.y_upper[c], g.y[c]);
      }
      for (std::size_t c = 0; c < nu; ++c) {
        nlp.add_variable(detail::key(VarClass::U, i, j, c), pb.u_lower[c], pb.u_upper[c], g.u[c]);
      }
    }
  }
  {
    const auto g = problem.guess_at(in.tf);
    for (std::size_t c = 0; c < nx; ++c) {
      double lo = b.x_lower[c];
      double hi = b.x_upper[c];
      if (!b.xf_lower.empty()) {
        lo = std::max(lo, b.xf_lower[c]);
        hi = std::min(hi, b.xf_upper[c]);
      }
      require(lo <= hi, ErrorCode::InvalidArgument, "final-state bounds are empty");
      nlp.add_variable(detail::key(VarClass::Xf, 0, 0, c), lo, hi, g.x[c]);
    }
  }
  for (std::size_t c = 0; c < np; ++c) {
    nlp.add_variable(detail::key(VarClass::P, 0, 0, c), b.p_lower[c], b.p_upper[c], def.p_guess[c]);
  }

  const auto p_idx = detail::indices(nlp, VarClass::P, 0, 0, np);
  const std::size_t rows = problem.residual_rows;
  for (std::size_t i = 0; i < ne; ++i) {
    const double h = in.element_widths[i];
    for (std::size_t j = 1; j <= nc; ++j) {
      const NodeContext ctx{node_time(L, i, basis.nodes[j]), i, j};
      const auto xd = detail::indices(nlp, VarClass::Xdot, i, j, nx);
      const auto xs = detail::indices(nlp, VarClass::X, i, euler ? 0 : j, nx);
      const auto ys = detail::indices(nlp, VarClass::Y, i, j, ny);
      const auto us = detail::indices(nlp, VarClass::U, i, j, nu);
      std::vector<std::size_t> vars;
      detail::append(vars, xd);
      detail::append(vars, xs);
      detail::append(vars, ys);
      detail::append(vars, us);
      detail::append(vars, p_idx);
      const auto point = detail::gather_init(nlp, vars);
      auto split = [&](VarSpan v) {
        return DaePoint{v.subspan(0, nx), v.subspan(nx, nx), v.subspan(2 * nx, ny), v.subspan(2 * nx + ny, nu),
                        v.subspan(2 * nx + ny + nu, np), ctx};
      };

      ConstraintBlock dyn;
      dyn.kind = BlockKind::Dynamics;
      dyn.element = i;
      dyn.node = j;
      dyn.vars = vars;
      dyn.tape = ad::record([&](VarSpan v) { return def.dynamics(split(v)); }, point, rows);
      dyn.lower.assign(rows, 0.0);
      dyn.upper.assign(rows, 0.0);
      nlp.add_block(std::move(dyn));

      if (def.stage_cost) {
        ObjectiveTerm term;
        term.kind = TermKind::Stage;
        term.vars = vars;
        term.weight = h * basis.quad_weights[j - 1];
        term.tape = ad::record([&](VarSpan v) { return std::vector<Var>{def.stage_cost(split(v))}; }, point, 1);
        nlp.add_objective(std::move(term));
      }

      // h * xdot_ij - sum_k Omega_k'(r_j) x_ik = 0
      ConstraintBlock der;
      der.kind = BlockKind::Derivative;
      der.element = i;
      der.node = j;
      detail::append(der.vars, xd);
      for (std::size_t k = 0; k <= nc; ++k) detail::append(der.vars, detail::indices(nlp, VarClass::X, i, k, nx));
      std::vector<std::vector<double>> coeff(nx, std::vector<double>(der.vars.size(), 0.0));
      for (std::size_t c = 0; c < nx; ++c) {
        coeff[c][c] = h;
        for (std::size_t k = 0; k <= nc; ++k) coeff[c][nx + k * nx + c] = -basis.omega_prime[j - 1][k];
      }
      der.tape = detail::linear_tape(coeff, detail::gather_init(nlp, der.vars));
      der.lower.assign(nx, 0.0);
      der.upper.assign(nx, 0.0);
      nlp.add_block(std::move(der));
    }

    // next - sum_j Omega_j(1) x_ij = 0, into the next element or x_f.
    ConstraintBlock cont;
    const bool last = i + 1 == ne;
    cont.kind = last ? BlockKind::FinalState : BlockKind::Continuity;
    cont.element = i;
    detail::append(cont.vars, last ? detail::indices(nlp, VarClass::Xf, 0, 0, nx)
                                   : detail::indices(nlp, VarClass::X, i + 1, 0, nx));
    for (std::size_t k = 0; k <= nc; ++k) detail::append(cont.vars, detail::indices(nlp, VarClass::X, i, k, nx));
    std::vector<std::vector<double>> coeff(nx, std::vector<double>(cont.vars.size(), 0.0));
    for (std::size_t c = 0; c < nx; ++c) {
      coeff[c][c] = 1.0;
      for (std::size_t k = 0; k <= nc; ++k) coeff[c][nx + k * nx + c] = -basis.omega_at_one[k];
    }
    cont.tape = detail::linear_tape(coeff, detail::gather_init(nlp, cont.vars));
    cont.lower.assign(nx, 0.0);
    cont.upper.assign(nx, 0.0);
    nlp.add_block(std::move(cont));
  }

  if (def.mayer_cost) {
    ObjectiveTerm term;
    term.kind = TermKind::Mayer;
    detail::append(term.vars, detail::indices(nlp, VarClass::Xf, 0, 0, nx));
    detail::append(term.vars, p_idx);
    term.tape = ad::record(
        [&](VarSpan v) { return std::vector<Var>{def.mayer_cost(v.subspan(0, nx), v.subspan(nx, np))}; },
        detail::gather_init(nlp, term.vars), 1);
    nlp.add_objective(std::move(term));
  }

  for (std::size_t i = 0; i < ne; ++i) {
    for (std::size_t j = 1; j <= nc; ++j) {
      for (std::size_t l = 0; l < def.complementarities.size(); ++l) {
        const auto& pair = def.complementarities[l];
        ComplementarityEntry e;
        e.var1 = nlp.index(detail::key(VarClass::Y, i, j, pair.sigma1));
        e.var2 = nlp.index(detail::key(VarClass::Y, i, j, pair.sigma2));
        e.bound1 = pair_bound(b, pair.sigma1, pair.side1);
        e.bound2 = pair_bound(b, pair.sigma2, pair.side2);
        e.alpha = pair.alpha;
        e.element = i;
        e.node = j;
        e.pair = l;
        nlp.add_complementarity(e);
      }
    }
  }
  return nlp;
}

/// Closed-form variable count of a transcription.
inline std::size_t expected_num_vars(const ProblemInfo& in, std::size_t order) {
  return in.num_elements() * (in.n_x * (order + 1) + (in.n_x + in.n_y + in.n_u) * order) + in.n_x + in.n_p;
}

struct Sample {
  double t = 0.0;
  std::size_t element = 0;
  double tau = 0.0;
  std::vector<double> x;
  std::vector<double> xdot;
  std::vector<double> y;
  std::vector<double> u;
};

struct Trajectory {
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  std::size_t n_u = 0;
  std::vector<Sample> samples;
  std::vector<double> element_starts;
};

/// Evaluates the element polynomials of element i at local time tau.
inline Sample sample_at(const NlpInstance& nlp, std::span<const double> primal, std::size_t i, double tau) {
  const auto& L = nlp.layout;
  require(L.present, ErrorCode::InvalidArgument, "NLP has no collocation layout");
  require(primal.size() == nlp.num_vars(), ErrorCode::LengthMismatch, "primal length must equal num_vars");
  require(i < L.num_elements, ErrorCode::InvalidArgument, "element index out of range");
  const auto basis = make_basis(L.roots);
  const std::size_t nc = L.order;
  Sample s;
  s.element = i;
  s.tau = tau;
  s.t = node_time(L, i, tau);
  s.x.assign(L.n_x, 0.0);
  s.xdot.assign(L.n_x, 0.0);
  s.y.assign(L.n_y, 0.0);
  s.u.assign(L.n_u, 0.0);
  for (std::size_t k = 0; k <= nc; ++k) {
    const double w = basis.eval(BasisFamily::Differential, k, tau);
    const double dw = basis.derivative(BasisFamily::Differential, k, tau) / L.widths[i];
    for (std::size_t c = 0; c < L.n_x; ++c) {
      const double v = primal[nlp.index(detail::key(VarClass::X, i, k, c))];
      s.x[c] += w * v;
      s.xdot[c] += dw * v;
    }
  }
  for (std::size_t j = 1; j <= nc; ++j) {
    const double w = basis.eval(BasisFamily::Algebraic, j - 1, tau);
    for (std::size_t c = 0; c < L.n_y; ++c) s.y[c] += w * primal[nlp.index(detail::key(VarClass::Y, i, j, c))];
    for (std::size_t c = 0; c < L.n_u; ++c) s.u[c] += w * primal[nlp.index(detail::key(VarClass::U, i, j, c))];
  }
  return s;
}

/// Samples every element at tau = k / samples_per_element, k < samples_per_element,
/// plus the end of the horizon.
inline Trajectory extract_trajectory(const NlpInstance& nlp, std::span<const double> primal,
                                     std::size_t samples_per_element) {
  require(primal.size() == nlp.num_vars(), ErrorCode::LengthMismatch, "primal length must equal num_vars");
  require(samples_per_element >= 1, ErrorCode::InvalidArgument, "need at least one sample per element");
  const auto& L = nlp.layout;
  Trajectory traj;
  traj.n_x = L.n_x;
  traj.n_y = L.n_y;
  traj.n_u = L.n_u;
  traj.element_starts = L.element_starts;
  for (std::size_t i = 0; i < L.num_elements; ++i) {
    for (std::size_t k = 0; k < samples_per_element; ++k) {
      traj.samples.push_back(
          sample_at(nlp, primal, i, static_cast<double>(k) / static_cast<double>(samples_per_element)));
    }
  }
  Sample last = sample_at(nlp, primal, L.num_elements - 1, 1.0);
  last.t = L.tf;
  traj.samples.push_back(std::move(last));
  return traj;
}

}  // namespace mpcctraj
