#pragma once

// Small problems and finite-difference helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <functional>
#include <span>
#include <vector>

#include "mpcctraj/collocation.hpp"
#include "mpcctraj/nlp.hpp"
#include "mpcctraj/problem.hpp"

namespace testing_support {

using namespace mpcctraj;

/// x' = -x, x(0) = 1 on [0, 1] with zero objective.
inline ProblemDefinition decay_definition(std::size_t ne, double guess = 1.0) {
  ProblemDefinition def;
  def.name = "decay";
  def.info.n_x = 1;
  def.info.tf = 1.0;
  def.info.element_widths = ProblemInfo::uniform_widths(ne, 0.0, 1.0);
  def.bounds = VariableBounds::free(def.info);
  def.x0 = {1.0};
  def.initial_guess = [guess](double) { return PointGuess{{guess}, {0.0}, {}, {}}; };
  def.dynamics = [](const DaePoint& p) { return std::vector<Var>{p.xdot[0] + p.x[0]}; };
  return def;
}

inline ValidatedProblem decay_problem(std::size_t ne, double guess = 1.0) {
  return validate_problem(decay_definition(ne, guess));
}

/// Dense central-difference Jacobian of the NLP constraints.
inline std::vector<std::vector<double>> fd_constraint_jacobian(NlpEvaluator& ev, std::vector<double> x,
                                                               double h = 1e-6) {
  const std::size_t m = ev.nlp().num_rows();
  std::vector<std::vector<double>> J(m, std::vector<double>(x.size(), 0.0));
  std::vector<double> cp(m), cm(m);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    x[k] = xk + h;
    ev.constraints(x, cp);
    x[k] = xk - h;
    ev.constraints(x, cm);
    x[k] = xk;
    for (std::size_t r = 0; r < m; ++r) J[r][k] = (cp[r] - cm[r]) / (2 * h);
  }
  return J;
}

inline std::vector<double> fd_objective_gradient(NlpEvaluator& ev, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    x[k] = xk + h;
    const double fp = ev.objective(x);
    x[k] = xk - h;
    const double fm = ev.objective(x);
    x[k] = xk;
    g[k] = (fp - fm) / (2 * h);
  }
  return g;
}

/// Dense Lagrangian Hessian by central differences of the exact Lagrangian
/// gradient w f + lambda^T c.
inline std::vector<std::vector<double>> fd_lagrangian_hessian(NlpEvaluator& ev, std::vector<double> x, double w,
                                                              std::span<const double> lambda, double h = 1e-6) {
  const std::size_t n = x.size();
  const auto& jp = ev.jacobian_pattern();
  std::vector<double> jac(jp.nnz());
  auto lag_grad = [&](const std::vector<double>& at) {
    std::vector<double> g(n, 0.0);
    ev.gradient(at, g);
    for (auto& v : g) v *= w;
    ev.jacobian(at, jac);
    for (std::size_t k = 0; k < jp.entries.size(); ++k) g[jp.entries[k].second] += jac[k] * lambda[jp.entries[k].first];
    return g;
  };
  std::vector<std::vector<double>> H(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    const double xk = x[k];
    x[k] = xk + h;
    const auto gp = lag_grad(x);
    x[k] = xk - h;
    const auto gm = lag_grad(x);
    x[k] = xk;
    for (std::size_t r = 0; r < n; ++r) H[r][k] = (gp[r] - gm[r]) / (2 * h);
  }
  return H;
}

inline VarKey free_key(std::size_t k) { return VarKey{VarClass::Free, 0, 0, static_cast<std::uint32_t>(k), 0}; }

/// min (x1 - a)^2 + (x2 - b)^2 over x >= 0 with 0 <= x1 _|_ x2 >= 0.
inline NlpInstance branch_mpcc(double a = 1.0, double b = 1.0, double x1_init = 0.5, double x2_init = 0.5) {
  NlpInstance nlp;
  nlp.add_variable(free_key(0), 0.0, kInf, x1_init);
  nlp.add_variable(free_key(1), 0.0, kInf, x2_init);
  ObjectiveTerm term;
  term.vars = {0, 1};
  term.tape = ad::record(
      [a, b](VarSpan v) { return std::vector<Var>{(v[0] - a) * (v[0] - a) + (v[1] - b) * (v[1] - b)}; },
      nlp.initial(), 1);
  nlp.add_objective(std::move(term));
  nlp.add_complementarity(ComplementarityEntry{0, 1, 0.0, 0.0, 1, 0, 0, 0, PairSource::Problem});
  return nlp;
}

/// min over free x of a scalar objective plus optional Generic constraint rows.
template <class F>
NlpInstance scalar_program(std::vector<double> lower, std::vector<double> upper, std::vector<double> init, F&& objective) {
  NlpInstance nlp;
  for (std::size_t k = 0; k < init.size(); ++k) nlp.add_variable(free_key(k), lower[k], upper[k], init[k]);
  ObjectiveTerm term;
  for (std::size_t k = 0; k < init.size(); ++k) term.vars.push_back(k);
  term.tape = ad::record([&](VarSpan v) { return std::vector<Var>{objective(v)}; }, nlp.initial(), 1);
  nlp.add_objective(std::move(term));
  return nlp;
}

template <class G>
void add_rows(NlpInstance& nlp, std::size_t rows, std::vector<double> lo, std::vector<double> hi, G&& g) {
  ConstraintBlock block;
  for (std::size_t k = 0; k < nlp.num_vars(); ++k) block.vars.push_back(k);
  block.tape = ad::record([&](VarSpan v) { return g(v); }, nlp.initial(), rows);
  block.lower = std::move(lo);
  block.upper = std::move(hi);
  nlp.add_block(std::move(block));
}

struct DerivativeReport {
  double gradient_error = 0.0;
  double jacobian_error = 0.0;
  double hessian_error = 0.0;
  /// Dense-probe nonzeros missing from the detected patterns.
  std::size_t jacobian_misses = 0;
  std::size_t hessian_misses = 0;
  std::size_t points = 0;
};

/// Scaled difference |a - b| / max(1, |a|, |b|).
inline double scaled_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Compares exact derivatives with central differences at `points` random
/// perturbations of the initial point and probes the sparsity patterns.
inline DerivativeReport check_derivatives(const NlpInstance& nlp, std::size_t points, std::uint64_t seed,
                                          double spread = 0.3) {
  NlpEvaluator ev(nlp);
  const std::size_t n = nlp.num_vars();
  const std::size_t m = nlp.num_rows();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto& jp = ev.jacobian_pattern();
  const auto& hp = ev.hessian_pattern();
  auto in_pattern = [](const ad::SparsityPattern& p, std::size_t r, std::size_t c) {
    return std::binary_search(p.entries.begin(), p.entries.end(),
                              std::pair<std::uint32_t, std::uint32_t>(static_cast<std::uint32_t>(r),
                                                                      static_cast<std::uint32_t>(c)));
  };
  DerivativeReport rep;
  for (std::size_t q = 0; q < points; ++q) {
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double x0 = nlp.initial()[k];
      x[k] = x0 + spread * std::max(1.0, std::abs(x0)) * unit(rng);
    }
    std::vector<double> lambda(m);
    for (double& l : lambda) l = unit(rng);
    const double w = 0.5 + 0.5 * std::abs(unit(rng));

    std::vector<double> g(n);
    ev.gradient(x, g);
    const auto gfd = fd_objective_gradient(ev, x);
    for (std::size_t k = 0; k < n; ++k) rep.gradient_error = std::max(rep.gradient_error, scaled_error(g[k], gfd[k]));

    std::vector<double> jv(jp.nnz());
    ev.jacobian(x, jv);
    std::vector<std::vector<double>> J(m, std::vector<double>(n, 0.0));
    for (std::size_t e = 0; e < jv.size(); ++e) J[jp.entries[e].first][jp.entries[e].second] = jv[e];
    const auto Jfd = fd_constraint_jacobian(ev, x);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        rep.jacobian_error = std::max(rep.jacobian_error, scaled_error(J[r][c], Jfd[r][c]));
        if (Jfd[r][c] != 0.0 && !in_pattern(jp, r, c)) ++rep.jacobian_misses;
      }
    }

    std::vector<double> hv(hp.nnz());
    ev.hessian(x, w, lambda, hv);
    std::vector<std::vector<double>> H(n, std::vector<double>(n, 0.0));
    for (std::size_t e = 0; e < hv.size(); ++e) {
      H[hp.entries[e].first][hp.entries[e].second] = hv[e];
      H[hp.entries[e].second][hp.entries[e].first] = hv[e];
    }
    const auto Hfd = fd_lagrangian_hessian(ev, x, w, lambda);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c <= r; ++c) {
        const double sym = 0.5 * (Hfd[r][c] + Hfd[c][r]);
        rep.hessian_error = std::max(rep.hessian_error, scaled_error(H[r][c], sym));
        if (sym != 0.0 && !in_pattern(hp, r, c)) ++rep.hessian_misses;
      }
    }
    ++rep.points;
  }
  return rep;
}

/// Relative-or-absolute closeness used by the derivative checks.
inline bool close(double a, double b, double rel, double abs_floor = 1e-6) {
  return std::abs(a - b) <= rel * std::max(1.0, std::max(std::abs(a), std::abs(b))) || std::abs(a - b) <= abs_floor;
}

}  // namespace testing_support
