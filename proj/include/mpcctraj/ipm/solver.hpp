#pragma once

// Primal-dual log-barrier interior-point method with a monotone barrier
// schedule, inertia-corrected Newton steps, fraction-to-the-boundary and an
// l1 merit backtracking line search with second-order correction.
//
// Internally every inequality row lo <= c(x) <= hi becomes c(x) - s = 0 with a
// bounded slack s, and fixed variables are removed.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpcctraj/error.hpp"
#include "mpcctraj/ipm/kkt.hpp"
#include "mpcctraj/mpcc.hpp"
#include "mpcctraj/nlp.hpp"

namespace mpcctraj::ipm {

enum class Status { Optimal, MaxIter, InfeasibleHeuristic, LineSearchFailure, SingularKkt };

constexpr std::string_view to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "Optimal";
    case Status::MaxIter: return "MaxIter";
    case Status::InfeasibleHeuristic: return "InfeasibleHeuristic";
    case Status::LineSearchFailure: return "LineSearchFailure";
    case Status::SingularKkt: return "SingularKkt";
  }
  return "Unknown";
}

struct SolverOptions {
  double kkt_tol = 1e-8;
  std::size_t max_iter = 500;
  double mu_init = 0.1;
  double mu_shrink = 0.2;
  double mu_superlinear = 1.5;
  double barrier_tol_factor = 10.0;
  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  double fraction_to_boundary = 0.995;
  double backtrack_factor = 0.5;
  std::size_t max_backtracks = 30;
  /// Second-order correction attempts after a rejected full step; 0 disables.
  std::size_t max_soc = 4;
  double armijo = 1e-4;
  double reg_init = 1e-8;
  double reg_growth = 10.0;
  double reg_max = 1e10;
  double dual_reg = 1e-8;
  double kappa_sigma = 1e10;
  std::size_t dense_threshold = 500;
  /// Iterations without progress in primal infeasibility, at small mu,
  /// before the infeasibility heuristic fires.
  std::size_t stall_iterations = 50;
  std::function<void(const std::string&)> log;

  void check() const {
    require(kkt_tol > 0.0 && mu_init > 0.0, ErrorCode::InvalidArgument, "tolerances must be positive");
    require(mu_shrink > 0.0 && mu_shrink < 1.0, ErrorCode::InvalidArgument, "mu_shrink must be in (0, 1)");
    require(fraction_to_boundary > 0.0 && fraction_to_boundary < 1.0, ErrorCode::InvalidArgument,
            "fraction_to_boundary must be in (0, 1)");
    require(backtrack_factor > 0.0 && backtrack_factor < 1.0, ErrorCode::InvalidArgument,
            "backtrack factor must be in (0, 1)");
    require(bound_push > 0.0 && bound_frac > 0.0 && bound_frac <= 0.5, ErrorCode::InvalidArgument,
            "bound push settings");
  }
};

struct IterationRecord {
  std::size_t iter = 0;
  double mu = 0.0;
  double delta = 0.0;
  double objective = 0.0;
  double inf_pr = 0.0;
  double inf_du = 0.0;
  double compl_err = 0.0;
  double alpha_primal = 0.0;
  double alpha_dual = 0.0;
  double regularization = 0.0;
  std::size_t backtracks = 0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  /// Smallest distance of the accepted iterate to a finite bound.
  double min_bound_gap = 0.0;
};

struct Solution {
  Status status = Status::MaxIter;
  std::vector<double> x;
  std::vector<double> lambda;
  std::vector<double> z_lower;
  std::vector<double> z_upper;
  double objective = 0.0;
  KktResiduals residuals;
  std::size_t iterations = 0;
  double final_mu = 0.0;
  double final_delta = 0.0;
  double complementarity = 0.0;
  std::vector<double> mu_log;
  std::vector<IterationRecord> log;
  double solve_seconds = 0.0;

  bool optimal() const { return status == Status::Optimal; }
};

namespace detail {

inline std::string format_record(const IterationRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%4zu mu=%.3e obj=%.10e inf_pr=%.3e inf_du=%.3e compl=%.3e a_pr=%.3e a_du=%.3e reg=%.1e ls=%zu",
                r.iter, r.mu, r.objective, r.inf_pr, r.inf_du, r.compl_err, r.alpha_primal, r.alpha_dual,
                r.regularization, r.backtracks);
  return buf;
}

/// Solver state in reduced coordinates: free primal variables then slacks.
class Engine {
 public:
  Engine(const NlpInstance& nlp, const SolverOptions& opts) : nlp_(nlp), ev_(nlp), opts_(opts) { setup(); }

  Solution run() {
    const auto t_start = std::chrono::steady_clock::now();
    Solution sol;
    mu_ = opts_.mu_init;
    sync_delta();
    initialize();
    sol.mu_log.push_back(mu_);
    double best_inf_pr = kInf;
    std::size_t stall = 0;
    std::size_t iter = 0;
    for (;; ++iter) {
      evaluate_first_order();
      // Barrier parameter updates; the relaxation may follow mu.
      for (;;) {
        if (mu_ <= mu_min() || barrier_error(mu_) > opts_.barrier_tol_factor * mu_) break;
        mu_ = std::max(mu_min(), std::min(opts_.mu_shrink * mu_, std::pow(mu_, opts_.mu_superlinear)));
        sol.mu_log.push_back(mu_);
        if (sync_delta()) evaluate_first_order();
      }
      if (barrier_error(0.0) <= opts_.kkt_tol) {
        const auto res = original_residuals();
        if (res.max() <= opts_.kkt_tol) {
          sol.status = Status::Optimal;
          break;
        }
      }
      if (iter >= opts_.max_iter) {
        sol.status = Status::MaxIter;
        break;
      }
      if (mu_ <= 1e-4) {
        if (inf_pr_ < 0.99 * best_inf_pr) {
          best_inf_pr = inf_pr_;
          stall = 0;
        } else if (inf_pr_ > std::sqrt(opts_.kkt_tol) && ++stall >= opts_.stall_iterations) {
          sol.status = Status::InfeasibleHeuristic;
          break;
        }
      }

      IterationRecord rec;
      rec.iter = iter;
      rec.mu = mu_;
      rec.delta = ev_.delta();
      rec.objective = f_;
      rec.inf_pr = inf_pr_;
      rec.inf_du = inf_du_;
      rec.compl_err = compl_err(0.0);

      if (!compute_step(rec.regularization)) {
        sol.status = Status::SingularKkt;
        log_record(sol, rec);
        break;
      }
      if (!line_search(rec)) {
        sol.status = Status::LineSearchFailure;
        log_record(sol, rec);
        break;
      }
      rec.min_bound_gap = min_bound_gap();
      log_record(sol, rec);
    }
    finalize(sol, iter);
    sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sol;
  }

 private:
  double mu_min() const { return opts_.kkt_tol / 10.0; }

  void setup() {
    const std::size_t n_orig = nlp_.num_vars();
    const auto lo = nlp_.lower();
    const auto hi = nlp_.upper();
    reduced_of_.assign(n_orig, kNone);
    for (std::size_t k = 0; k < n_orig; ++k) {
      if (lo[k] == hi[k]) continue;
      reduced_of_[k] = free_.size();
      free_.push_back(k);
    }
    row_lo_ = nlp_.row_lower();
    row_hi_ = nlp_.row_upper();
    m_ = nlp_.num_rows();
    for (std::size_t r = 0; r < m_; ++r) {
      if (row_lo_[r] != row_hi_[r]) ineq_rows_.push_back(r);
    }
    n_free_ = free_.size();
    n_ = n_free_ + ineq_rows_.size();
    l_.resize(n_);
    u_.resize(n_);
    for (std::size_t k = 0; k < n_free_; ++k) {
      l_[k] = lo[free_[k]];
      u_[k] = hi[free_[k]];
    }
    for (std::size_t k = 0; k < ineq_rows_.size(); ++k) {
      l_[n_free_ + k] = row_lo_[ineq_rows_[k]];
      u_[n_free_ + k] = row_hi_[ineq_rows_[k]];
    }
    x_full_.assign(nlp_.initial().begin(), nlp_.initial().end());
    for (std::size_t k = 0; k < n_orig; ++k) {
      if (lo[k] == hi[k]) x_full_[k] = lo[k];
    }

    // Reduced Jacobian: original entries on free columns, then slack columns.
    std::vector<KktSolver::Entry> jac;
    const auto& jp = ev_.jacobian_pattern().entries;
    for (std::size_t e = 0; e < jp.size(); ++e) {
      const std::size_t col = reduced_of_[jp[e].second];
      if (col == kNone) continue;
      jac_src_.push_back(e);
      jac.emplace_back(jp[e].first, static_cast<std::uint32_t>(col));
    }
    for (std::size_t k = 0; k < ineq_rows_.size(); ++k) {
      jac.emplace_back(static_cast<std::uint32_t>(ineq_rows_[k]), static_cast<std::uint32_t>(n_free_ + k));
    }
    jac_entries_ = jac;
    std::vector<KktSolver::Entry> hess;
    const auto& hp = ev_.hessian_pattern().entries;
    for (std::size_t e = 0; e < hp.size(); ++e) {
      const std::size_t r = reduced_of_[hp[e].first];
      const std::size_t c = reduced_of_[hp[e].second];
      if (r == kNone || c == kNone) continue;
      hess_src_.push_back(e);
      hess.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c));
    }
    hess_entries_ = hess;
    kkt_.emplace(n_, m_, hess_entries_, jac_entries_, n_ < opts_.dense_threshold);
    jac_raw_.resize(jp.size());
    hess_raw_.resize(hp.size());
    jac_vals_.resize(jac_entries_.size());
    hess_vals_.resize(hess_entries_.size());
    g_orig_.resize(n_orig);
    c_.resize(m_);
  }

  /// Keeps the relaxation parameter tied to mu when requested. Returns true
  /// if it changed.
  bool sync_delta() {
    if (!nlp_.relaxation.barrier_linked) return false;
    const double d = std::max(mu_, kMinBarrierDelta);
    if (d == ev_.delta()) return false;
    ev_.set_delta(d);
    return true;
  }

  void scatter(std::span<const double> z) {
    for (std::size_t k = 0; k < n_free_; ++k) x_full_[free_[k]] = z[k];
  }

  /// Interior starting point, bound multipliers and least-squares constraint multipliers.
  void initialize() {
    z_.assign(n_, 0.0);
    for (std::size_t k = 0; k < n_free_; ++k) z_[k] = x_full_[free_[k]];
    ev_.constraints(x_full_, c_);
    for (std::size_t k = 0; k < ineq_rows_.size(); ++k) z_[n_free_ + k] = c_[ineq_rows_[k]];
    for (std::size_t k = 0; k < n_; ++k) z_[k] = push_inside(z_[k], l_[k], u_[k]);
    zl_.assign(n_, 0.0);
    zu_.assign(n_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::isfinite(l_[k])) zl_[k] = 1.0;
      if (std::isfinite(u_[k])) zu_[k] = 1.0;
    }
    lambda_.assign(m_, 0.0);
    scatter(z_);
    evaluate_first_order();
    if (m_ == 0) return;
    // [I J^T; J 0] [w; lambda] = [-(g - zl + zu); 0]
    std::vector<double> ones(n_, 1.0);
    std::vector<double> zero_h(hess_entries_.size(), 0.0);
    Inertia inertia;
    if (!kkt_->factor(zero_h, ones, jac_vals_, 0.0, opts_.dual_reg, inertia)) return;
    std::vector<double> rhs(n_ + m_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) rhs[k] = -(g_[k] - zl_[k] + zu_[k]);
    std::vector<double> sol(n_ + m_);
    kkt_->solve(rhs, sol);
    double biggest = 0.0;
    for (std::size_t r = 0; r < m_; ++r) biggest = std::max(biggest, std::abs(sol[n_ + r]));
    if (biggest <= 1e3 && std::isfinite(biggest)) {
      for (std::size_t r = 0; r < m_; ++r) lambda_[r] = sol[n_ + r];
    }
  }

  double push_inside(double v, double lo, double hi) const {
    const bool fl = std::isfinite(lo);
    const bool fu = std::isfinite(hi);
    if (fl && fu) {
      const double pl = std::min(opts_.bound_push * std::max(1.0, std::abs(lo)), opts_.bound_frac * (hi - lo));
      const double pu = std::min(opts_.bound_push * std::max(1.0, std::abs(hi)), opts_.bound_frac * (hi - lo));
      return std::clamp(v, lo + pl, hi - pu);
    }
    if (fl) return std::max(v, lo + opts_.bound_push * std::max(1.0, std::abs(lo)));
    if (fu) return std::min(v, hi - opts_.bound_push * std::max(1.0, std::abs(hi)));
    return v;
  }

  /// f, gradient, constraint residual, Jacobian and error measures at z_.
  void evaluate_first_order() {
    f_ = ev_.objective(x_full_);
    ev_.gradient(x_full_, g_orig_);
    g_.assign(n_, 0.0);
    for (std::size_t k = 0; k < n_free_; ++k) g_[k] = g_orig_[free_[k]];
    residual(z_, r_);
    ev_.jacobian(x_full_, jac_raw_);
    for (std::size_t k = 0; k < jac_src_.size(); ++k) jac_vals_[k] = jac_raw_[jac_src_[k]];
    for (std::size_t k = jac_src_.size(); k < jac_vals_.size(); ++k) jac_vals_[k] = -1.0;
    // Stationarity of the Lagrangian in reduced coordinates.
    stat_.assign(n_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) stat_[k] = g_[k] - zl_[k] + zu_[k];
    for (std::size_t e = 0; e < jac_entries_.size(); ++e) {
      stat_[jac_entries_[e].second] += jac_vals_[e] * lambda_[jac_entries_[e].first];
    }
    inf_du_ = 0.0;
    for (double v : stat_) inf_du_ = std::max(inf_du_, std::abs(v));
    inf_pr_ = 0.0;
    for (double v : r_) inf_pr_ = std::max(inf_pr_, std::abs(v));
  }

  /// Equality residual c(x) - b for equality rows and c(x) - s for the rest.
  void residual(std::span<const double> z, std::vector<double>& out) {
    scatter(z);
    ev_.constraints(x_full_, c_);
    out.resize(m_);
    for (std::size_t r = 0; r < m_; ++r) out[r] = c_[r] - row_lo_[r];
    for (std::size_t k = 0; k < ineq_rows_.size(); ++k) out[ineq_rows_[k]] = c_[ineq_rows_[k]] - z[n_free_ + k];
  }

  double compl_err(double mu) const {
    double e = 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::isfinite(l_[k])) e = std::max(e, std::abs(zl_[k] * (z_[k] - l_[k]) - mu));
      if (std::isfinite(u_[k])) e = std::max(e, std::abs(zu_[k] * (u_[k] - z_[k]) - mu));
    }
    return e;
  }

  double barrier_error(double mu) const { return std::max({inf_du_, inf_pr_, compl_err(mu)}); }

  KktResiduals original_residuals() {
    Duals d = original_duals();
    return kkt_residuals(ev_, x_full_, d);
  }

  Duals original_duals() const {
    Duals d;
    d.lambda = lambda_;
    d.z_lower.assign(nlp_.num_vars(), 0.0);
    d.z_upper.assign(nlp_.num_vars(), 0.0);
    for (std::size_t k = 0; k < n_free_; ++k) {
      d.z_lower[free_[k]] = zl_[k];
      d.z_upper[free_[k]] = zu_[k];
    }
    // Fixed variables absorb their stationarity residual in the multiplier.
    std::vector<double> g(nlp_.num_vars(), 0.0);
    for (std::size_t k = 0; k < nlp_.num_vars(); ++k) g[k] = g_orig_[k];
    const auto& jp = ev_.jacobian_pattern().entries;
    for (std::size_t e = 0; e < jp.size(); ++e) {
      if (reduced_of_[jp[e].second] == kNone) g[jp[e].second] += jac_raw_[e] * lambda_[jp[e].first];
    }
    for (std::size_t k = 0; k < nlp_.num_vars(); ++k) {
      if (reduced_of_[k] != kNone) continue;
      d.z_lower[k] = std::max(g[k], 0.0);
      d.z_upper[k] = std::max(-g[k], 0.0);
    }
    return d;
  }

  /// Newton step on the barrier KKT system with inertia correction.
  bool compute_step(double& reg_used) {
    ev_.hessian(x_full_, 1.0, lambda_, hess_raw_);
    for (std::size_t k = 0; k < hess_src_.size(); ++k) hess_vals_[k] = hess_raw_[hess_src_[k]];
    sigma_.assign(n_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::isfinite(l_[k])) sigma_[k] += zl_[k] / (z_[k] - l_[k]);
      if (std::isfinite(u_[k])) sigma_[k] += zu_[k] / (u_[k] - z_[k]);
    }
    double dw = 0.0;
    double dc = kkt_->dense() ? 0.0 : opts_.dual_reg * 1e-2;
    Inertia in;
    bool ok = kkt_->factor(hess_vals_, sigma_, jac_vals_, dw, dc, in);
    auto correct = [&] { return ok && in.positive == n_ && in.negative == m_; };
    if (!correct()) {
      if (!ok || in.zero > 0) dc = std::max(dc, opts_.dual_reg * std::pow(mu_, 0.25));
      dw = last_dw_ == 0.0 ? opts_.reg_init : std::max(opts_.reg_init, last_dw_ / 3.0);
      for (;;) {
        ok = kkt_->factor(hess_vals_, sigma_, jac_vals_, dw, dc, in);
        if (correct()) break;
        dw *= opts_.reg_growth;
        if (dw > opts_.reg_max * (1.0 + 1e-12)) return false;
      }
      last_dw_ = dw;
    }
    reg_used_ = dw;
    reg_used = dw;

    std::vector<double> rhs(n_ + m_);
    for (std::size_t k = 0; k < n_; ++k) {
      double v = stat_[k] + zl_[k] - zu_[k];  // g + J^T lambda
      if (std::isfinite(l_[k])) v -= mu_ / (z_[k] - l_[k]);
      if (std::isfinite(u_[k])) v += mu_ / (u_[k] - z_[k]);
      rhs[k] = -v;
    }
    for (std::size_t r = 0; r < m_; ++r) rhs[n_ + r] = -r_[r];
    rhs_ = rhs;
    std::vector<double> sol(n_ + m_);
    kkt_->solve(rhs, sol);
    dz_.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(n_));
    dlambda_.assign(sol.begin() + static_cast<std::ptrdiff_t>(n_), sol.end());
    dzl_.assign(n_, 0.0);
    dzu_.assign(n_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::isfinite(l_[k])) {
        const double gap = z_[k] - l_[k];
        dzl_[k] = mu_ / gap - zl_[k] - zl_[k] / gap * dz_[k];
      }
      if (std::isfinite(u_[k])) {
        const double gap = u_[k] - z_[k];
        dzu_[k] = mu_ / gap - zu_[k] + zu_[k] / gap * dz_[k];
      }
    }
    for (double v : dz_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  double max_step(std::span<const double> v, std::span<const double> dv, std::span<const double> lo,
                  std::span<const double> hi, double tau) const {
    double a = 1.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (std::isfinite(lo[k]) && dv[k] < 0.0) a = std::min(a, -tau * (v[k] - lo[k]) / dv[k]);
      if (std::isfinite(hi[k]) && dv[k] > 0.0) a = std::min(a, tau * (hi[k] - v[k]) / dv[k]);
    }
    return a;
  }

  double dual_max_step(std::span<const double> zv, std::span<const double> dzv, double tau) const {
    double a = 1.0;
    for (std::size_t k = 0; k < zv.size(); ++k) {
      if (dzv[k] < 0.0 && zv[k] > 0.0) a = std::min(a, -tau * zv[k] / dzv[k]);
    }
    return a;
  }

  double barrier_value(std::span<const double> z, double f) const {
    double phi = f;
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::isfinite(l_[k])) phi -= mu_ * std::log(z[k] - l_[k]);
      if (std::isfinite(u_[k])) phi -= mu_ * std::log(u_[k] - z[k]);
    }
    return phi;
  }

  static double l1(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  }

  bool line_search(IterationRecord& rec) {
    const double tau = std::max(opts_.fraction_to_boundary, 1.0 - mu_);
    const double alpha_max = max_step(z_, dz_, l_, u_, tau);
    const double alpha_dual = std::min(dual_max_step(zl_, dzl_, tau), dual_max_step(zu_, dzu_, tau));

    // Directional derivative of the barrier function and penalty update.
    std::vector<double> grad_phi(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      double v = g_[k];
      if (std::isfinite(l_[k])) v -= mu_ / (z_[k] - l_[k]);
      if (std::isfinite(u_[k])) v += mu_ / (u_[k] - z_[k]);
      grad_phi[k] = v;
    }
    double dphi = 0.0;
    for (std::size_t k = 0; k < n_; ++k) dphi += grad_phi[k] * dz_[k];
    // Linearized residual r + J dz.
    std::vector<double> lin(r_);
    for (std::size_t e = 0; e < jac_entries_.size(); ++e) {
      lin[jac_entries_[e].first] += jac_vals_[e] * dz_[jac_entries_[e].second];
    }
    const double r1 = l1(r_);
    const double lin1 = l1(lin);
    const double decrease = r1 - lin1;
    if (decrease > 1e-14 * std::max(1.0, r1)) {
      // dz^T (W + Sigma + dw) dz from the assembled matrix.
      Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_ + m_));
      for (std::size_t k = 0; k < n_; ++k) full[static_cast<Eigen::Index>(k)] = dz_[k];
      const Eigen::VectorXd prod = kkt_->multiply(full);
      double curv = 0.0;
      for (std::size_t k = 0; k < n_; ++k) curv += dz_[k] * prod[static_cast<Eigen::Index>(k)];
      const double rho = 0.1;
      const double needed = (dphi + 0.5 * std::max(curv, 0.0)) / ((1.0 - rho) * decrease);
      if (nu_ < needed) nu_ = needed + 1.0;
    }
    const double merit0 = barrier_value(z_, f_) + nu_ * r1;
    const double slope = dphi - nu_ * decrease;
    rec.merit_before = merit0;

    std::vector<double> trial(n_);
    std::vector<double> r_trial;
    double alpha = alpha_max;
    bool accepted = false;
    double merit1 = merit0;
    double f_trial = f_;
    const bool tiny = tiny_step();
    const double armijo_slope = opts_.armijo * std::min(slope, 0.0);
    for (std::size_t bt = 0; bt <= opts_.max_backtracks; ++bt) {
      for (std::size_t k = 0; k < n_; ++k) trial[k] = z_[k] + alpha * dz_[k];
      residual(trial, r_trial);
      f_trial = ev_.objective(x_full_);
      merit1 = barrier_value(trial, f_trial) + nu_ * l1(r_trial);
      rec.backtracks = bt;
      if (std::isfinite(merit1) && (tiny || merit1 <= merit0 + alpha * armijo_slope)) {
        accepted = true;
        break;
      }
      if (bt == 0 && l1(r_trial) >= r1 &&
          second_order_correction(alpha, tau, merit0 + alpha * armijo_slope, trial, r_trial, merit1)) {
        accepted = true;
        break;
      }
      alpha *= opts_.backtrack_factor;
    }
    if (!accepted) {
      scatter(z_);
      return false;
    }
    rec.alpha_primal = alpha;
    rec.alpha_dual = alpha_dual;
    rec.merit_after = merit1;
    z_ = trial;
    scatter(z_);
    for (std::size_t r = 0; r < m_; ++r) lambda_[r] += alpha * dlambda_[r];
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::isfinite(l_[k])) {
        const double gap = z_[k] - l_[k];
        zl_[k] = std::clamp(zl_[k] + alpha_dual * dzl_[k], mu_ / (opts_.kappa_sigma * gap),
                            opts_.kappa_sigma * mu_ / gap);
      }
      if (std::isfinite(u_[k])) {
        const double gap = u_[k] - z_[k];
        zu_[k] = std::clamp(zu_[k] + alpha_dual * dzu_[k], mu_ / (opts_.kappa_sigma * gap),
                            opts_.kappa_sigma * mu_ / gap);
      }
    }
    return true;
  }

  /// Corrects the rejected full step for constraint curvature by re-solving
  /// with c_soc = alpha c(z) + c(z + alpha dz) on the current factorization.
  /// On success dz_/dlambda_ hold the corrected step and alpha its length.
  bool second_order_correction(double& alpha, double tau, double target, std::vector<double>& trial,
                               std::vector<double>& r_trial, double& merit) {
    std::vector<double> csoc(m_);
    for (std::size_t r = 0; r < m_; ++r) csoc[r] = alpha * r_[r] + r_trial[r];
    std::vector<double> rhs(rhs_);
    std::vector<double> sol(n_ + m_);
    double prev = l1(r_trial);
    for (std::size_t q = 0; q < opts_.max_soc; ++q) {
      for (std::size_t r = 0; r < m_; ++r) rhs[n_ + r] = -csoc[r];
      kkt_->solve(rhs, sol);
      const std::span<const double> d(sol.data(), n_);
      const double a = max_step(z_, d, l_, u_, tau);
      for (std::size_t k = 0; k < n_; ++k) trial[k] = z_[k] + a * d[k];
      residual(trial, r_trial);
      const double f_trial = ev_.objective(x_full_);
      merit = barrier_value(trial, f_trial) + nu_ * l1(r_trial);
      if (std::isfinite(merit) && merit <= target) {
        dz_.assign(d.begin(), d.end());
        for (std::size_t r = 0; r < m_; ++r) dlambda_[r] = sol[n_ + r];
        alpha = a;
        return true;
      }
      const double now = l1(r_trial);
      if (now > 0.99 * prev) break;
      prev = now;
      for (std::size_t r = 0; r < m_; ++r) csoc[r] = a * csoc[r] + r_trial[r];
    }
    return false;
  }

  bool tiny_step() const {
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::abs(dz_[k]) > 10.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(z_[k]))) return false;
    }
    return true;
  }

  double min_bound_gap() const {
    double gap = kInf;
    for (std::size_t k = 0; k < n_; ++k) {
      if (std::isfinite(l_[k])) gap = std::min(gap, z_[k] - l_[k]);
      if (std::isfinite(u_[k])) gap = std::min(gap, u_[k] - z_[k]);
    }
    return gap;
  }

  void log_record(Solution& sol, const IterationRecord& rec) {
    sol.log.push_back(rec);
    if (opts_.log) opts_.log(format_record(rec));
  }

  void finalize(Solution& sol, std::size_t iter) {
    scatter(z_);
    evaluate_first_order();
    sol.iterations = iter;
    sol.x = x_full_;
    const Duals d = original_duals();
    sol.lambda = d.lambda;
    sol.z_lower = d.z_lower;
    sol.z_upper = d.z_upper;
    sol.objective = f_;
    sol.residuals = kkt_residuals(ev_, x_full_, d);
    sol.final_mu = mu_;
    sol.final_delta = ev_.delta();
    sol.complementarity = complementarity_residual(nlp_, x_full_);
  }

  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  const NlpInstance& nlp_;
  NlpEvaluator ev_;
  SolverOptions opts_;
  std::vector<std::size_t> free_;
  std::vector<std::size_t> reduced_of_;
  std::vector<std::size_t> ineq_rows_;
  std::vector<double> row_lo_, row_hi_;
  std::size_t n_free_ = 0;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<double> l_, u_;
  std::vector<double> x_full_;
  std::vector<KktSolver::Entry> jac_entries_, hess_entries_;
  std::vector<std::size_t> jac_src_, hess_src_;
  std::vector<double> jac_raw_, hess_raw_, jac_vals_, hess_vals_;
  std::optional<KktSolver> kkt_;

  std::vector<double> z_, zl_, zu_, lambda_;
  std::vector<double> g_orig_, g_, c_, r_, stat_, sigma_;
  std::vector<double> dz_, dzl_, dzu_, dlambda_;
  std::vector<double> rhs_;
  double f_ = 0.0;
  double inf_pr_ = 0.0;
  double inf_du_ = 0.0;
  double mu_ = 0.1;
  double nu_ = 1.0;
  double last_dw_ = 0.0;
  double reg_used_ = 0.0;
};

}  // namespace detail

/// Solves an NLP whose complementarities (if any) are already reformulated.
inline Solution solve(const NlpInstance& nlp, const SolverOptions& opts = {}) {
  opts.check();
  require(nlp.complementarities().empty() || nlp.relaxation.applied, ErrorCode::InvalidArgument,
          "complementarity entries must be reformulated before solving");
  detail::Engine engine(nlp, opts);
  return engine.run();
}

/// Reformulates pending complementarities with `policy`, then solves.
inline Solution solve(const NlpInstance& nlp, const RelaxationPolicy& policy, const SolverOptions& opts = {}) {
  if (nlp.complementarities().empty() || nlp.relaxation.applied) return solve(nlp, opts);
  const NlpInstance relaxed = reformulate(nlp, policy);
  return solve(relaxed, opts);
}

}  // namespace mpcctraj::ipm
