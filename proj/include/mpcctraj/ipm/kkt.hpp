#pragma once

// Augmented KKT system [W + Sigma + dw I, J^T; J, -dc I] with inertia
// reporting, plus first-order residuals of an NLP at a primal-dual point.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mpcctraj/nlp.hpp"

namespace mpcctraj::ipm {

struct Inertia {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t zero = 0;
};

/// Symmetric indefinite solver for the augmented system. The structure is
/// fixed at construction; values are refreshed per factorization.
class KktSolver {
 public:
  using Entry = std::pair<std::uint32_t, std::uint32_t>;

  KktSolver() = default;

  /// hess: lower-triangle entries of W in primal indices [0, n).
  /// jac: (row, col) entries of J with row in [0, m), col in [0, n).
  KktSolver(std::size_t n, std::size_t m, std::span<const Entry> hess, std::span<const Entry> jac, bool dense)
      : n_(n), m_(m), dense_(dense) {
    const auto dim = static_cast<Eigen::Index>(n + m);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(hess.size() + jac.size() + n + m);
    for (const auto& [r, c] : hess) trip.emplace_back(r, c, 0.0);
    for (const auto& [r, c] : jac) trip.emplace_back(static_cast<Eigen::Index>(n + r), c, 0.0);
    for (Eigen::Index k = 0; k < dim; ++k) trip.emplace_back(k, k, 0.0);
    mat_.resize(dim, dim);
    mat_.setFromTriplets(trip.begin(), trip.end());
    mat_.makeCompressed();
    auto pos = [&](Eigen::Index r, Eigen::Index c) {
      return static_cast<std::size_t>(&mat_.coeffRef(r, c) - mat_.valuePtr());
    };
    for (const auto& [r, c] : hess) hess_pos_.push_back(pos(r, c));
    for (const auto& [r, c] : jac) jac_pos_.push_back(pos(static_cast<Eigen::Index>(n + r), c));
    for (Eigen::Index k = 0; k < dim; ++k) diag_pos_.push_back(pos(k, k));
    if (!dense_) ldlt_.analyzePattern(mat_);
  }

  std::size_t primal_dim() const { return n_; }
  std::size_t dual_dim() const { return m_; }
  bool dense() const { return dense_; }

  /// Assembles and factorizes. Returns false on a zero pivot.
  bool factor(std::span<const double> hess_vals, std::span<const double> sigma, std::span<const double> jac_vals,
              double dw, double dc, Inertia& inertia) {
    double* v = mat_.valuePtr();
    std::fill(v, v + mat_.nonZeros(), 0.0);
    for (std::size_t k = 0; k < hess_pos_.size(); ++k) v[hess_pos_[k]] += hess_vals[k];
    for (std::size_t k = 0; k < jac_pos_.size(); ++k) v[jac_pos_[k]] += jac_vals[k];
    for (std::size_t k = 0; k < n_; ++k) v[diag_pos_[k]] += sigma[k] + dw;
    for (std::size_t k = 0; k < m_; ++k) v[diag_pos_[n_ + k]] -= dc;
    inertia = Inertia{};
    return dense_ ? factor_dense(inertia) : factor_sparse(inertia);
  }

  /// Solves with the last factorization, refining against the assembled matrix.
  void solve(std::span<const double> rhs, std::span<double> sol) const {
    const auto dim = static_cast<Eigen::Index>(n_ + m_);
    Eigen::Map<const Eigen::VectorXd> b(rhs.data(), dim);
    Eigen::VectorXd x = raw_solve(b);
    const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
    for (int it = 0; it < 3; ++it) {
      const Eigen::VectorXd r = b - multiply(x);
      if (r.lpNorm<Eigen::Infinity>() <= 1e-14 * scale) break;
      x += raw_solve(r);
    }
    std::copy(x.data(), x.data() + dim, sol.begin());
  }

  /// Full symmetric product with the last assembled matrix.
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = mat_.selfadjointView<Eigen::Lower>() * x;
    return y;
  }

 private:
  bool factor_sparse(Inertia& inertia) {
    ldlt_.factorize(mat_);
    if (ldlt_.info() != Eigen::Success) return false;
    const auto& d = ldlt_.vectorD();
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      if (!std::isfinite(d[k])) return false;
      if (d[k] > 0.0) {
        ++inertia.positive;
      } else if (d[k] < 0.0) {
        ++inertia.negative;
      } else {
        ++inertia.zero;
      }
    }
    return inertia.zero == 0;
  }

  bool factor_dense(Inertia& inertia) {
    const auto dim = static_cast<lapack_int>(n_ + m_);
    dense_mat_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (Eigen::Index c = 0; c < mat_.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(mat_, c); it; ++it) {
        // Column-major lower triangle: row >= col.
        dense_mat_[static_cast<std::size_t>(it.col()) * dim + it.row()] = it.value();
      }
    }
    ipiv_.assign(static_cast<std::size_t>(dim), 0);
    const lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', dim, dense_mat_.data(), dim, ipiv_.data());
    if (info < 0) return false;
    auto at = [&](lapack_int r, lapack_int c) { return dense_mat_[static_cast<std::size_t>(c) * dim + r]; };
    for (lapack_int k = 0; k < dim;) {
      if (ipiv_[k] > 0) {
        const double d = at(k, k);
        if (!std::isfinite(d)) return false;
        if (d > 0.0) {
          ++inertia.positive;
        } else if (d < 0.0) {
          ++inertia.negative;
        } else {
          ++inertia.zero;
        }
        k += 1;
      } else {
        const double a = at(k, k);
        const double b = at(k + 1, k);
        const double c = at(k + 1, k + 1);
        const double det = a * c - b * b;
        if (!std::isfinite(det)) return false;
        if (det < 0.0) {
          ++inertia.positive;
          ++inertia.negative;
        } else if (det > 0.0) {
          if (a + c > 0.0) {
            inertia.positive += 2;
          } else {
            inertia.negative += 2;
          }
        } else {
          inertia.zero += 1;
          if (a + c > 0.0) {
            ++inertia.positive;
          } else {
            ++inertia.negative;
          }
        }
        k += 2;
      }
    }
    return info == 0 && inertia.zero == 0;
  }

  Eigen::VectorXd raw_solve(const Eigen::VectorXd& b) const {
    if (!dense_) return ldlt_.solve(b);
    Eigen::VectorXd x = b;
    const auto dim = static_cast<lapack_int>(n_ + m_);
    LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', dim, 1, dense_mat_.data(), dim, ipiv_.data(), x.data(), dim);
    return x;
  }

  std::size_t n_ = 0;
  std::size_t m_ = 0;
  bool dense_ = false;
  Eigen::SparseMatrix<double> mat_;
  std::vector<std::size_t> hess_pos_;
  std::vector<std::size_t> jac_pos_;
  std::vector<std::size_t> diag_pos_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  std::vector<double> dense_mat_;
  std::vector<lapack_int> ipiv_;
};

struct Duals {
  std::vector<double> lambda;
  std::vector<double> z_lower;
  std::vector<double> z_upper;
};

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal, complementarity}); }
};

/// First-order residuals of min f s.t. lo <= c(x) <= hi, l <= x <= u for the
/// Lagrangian f + lambda^T c - z_L^T (x - l) - z_U^T (u - x). Fixed variables
/// are excluded from stationarity. Wrong-signed multipliers count as
/// stationarity error.
inline KktResiduals kkt_residuals(NlpEvaluator& ev, std::span<const double> x, const Duals& duals) {
  const auto& nlp = ev.nlp();
  const std::size_t n = nlp.num_vars();
  const std::size_t m = nlp.num_rows();
  require(x.size() == n && duals.lambda.size() == m && duals.z_lower.size() == n && duals.z_upper.size() == n,
          ErrorCode::DimensionMismatch, "kkt_residuals dimensions");
  std::vector<double> g(n, 0.0);
  ev.gradient(x, g);
  std::vector<double> jac(ev.jacobian_pattern().nnz());
  ev.jacobian(x, jac);
  const auto& entries = ev.jacobian_pattern().entries;
  for (std::size_t k = 0; k < entries.size(); ++k) g[entries[k].second] += jac[k] * duals.lambda[entries[k].first];
  std::vector<double> c(m);
  ev.constraints(x, c);
  const auto lo = nlp.lower();
  const auto hi = nlp.upper();
  const auto rlo = nlp.row_lower();
  const auto rhi = nlp.row_upper();

  KktResiduals res;
  for (std::size_t k = 0; k < n; ++k) {
    res.primal = std::max({res.primal, lo[k] - x[k], x[k] - hi[k]});
    if (lo[k] == hi[k]) continue;
    const double zl = std::isfinite(lo[k]) ? duals.z_lower[k] : 0.0;
    const double zu = std::isfinite(hi[k]) ? duals.z_upper[k] : 0.0;
    res.stationarity = std::max({res.stationarity, std::abs(g[k] - zl + zu), -zl, -zu});
    if (std::isfinite(lo[k])) res.complementarity = std::max(res.complementarity, std::abs(zl * (x[k] - lo[k])));
    if (std::isfinite(hi[k])) res.complementarity = std::max(res.complementarity, std::abs(zu * (hi[k] - x[k])));
  }
  for (std::size_t r = 0; r < m; ++r) {
    res.primal = std::max({res.primal, rlo[r] - c[r], c[r] - rhi[r]});
    if (rlo[r] == rhi[r]) continue;
    const double up = std::max(duals.lambda[r], 0.0);
    const double dn = std::max(-duals.lambda[r], 0.0);
    if (!std::isfinite(rhi[r])) res.stationarity = std::max(res.stationarity, up);
    if (!std::isfinite(rlo[r])) res.stationarity = std::max(res.stationarity, dn);
    if (std::isfinite(rhi[r])) res.complementarity = std::max(res.complementarity, up * (rhi[r] - c[r]));
    if (std::isfinite(rlo[r])) res.complementarity = std::max(res.complementarity, dn * (c[r] - rlo[r]));
  }
  return res;
}

inline KktResiduals kkt_residuals(const NlpInstance& nlp, std::span<const double> x, const Duals& duals) {
  NlpEvaluator ev(nlp);
  return kkt_residuals(ev, x, duals);
}

}  // namespace mpcctraj::ipm
