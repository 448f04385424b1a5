#pragma once

// Pairwise polytope separation. Each pair of objects gets convex weights for
// its closest points together with the stationarity conditions of the
// distance QP, and a smoothed minimum-distance inequality.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mpcctraj/autodiff/derivatives.hpp"
#include "mpcctraj/collocation.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/nlp.hpp"
#include "mpcctraj/problem.hpp"

namespace mpcctraj {

using Point3 = std::array<double, 3>;
using VertexMatrix = std::vector<Point3>;

/// Closest-point weights and multipliers of one pair at one time point.
struct PairVariables {
  std::vector<double> alpha_i;
  std::vector<double> alpha_j;
  double beta_i = 0.0;
  double beta_j = 0.0;
  std::vector<double> nu_i;
  std::vector<double> nu_j;
};

template <class T>
T smoothed_distance(std::span<const T> p_i, std::span<const T> p_j, double eps) {
  using std::sqrt;
  T sq = T(eps * eps);
  for (std::size_t d = 0; d < 3; ++d) {
    const T diff = p_i[d] - p_j[d];
    sq = sq + diff * diff;
  }
  return sqrt(sq);
}

inline double smoothed_distance(const Point3& p_i, const Point3& p_j, double eps) {
  return smoothed_distance<double>(std::span<const double>(p_i), std::span<const double>(p_j), eps);
}

namespace detail {

/// V alpha for a flat 3 x n_v column-major vertex list.
template <class T, class W>
std::array<T, 3> combine(std::span<const T> v, std::span<const W> alpha) {
  std::array<T, 3> p{T(0.0), T(0.0), T(0.0)};
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    for (std::size_t d = 0; d < 3; ++d) p[d] = p[d] + v[3 * k + d] * alpha[k];
  }
  return p;
}

/// Stationarity rows for both objects followed by the two simplex rows.
template <class T>
std::vector<T> pair_rows(std::span<const T> vi, std::span<const T> vj, std::span<const T> ai, std::span<const T> aj,
                         T bi, T bj, std::span<const T> ni, std::span<const T> nj) {
  const auto pi = combine<T, T>(vi, ai);
  const auto pj = combine<T, T>(vj, aj);
  std::array<T, 3> delta;
  for (std::size_t d = 0; d < 3; ++d) delta[d] = pi[d] - pj[d];
  std::vector<T> rows;
  rows.reserve(ai.size() + aj.size() + 2);
  for (std::size_t k = 0; k < ai.size(); ++k) {
    T dot = vi[3 * k] * delta[0] + vi[3 * k + 1] * delta[1] + vi[3 * k + 2] * delta[2];
    rows.push_back(dot + bi - ni[k]);
  }
  for (std::size_t k = 0; k < aj.size(); ++k) {
    T dot = vj[3 * k] * delta[0] + vj[3 * k + 1] * delta[1] + vj[3 * k + 2] * delta[2];
    rows.push_back(bj - dot - nj[k]);
  }
  T si = T(-1.0);
  for (const auto& a : ai) si = si + a;
  T sj = T(-1.0);
  for (const auto& a : aj) sj = sj + a;
  rows.push_back(si);
  rows.push_back(sj);
  return rows;
}

inline std::vector<double> flatten(const VertexMatrix& v) {
  std::vector<double> flat;
  for (const auto& p : v) flat.insert(flat.end(), p.begin(), p.end());
  return flat;
}

}  // namespace detail

/// Residuals of the pair stationarity system: n_vi rows for object i, n_vj
/// rows for object j, then the two simplex rows 1^T alpha - 1.
inline std::vector<double> stationarity_residual(const VertexMatrix& v_i, const VertexMatrix& v_j,
                                                 const PairVariables& pv) {
  require(pv.alpha_i.size() == v_i.size() && pv.nu_i.size() == v_i.size() && pv.alpha_j.size() == v_j.size() &&
              pv.nu_j.size() == v_j.size(),
          ErrorCode::DimensionMismatch, "pair variable sizes");
  const auto fi = detail::flatten(v_i);
  const auto fj = detail::flatten(v_j);
  return detail::pair_rows<double>(fi, fj, pv.alpha_i, pv.alpha_j, pv.beta_i, pv.beta_j, pv.nu_i, pv.nu_j);
}

struct OracleResult {
  double distance = 0.0;
  std::vector<double> alpha_i;
  std::vector<double> alpha_j;
};

namespace detail {

using Vec3 = std::array<double, 3>;

inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// Projection of the origin onto the affine hull of pts (1 to 3 points).
/// Returns false for degenerate sets or when the foot has a negative weight.
inline bool project_origin(std::span<const Vec3> pts, std::vector<double>& w, double& dist) {
  const std::size_t k = pts.size();
  w.assign(k, 0.0);
  if (k == 1) {
    w[0] = 1.0;
    dist = std::sqrt(dot(pts[0], pts[0]));
    return true;
  }
  // Minimize |p0 + sum_m t_m (p_m - p0)|^2 over t.
  std::array<Vec3, 2> e{};
  for (std::size_t m = 1; m < k; ++m) e[m - 1] = sub(pts[m], pts[0]);
  std::array<double, 2> t{};
  if (k == 2) {
    const double g = dot(e[0], e[0]);
    if (g <= 1e-24) return false;
    t[0] = -dot(pts[0], e[0]) / g;
  } else {
    const double a = dot(e[0], e[0]);
    const double b = dot(e[0], e[1]);
    const double c = dot(e[1], e[1]);
    const double det = a * c - b * b;
    if (det <= 1e-20 * std::max(1.0, a * c)) return false;
    const double r0 = -dot(pts[0], e[0]);
    const double r1 = -dot(pts[0], e[1]);
    t[0] = (c * r0 - b * r1) / det;
    t[1] = (a * r1 - b * r0) / det;
  }
  double w0 = 1.0;
  for (std::size_t m = 1; m < k; ++m) {
    w[m] = t[m - 1];
    w0 -= t[m - 1];
  }
  w[0] = w0;
  constexpr double kSlack = -1e-12;
  for (double v : w) {
    if (v < kSlack) return false;
  }
  Vec3 foot = pts[0];
  for (std::size_t m = 1; m < k; ++m) {
    for (std::size_t d = 0; d < 3; ++d) foot[d] += t[m - 1] * e[m - 1][d];
  }
  dist = std::sqrt(dot(foot, foot));
  return true;
}

/// Barycentric weights of the origin in a tetrahedron; false if outside or flat.
inline bool origin_in_tetrahedron(std::span<const Vec3> p, std::vector<double>& w) {
  const Vec3 a = sub(p[1], p[0]);
  const Vec3 b = sub(p[2], p[0]);
  const Vec3 c = sub(p[3], p[0]);
  const double vol = dot(a, cross(b, c));
  if (std::abs(vol) <= 1e-18) return false;
  const Vec3 q = {-p[0][0], -p[0][1], -p[0][2]};
  const double w1 = dot(q, cross(b, c)) / vol;
  const double w2 = dot(a, cross(q, c)) / vol;
  const double w3 = dot(a, cross(b, q)) / vol;
  const double w0 = 1.0 - w1 - w2 - w3;
  w = {w0, w1, w2, w3};
  return std::all_of(w.begin(), w.end(), [](double v) { return v >= -1e-12; });
}

}  // namespace detail

/// Exact minimum distance between two static polytopes by exhaustive search
/// over simplices of the Minkowski difference: every vertex, edge and
/// triangle for the closest boundary point, and every tetrahedron for
/// containment of the origin. Also returns closest-point weights.
inline OracleResult min_distance_oracle(const VertexMatrix& v_i, const VertexMatrix& v_j) {
  require(!v_i.empty() && !v_j.empty(), ErrorCode::BadVertexMatrix, "polytopes need vertices");
  std::vector<detail::Vec3> diff;
  std::vector<std::pair<std::size_t, std::size_t>> origin;
  for (std::size_t a = 0; a < v_i.size(); ++a) {
    for (std::size_t b = 0; b < v_j.size(); ++b) {
      diff.push_back(detail::sub(v_i[a], v_j[b]));
      origin.emplace_back(a, b);
    }
  }
  const std::size_t n = diff.size();
  OracleResult best;
  best.distance = kInf;
  std::vector<std::size_t> best_idx;
  std::vector<double> best_w;
  std::vector<double> w;
  auto consider = [&](std::initializer_list<std::size_t> idx) {
    std::vector<detail::Vec3> pts;
    for (std::size_t k : idx) pts.push_back(diff[k]);
    double d = 0.0;
    if (detail::project_origin(pts, w, d) && d < best.distance) {
      best.distance = d;
      best_idx.assign(idx.begin(), idx.end());
      best_w = w;
    }
  };
  for (std::size_t a = 0; a < n; ++a) {
    consider({a});
    for (std::size_t b = a + 1; b < n; ++b) {
      consider({a, b});
      for (std::size_t c = b + 1; c < n; ++c) consider({a, b, c});
    }
  }
  if (best.distance > 0.0) {
    bool inside = false;
    for (std::size_t a = 0; a < n && !inside; ++a) {
      for (std::size_t b = a + 1; b < n && !inside; ++b) {
        for (std::size_t c = b + 1; c < n && !inside; ++c) {
          for (std::size_t d = c + 1; d < n && !inside; ++d) {
            const std::array<detail::Vec3, 4> tet{diff[a], diff[b], diff[c], diff[d]};
            if (detail::origin_in_tetrahedron(tet, w)) {
              inside = true;
              best.distance = 0.0;
              best_idx = {a, b, c, d};
              best_w = w;
            }
          }
        }
      }
    }
  }
  best.alpha_i.assign(v_i.size(), 0.0);
  best.alpha_j.assign(v_j.size(), 0.0);
  for (std::size_t k = 0; k < best_idx.size(); ++k) {
    const double wk = std::max(best_w[k], 0.0);
    best.alpha_i[origin[best_idx[k]].first] += wk;
    best.alpha_j[origin[best_idx[k]].second] += wk;
  }
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    for (double& x : v) x /= s;
  };
  normalize(best.alpha_i);
  normalize(best.alpha_j);
  return best;
}

/// Multipliers completing a closest-point pair: beta = -min(g), nu = g + beta
/// with g the stationarity gradient of each side.
inline PairVariables complete_multipliers(const VertexMatrix& v_i, const VertexMatrix& v_j,
                                          const std::vector<double>& alpha_i, const std::vector<double>& alpha_j) {
  PairVariables pv;
  pv.alpha_i = alpha_i;
  pv.alpha_j = alpha_j;
  const auto fi = detail::flatten(v_i);
  const auto fj = detail::flatten(v_j);
  const auto pi = detail::combine<double, double>(fi, alpha_i);
  const auto pj = detail::combine<double, double>(fj, alpha_j);
  const detail::Vec3 delta = detail::sub(pi, pj);
  std::vector<double> gi, gj;
  for (const auto& v : v_i) gi.push_back(detail::dot(v, delta));
  for (const auto& v : v_j) gj.push_back(-detail::dot(v, delta));
  pv.beta_i = -*std::min_element(gi.begin(), gi.end());
  pv.beta_j = -*std::min_element(gj.begin(), gj.end());
  for (double g : gi) pv.nu_i.push_back(g + pv.beta_i);
  for (double g : gj) pv.nu_j.push_back(g + pv.beta_j);
  return pv;
}

namespace detail {

inline VarKey pair_key(VarClass cls, std::size_t element, std::size_t node, std::size_t comp, std::size_t spec,
                       std::size_t side) {
  return VarKey{cls, static_cast<std::uint32_t>(element), static_cast<std::uint32_t>(node),
                static_cast<std::uint32_t>(comp), static_cast<std::uint32_t>(2 * spec + side)};
}

inline VertexMatrix evaluate_vertices(const PolytopeObject& obj, std::span<const double> x, std::span<const double> y) {
  std::vector<Var> xv(x.begin(), x.end());
  std::vector<Var> yv(y.begin(), y.end());
  const auto flat = obj.vertex_map(xv, yv);
  require(flat.size() == 3 * obj.n_v, ErrorCode::BadVertexMatrix,
          "object '" + obj.id + "' vertex map returned " + std::to_string(flat.size()) + " values, expected " +
              std::to_string(3 * obj.n_v));
  VertexMatrix v(obj.n_v);
  for (std::size_t k = 0; k < obj.n_v; ++k) {
    for (std::size_t d = 0; d < 3; ++d) {
      v[k][d] = flat[3 * k + d].value();
      require(std::isfinite(v[k][d]), ErrorCode::BadVertexMatrix, "object '" + obj.id + "' has a non-finite vertex");
    }
  }
  return v;
}

inline void check_static(const PolytopeObject& obj, std::size_t n_x, std::size_t n_y) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  std::vector<double> x1(n_x), y1(n_y), x2(n_x), y2(n_y);
  for (auto* v : {&x1, &y1, &x2, &y2}) {
    for (double& e : *v) e = dist(rng);
  }
  const auto a = evaluate_vertices(obj, x1, y1);
  const auto b = evaluate_vertices(obj, x2, y2);
  require(a == b, ErrorCode::BadVertexMatrix, "static object '" + obj.id + "' depends on the state");
}

}  // namespace detail

/// Default specs: every pair with at least one moving object.
inline std::vector<SeparationSpec> all_pairs(std::span<const PolytopeObject> objects) {
  std::vector<SeparationSpec> specs;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if (objects[i].is_static && objects[j].is_static) continue;
      specs.push_back(SeparationSpec{i, j, 1e-2, 1e-4});
    }
  }
  return specs;
}

/// Adds pair variables, stationarity and simplex rows, complementarity
/// entries and separation rows for each spec at every collocation point.
inline NlpInstance augment(const NlpInstance& nlp, std::span<const PolytopeObject> objects,
                           std::span<const SeparationSpec> specs) {
  require(objects.size() >= 2, ErrorCode::InvalidArgument, "collision avoidance needs at least two objects");
  const auto& L = nlp.layout;
  require(L.present, ErrorCode::InvalidArgument, "collision augmentation needs a collocation layout");
  for (const auto& obj : objects) {
    require(obj.n_v >= 1 && static_cast<bool>(obj.vertex_map), ErrorCode::BadVertexMatrix,
            "object needs vertices and a vertex map");
    if (obj.is_static) detail::check_static(obj, L.n_x, L.n_y);
  }
  for (const auto& s : specs) {
    require(s.i < s.j && s.j < objects.size(), ErrorCode::InvalidArgument, "separation pair index");
    require(!(objects[s.i].is_static && objects[s.j].is_static), ErrorCode::StaticPair,
            "pair of static objects '" + objects[s.i].id + "' and '" + objects[s.j].id + "'");
    require(s.eps_ij > 0.0 && s.eps_smooth > 0.0, ErrorCode::InvalidArgument, "separation tolerances");
  }

  NlpInstance out = nlp;
  const std::size_t nx = L.n_x, ny = L.n_y;
  for (std::size_t e = 0; e < L.num_elements; ++e) {
    for (std::size_t node = 1; node <= L.order; ++node) {
      const auto xs = detail::indices(out, VarClass::X, e, node, nx);
      const auto ys = detail::indices(out, VarClass::Y, e, node, ny);
      const auto x_init = detail::gather_init(out, xs);
      const auto y_init = detail::gather_init(out, ys);
      for (std::size_t s = 0; s < specs.size(); ++s) {
        const auto& spec = specs[s];
        const auto& oi = objects[spec.i];
        const auto& oj = objects[spec.j];
        const auto vi = detail::evaluate_vertices(oi, x_init, y_init);
        const auto vj = detail::evaluate_vertices(oj, x_init, y_init);
        const auto oracle = min_distance_oracle(vi, vj);
        const auto pv = complete_multipliers(vi, vj, oracle.alpha_i, oracle.alpha_j);

        std::vector<std::size_t> ai, aj, ni, nj;
        for (std::size_t k = 0; k < oi.n_v; ++k) {
          ai.push_back(out.add_variable(detail::pair_key(VarClass::Alpha, e, node, k, s, 0), 0.0, kInf, pv.alpha_i[k]));
        }
        for (std::size_t k = 0; k < oj.n_v; ++k) {
          aj.push_back(out.add_variable(detail::pair_key(VarClass::Alpha, e, node, k, s, 1), 0.0, kInf, pv.alpha_j[k]));
        }
        const std::size_t bi = out.add_variable(detail::pair_key(VarClass::Beta, e, node, 0, s, 0), -kInf, kInf, pv.beta_i);
        const std::size_t bj = out.add_variable(detail::pair_key(VarClass::Beta, e, node, 0, s, 1), -kInf, kInf, pv.beta_j);
        for (std::size_t k = 0; k < oi.n_v; ++k) {
          ni.push_back(out.add_variable(detail::pair_key(VarClass::Nu, e, node, k, s, 0), 0.0, kInf, pv.nu_i[k]));
        }
        for (std::size_t k = 0; k < oj.n_v; ++k) {
          nj.push_back(out.add_variable(detail::pair_key(VarClass::Nu, e, node, k, s, 1), 0.0, kInf, pv.nu_j[k]));
        }

        // Trajectory variables are inputs only when an object moves.
        std::vector<std::size_t> traj;
        if (!oi.is_static || !oj.is_static) {
          detail::append(traj, xs);
          detail::append(traj, ys);
        }
        const std::size_t nt = traj.size();
        const std::size_t nvi = oi.n_v, nvj = oj.n_v;
        auto vertices = [&, nt](VarSpan v, const PolytopeObject& obj) {
          if (nt == 0) return obj.vertex_map(std::vector<Var>(nx, Var(0.0)), std::vector<Var>(ny, Var(0.0)));
          return obj.vertex_map(v.subspan(0, nx), v.subspan(nx, ny));
        };

        ConstraintBlock stat;
        stat.kind = BlockKind::Stationarity;
        stat.element = e;
        stat.node = node;
        stat.vars = traj;
        detail::append(stat.vars, ai);
        detail::append(stat.vars, aj);
        stat.vars.push_back(bi);
        stat.vars.push_back(bj);
        detail::append(stat.vars, ni);
        detail::append(stat.vars, nj);
        stat.tape = ad::record(
            [&](VarSpan v) {
              const auto wi = vertices(v, oi);
              const auto wj = vertices(v, oj);
              require(wi.size() == 3 * nvi && wj.size() == 3 * nvj, ErrorCode::BadVertexMatrix, "vertex map size");
              std::size_t o = nt;
              const auto a_i = v.subspan(o, nvi);
              const auto a_j = v.subspan(o + nvi, nvj);
              const Var b_i = v[o + nvi + nvj];
              const Var b_j = v[o + nvi + nvj + 1];
              const auto n_i = v.subspan(o + nvi + nvj + 2, nvi);
              const auto n_j = v.subspan(o + 2 * nvi + nvj + 2, nvj);
              auto rows = detail::pair_rows<Var>(wi, wj, a_i, a_j, b_i, b_j, n_i, n_j);
              rows.resize(nvi + nvj);
              return rows;
            },
            detail::gather_init(out, stat.vars), nvi + nvj);
        stat.lower.assign(nvi + nvj, 0.0);
        stat.upper.assign(nvi + nvj, 0.0);
        out.add_block(std::move(stat));

        ConstraintBlock simplex;
        simplex.kind = BlockKind::Simplex;
        simplex.element = e;
        simplex.node = node;
        detail::append(simplex.vars, ai);
        detail::append(simplex.vars, aj);
        simplex.tape = ad::record(
            [&](VarSpan v) {
              Var si = -1.0;
              Var sj = -1.0;
              for (std::size_t k = 0; k < nvi; ++k) si += v[k];
              for (std::size_t k = 0; k < nvj; ++k) sj += v[nvi + k];
              return std::vector<Var>{si, sj};
            },
            detail::gather_init(out, simplex.vars), 2);
        simplex.lower = {0.0, 0.0};
        simplex.upper = {0.0, 0.0};
        out.add_block(std::move(simplex));

        const double eps = spec.eps_smooth;
        ConstraintBlock sep;
        sep.kind = BlockKind::Separation;
        sep.element = e;
        sep.node = node;
        sep.vars = traj;
        detail::append(sep.vars, ai);
        detail::append(sep.vars, aj);
        sep.tape = ad::record(
            [&](VarSpan v) {
              const auto wi = vertices(v, oi);
              const auto wj = vertices(v, oj);
              const auto pi = detail::combine<Var, Var>(wi, v.subspan(nt, nvi));
              const auto pj = detail::combine<Var, Var>(wj, v.subspan(nt + nvi, nvj));
              return std::vector<Var>{smoothed_distance<Var>(pi, pj, eps)};
            },
            detail::gather_init(out, sep.vars), 1);
        sep.lower = {std::sqrt(spec.eps_ij * spec.eps_ij + eps * eps)};
        sep.upper = {kInf};
        out.add_block(std::move(sep));

        for (std::size_t k = 0; k < nvi; ++k) {
          out.add_complementarity(ComplementarityEntry{ai[k], ni[k], 0.0, 0.0, 1, e, node, s, PairSource::Collision});
        }
        for (std::size_t k = 0; k < nvj; ++k) {
          out.add_complementarity(ComplementarityEntry{aj[k], nj[k], 0.0, 0.0, 1, e, node, s, PairSource::Collision});
        }
      }
    }
  }
  return out;
}

/// Standalone NLP of the stationarity system for two static polytopes,
/// with zero objective. Complementarities are left for reformulation.
inline NlpInstance build_pair_system(const VertexMatrix& v_i, const VertexMatrix& v_j) {
  require(!v_i.empty() && !v_j.empty(), ErrorCode::BadVertexMatrix, "polytopes need vertices");
  NlpInstance nlp;
  const std::size_t nvi = v_i.size(), nvj = v_j.size();
  std::vector<std::size_t> ai, aj, ni, nj;
  // Uniform weights as a neutral start.
  for (std::size_t k = 0; k < nvi; ++k) {
    ai.push_back(nlp.add_variable(detail::pair_key(VarClass::Alpha, 0, 0, k, 0, 0), 0.0, kInf, 1.0 / nvi));
  }
  for (std::size_t k = 0; k < nvj; ++k) {
    aj.push_back(nlp.add_variable(detail::pair_key(VarClass::Alpha, 0, 0, k, 0, 1), 0.0, kInf, 1.0 / nvj));
  }
  const std::vector<double> ui(nvi, 1.0 / nvi), uj(nvj, 1.0 / nvj);
  const auto start = complete_multipliers(v_i, v_j, ui, uj);
  nlp.add_variable(detail::pair_key(VarClass::Beta, 0, 0, 0, 0, 0), -kInf, kInf, start.beta_i);
  nlp.add_variable(detail::pair_key(VarClass::Beta, 0, 0, 0, 0, 1), -kInf, kInf, start.beta_j);
  for (std::size_t k = 0; k < nvi; ++k) {
    ni.push_back(nlp.add_variable(detail::pair_key(VarClass::Nu, 0, 0, k, 0, 0), 0.0, kInf, start.nu_i[k]));
  }
  for (std::size_t k = 0; k < nvj; ++k) {
    nj.push_back(nlp.add_variable(detail::pair_key(VarClass::Nu, 0, 0, k, 0, 1), 0.0, kInf, start.nu_j[k]));
  }
  const auto fi = detail::flatten(v_i);
  const auto fj = detail::flatten(v_j);
  ConstraintBlock block;
  block.kind = BlockKind::Stationarity;
  for (std::size_t k = 0; k < nlp.num_vars(); ++k) block.vars.push_back(k);
  block.tape = ad::record(
      [&](VarSpan v) {
        const std::vector<Var> wi(fi.begin(), fi.end());
        const std::vector<Var> wj(fj.begin(), fj.end());
        return detail::pair_rows<Var>(wi, wj, v.subspan(0, nvi), v.subspan(nvi, nvj), v[nvi + nvj], v[nvi + nvj + 1],
                                      v.subspan(nvi + nvj + 2, nvi), v.subspan(2 * nvi + nvj + 2, nvj));
      },
      nlp.initial(), nvi + nvj + 2);
  block.lower.assign(nvi + nvj + 2, 0.0);
  block.upper.assign(nvi + nvj + 2, 0.0);
  nlp.add_block(std::move(block));
  for (std::size_t k = 0; k < nvi; ++k) nlp.add_complementarity(ComplementarityEntry{ai[k], ni[k], 0, 0, 1, 0, 0, 0, PairSource::Collision});
  for (std::size_t k = 0; k < nvj; ++k) nlp.add_complementarity(ComplementarityEntry{aj[k], nj[k], 0, 0, 1, 0, 0, 0, PairSource::Collision});
  return nlp;
}

/// Reads the pair variables of a solved pair system.
inline PairVariables read_pair_variables(const NlpInstance& nlp, std::span<const double> x, std::size_t element,
                                         std::size_t node, std::size_t spec, std::size_t nvi, std::size_t nvj) {
  PairVariables pv;
  for (std::size_t k = 0; k < nvi; ++k) {
    pv.alpha_i.push_back(x[nlp.index(detail::pair_key(VarClass::Alpha, element, node, k, spec, 0))]);
    pv.nu_i.push_back(x[nlp.index(detail::pair_key(VarClass::Nu, element, node, k, spec, 0))]);
  }
  for (std::size_t k = 0; k < nvj; ++k) {
    pv.alpha_j.push_back(x[nlp.index(detail::pair_key(VarClass::Alpha, element, node, k, spec, 1))]);
    pv.nu_j.push_back(x[nlp.index(detail::pair_key(VarClass::Nu, element, node, k, spec, 1))]);
  }
  pv.beta_i = x[nlp.index(detail::pair_key(VarClass::Beta, element, node, 0, spec, 0))];
  pv.beta_j = x[nlp.index(detail::pair_key(VarClass::Beta, element, node, 0, spec, 1))];
  return pv;
}

/// Distance between the closest points implied by pair weights.
inline double implied_distance(const VertexMatrix& v_i, const VertexMatrix& v_j, const PairVariables& pv) {
  const auto fi = detail::flatten(v_i);
  const auto fj = detail::flatten(v_j);
  const auto pi = detail::combine<double, double>(fi, pv.alpha_i);
  const auto pj = detail::combine<double, double>(fj, pv.alpha_j);
  const auto d = detail::sub(pi, pj);
  return std::sqrt(detail::dot(d, d));
}

/// Vertices of object `obj` at trajectory point (element, node) of a primal vector.
inline VertexMatrix vertices_at(const NlpInstance& nlp, std::span<const double> x, const PolytopeObject& obj,
                                std::size_t element, std::size_t node) {
  const auto& L = nlp.layout;
  std::vector<double> xs, ys;
  for (std::size_t c = 0; c < L.n_x; ++c) xs.push_back(x[nlp.index(detail::key(VarClass::X, element, node, c))]);
  for (std::size_t c = 0; c < L.n_y; ++c) ys.push_back(x[nlp.index(detail::key(VarClass::Y, element, node, c))]);
  return detail::evaluate_vertices(obj, xs, ys);
}

/// Expected number of added collision variables with N_c = 1 and a uniform
/// vertex count, all pairs separated.
inline std::size_t expected_collision_vars(std::size_t n_e, std::size_t n_o, std::size_t n_v) {
  return n_e * n_o * (n_o - 1) * (n_v + n_v + 1);
}

/// Transcription followed by collision augmentation when objects are present.
inline NlpInstance build_nlp(const ValidatedProblem& problem, const RootScheme& scheme) {
  NlpInstance nlp = transcribe(problem, scheme);
  const auto& def = problem.def;
  if (def.objects.size() < 2) return nlp;
  const auto specs = def.separations.empty() ? all_pairs(def.objects) : def.separations;
  if (specs.empty()) return nlp;
  if (scheme.order != 1) {
    fail(ErrorCode::IncompatibleScheme, "collision avoidance adds complementarities and requires order 1");
  }
  return augment(nlp, def.objects, specs);
}

}  // namespace mpcctraj
