#pragma once

// Fixed mode sequences with free durations. Each mode is mapped to a unit
// interval of scaled time, the durations become trailing parameters, and
// every complementarity pair is replaced by the bound pattern of its branch.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpcctraj/collocation.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/nlp.hpp"
#include "mpcctraj/problem.hpp"

namespace mpcctraj {

struct ModeSequence {
  /// modes[m][l] is the branch (1 or 2) of pair l in mode m.
  std::vector<std::vector<int>> modes;
  std::vector<double> durations_init;
  std::vector<std::pair<double, double>> duration_bounds;
  std::vector<std::size_t> elements_per_mode;
  /// Adds sum_m T_m to the terminal cost.
  bool minimum_time = false;

  std::size_t num_modes() const { return modes.size(); }
  std::size_t num_elements() const {
    return std::accumulate(elements_per_mode.begin(), elements_per_mode.end(), std::size_t{0});
  }
};

namespace detail {

inline void check_sequence(const ValidatedProblem& base, const ModeSequence& seq) {
  const std::size_t M = seq.num_modes();
  require(M >= 1, ErrorCode::InvalidArgument, "mode sequence needs at least one mode");
  require(seq.durations_init.size() == M && seq.duration_bounds.size() == M && seq.elements_per_mode.size() == M,
          ErrorCode::DimensionMismatch, "mode sequence fields must have one entry per mode");
  const std::size_t n_pairs = base.def.complementarities.size();
  for (std::size_t m = 0; m < M; ++m) {
    require(seq.modes[m].size() == n_pairs, ErrorCode::BranchOutOfRange,
            "mode " + std::to_string(m) + " assigns " + std::to_string(seq.modes[m].size()) + " branches for " +
                std::to_string(n_pairs) + " pairs");
    for (int b : seq.modes[m]) {
      require(b == 1 || b == 2, ErrorCode::BranchOutOfRange, "branch must be 1 or 2, got " + std::to_string(b));
    }
    require(seq.elements_per_mode[m] >= 1, ErrorCode::EmptyMode, "mode " + std::to_string(m) + " has no elements");
    const auto [lo, hi] = seq.duration_bounds[m];
    require(lo > 0.0 && lo <= hi, ErrorCode::InvalidArgument, "duration bounds need 0 < T_min <= T_max");
    require(seq.durations_init[m] > 0.0, ErrorCode::NonpositiveDuration, "initial durations must be positive");
  }
}

}  // namespace detail

/// Problem on scaled time [0, M] with durations appended to the parameters.
inline ValidatedProblem build_mode_problem(const ValidatedProblem& base, const ModeSequence& seq) {
  detail::check_sequence(base, seq);
  const std::size_t M = seq.num_modes();
  const auto& bdef = base.def;
  const auto& bin = bdef.info;
  const std::size_t np0 = bin.n_p;

  // Element -> mode lookup, plus initial-duration time offsets for guesses.
  auto mode_of = std::make_shared<std::vector<std::size_t>>();
  for (std::size_t m = 0; m < M; ++m) mode_of->insert(mode_of->end(), seq.elements_per_mode[m], m);
  auto starts = std::make_shared<std::vector<double>>(M + 1, bin.t0);
  for (std::size_t m = 0; m < M; ++m) (*starts)[m + 1] = (*starts)[m] + seq.durations_init[m];

  ProblemDefinition def;
  def.name = bdef.name + "_modes";
  def.info.n_x = bin.n_x;
  def.info.n_y = bin.n_y;
  def.info.n_u = bin.n_u;
  def.info.n_p = np0 + M;
  def.info.t0 = 0.0;
  def.info.tf = static_cast<double>(M);
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t n = seq.elements_per_mode[m];
    def.info.element_widths.insert(def.info.element_widths.end(), n, 1.0 / static_cast<double>(n));
  }
  // Rounding of the uniform widths must not trip the horizon check.
  {
    double sum = 0.0;
    for (double h : def.info.element_widths) sum += h;
    def.info.element_widths.back() += def.info.tf - sum;
  }

  def.bounds = bdef.bounds;
  for (std::size_t m = 0; m < M; ++m) {
    def.bounds.p_lower.push_back(seq.duration_bounds[m].first);
    def.bounds.p_upper.push_back(seq.duration_bounds[m].second);
  }
  // Scaled derivatives are T_m times the absolute ones.
  const double t_max = std::max_element(seq.duration_bounds.begin(), seq.duration_bounds.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; })
                           ->second;
  for (std::size_t c = 0; c < bin.n_x; ++c) {
    if (std::isfinite(def.bounds.xdot_lower[c])) def.bounds.xdot_lower[c] *= def.bounds.xdot_lower[c] < 0 ? t_max : 0;
    if (std::isfinite(def.bounds.xdot_upper[c])) def.bounds.xdot_upper[c] *= def.bounds.xdot_upper[c] > 0 ? t_max : 0;
  }
  def.x0 = bdef.x0;
  def.p_guess = bdef.p_guess;
  def.p_guess.insert(def.p_guess.end(), seq.durations_init.begin(), seq.durations_init.end());
  def.objects = bdef.objects;
  def.separations = bdef.separations;
  def.pinned_pairs = bdef.pinned_pairs + bdef.complementarities.size();
  def.mode_count = M;

  auto scaled_ctx = [=](const NodeContext& ctx) {
    NodeContext out = ctx;
    const std::size_t m = (*mode_of)[std::min(ctx.element, mode_of->size() - 1)];
    out.mode = m;
    const double frac = std::clamp(ctx.t - static_cast<double>(m), 0.0, 1.0);
    out.t = (*starts)[m] + frac * ((*starts)[m + 1] - (*starts)[m]);
    return out;
  };

  const auto base_dyn = bdef.dynamics;
  def.dynamics = [=](const DaePoint& pt) {
    const NodeContext ctx = scaled_ctx(pt.ctx);
    const Var T = pt.p[np0 + ctx.mode];
    std::vector<Var> xdot(pt.xdot.begin(), pt.xdot.end());
    for (auto& v : xdot) v = v / T;
    return base_dyn(DaePoint{xdot, pt.x, pt.y, pt.u, pt.p.subspan(0, np0), ctx});
  };
  if (bdef.stage_cost) {
    const auto base_cost = bdef.stage_cost;
    def.stage_cost = [=](const DaePoint& pt) {
      const NodeContext ctx = scaled_ctx(pt.ctx);
      const Var T = pt.p[np0 + ctx.mode];
      std::vector<Var> xdot(pt.xdot.begin(), pt.xdot.end());
      for (auto& v : xdot) v = v / T;
      return T * base_cost(DaePoint{xdot, pt.x, pt.y, pt.u, pt.p.subspan(0, np0), ctx});
    };
  }
  if (bdef.mayer_cost || seq.minimum_time) {
    const auto base_mayer = bdef.mayer_cost;
    const bool min_time = seq.minimum_time;
    def.mayer_cost = [=](VarSpan xf, VarSpan p) {
      Var acc = base_mayer ? base_mayer(xf, p.subspan(0, np0)) : Var(0.0);
      if (min_time) {
        for (std::size_t m = 0; m < M; ++m) acc += p[np0 + m];
      }
      return acc;
    };
  }

  // Pinned bounds: branch 1 fixes y_sigma1 at its bound, branch 2 fixes y_sigma2.
  const auto pairs = bdef.complementarities;
  const auto modes = seq.modes;
  const auto bounds = bdef.bounds;
  const auto base_nb = bdef.node_bounds;
  def.node_bounds = [=](const NodeContext& ctx, PointBounds& pb) {
    const NodeContext mctx = scaled_ctx(ctx);
    if (base_nb) base_nb(mctx, pb);
    for (std::size_t l = 0; l < pairs.size(); ++l) {
      const auto& pair = pairs[l];
      const bool first = modes[mctx.mode][l] == 1;
      const std::size_t idx = first ? pair.sigma1 : pair.sigma2;
      const double v = pair_bound(bounds, idx, first ? pair.side1 : pair.side2);
      pb.y_lower[idx] = v;
      pb.y_upper[idx] = v;
    }
  };

  const auto base_guess = bdef.initial_guess;
  const auto durations = seq.durations_init;
  def.initial_guess = [=](double t_scaled) {
    const std::size_t m = std::min(static_cast<std::size_t>(std::max(t_scaled, 0.0)), M - 1);
    const double frac = std::clamp(t_scaled - static_cast<double>(m), 0.0, 1.0);
    const double t = (*starts)[m] + frac * durations[m];
    PointGuess g = base_guess ? base_guess(t) : PointGuess{};
    for (auto& v : g.xdot) v *= durations[m];
    for (std::size_t l = 0; l < pairs.size(); ++l) {
      const auto& pair = pairs[l];
      const bool first = modes[m][l] == 1;
      const std::size_t idx = first ? pair.sigma1 : pair.sigma2;
      if (g.y.size() == bin.n_y) g.y[idx] = pair_bound(bounds, idx, first ? pair.side1 : pair.side2);
    }
    return g;
  };
  return validate_problem(std::move(def));
}

/// Durations T_1..T_M read from the trailing parameters of a solved mode problem.
inline std::vector<double> mode_durations(const NlpInstance& nlp, std::span<const double> x, std::size_t num_modes) {
  const std::size_t np = nlp.layout.n_p;
  require(num_modes <= np, ErrorCode::DimensionMismatch, "fewer parameters than modes");
  std::vector<double> T;
  for (std::size_t m = 0; m < num_modes; ++m) {
    T.push_back(x[nlp.index(detail::key(VarClass::P, 0, 0, np - num_modes + m))]);
  }
  return T;
}

/// Maps a trajectory on scaled time [0, M] to absolute time starting at t0.
inline Trajectory unscale_trajectory(const Trajectory& traj, std::span<const double> durations, double t0 = 0.0) {
  const std::size_t M = durations.size();
  require(M >= 1, ErrorCode::InvalidArgument, "no durations given");
  for (double T : durations) {
    require(std::isfinite(T) && T > 0.0, ErrorCode::NonpositiveDuration, "mode durations must be positive");
  }
  std::vector<double> offset(M + 1, t0);
  for (std::size_t m = 0; m < M; ++m) offset[m + 1] = offset[m] + durations[m];
  auto mode_at = [&](double ts) {
    return std::min(static_cast<std::size_t>(std::max(std::floor(ts + 1e-12), 0.0)), M - 1);
  };
  auto map_time = [&](double ts) {
    const std::size_t m = mode_at(ts);
    return offset[m] + (ts - static_cast<double>(m)) * durations[m];
  };
  Trajectory out = traj;
  for (auto& s : out.samples) {
    const std::size_t m = mode_at(s.t);
    for (auto& v : s.xdot) v /= durations[m];
    s.t = map_time(s.t);
  }
  for (auto& t : out.element_starts) t = map_time(t);
  return out;
}

}  // namespace mpcctraj
