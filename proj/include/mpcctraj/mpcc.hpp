#pragma once

// Complementarity handling: turns the complementarity entries of an NLP into
// relaxed inequality rows or an objective penalty, and measures violation.

#include <algorithm>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "mpcctraj/autodiff/derivatives.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/nlp.hpp"
#include "mpcctraj/problem.hpp"

namespace mpcctraj {

struct RelaxationPolicy {
  RelaxationMode mode = RelaxationMode::PerConstraint;
  double delta = 1e-6;
  double penalty_weight = 10.0;

  bool barrier_linked() const {
    return mode == RelaxationMode::PerConstraintBarrier || mode == RelaxationMode::AggregateBarrier;
  }
};

/// Floor applied to the relaxation parameter when it tracks the barrier parameter.
inline constexpr double kMinBarrierDelta = 1e-9;

inline double signed_product(int alpha, double v1, double nu1, double v2, double nu2) {
  return static_cast<double>(alpha) * (v1 - nu1) * (v2 - nu2);
}

namespace detail {

/// Row sum_k alpha_k (v_a - nu_a)(v_b - nu_b) - count * delta; slots[2k] and
/// slots[2k + 1] locate the entry variables among the tape inputs.
inline ad::Tape product_tape(std::span<const ComplementarityEntry> entries, std::span<const std::size_t> slots,
                             std::span<const double> point) {
  const std::vector<double> params{0.0};
  const double count = static_cast<double>(entries.size());
  return ad::record(
      [&](VarSpan v, VarSpan p) {
        Var acc = 0.0;
        for (std::size_t k = 0; k < entries.size(); ++k) {
          const auto& e = entries[k];
          acc += static_cast<double>(e.alpha) * (v[slots[2 * k]] - e.bound1) * (v[slots[2 * k + 1]] - e.bound2);
        }
        return std::vector<Var>{acc - count * p[0]};
      },
      point, 1, params);
}

}  // namespace detail

/// Returns a copy of `nlp` whose complementarity entries are enforced
/// according to `policy`. The entries stay attached for residual reporting.
inline NlpInstance reformulate(const NlpInstance& nlp, const RelaxationPolicy& policy) {
  require(!nlp.relaxation.applied, ErrorCode::InvalidArgument, "complementarities were already reformulated");
  const auto entries = nlp.complementarities();
  if (!entries.empty() && nlp.layout.present) {
    require(nlp.layout.order == 1, ErrorCode::UnsupportedOrder,
            "complementarity reformulation needs collocation order 1");
  }
  const bool penalty = policy.mode == RelaxationMode::Penalty;
  if (penalty) {
    require(policy.penalty_weight > 0.0, ErrorCode::InvalidArgument, "penalty weight must be positive");
  } else if (!policy.barrier_linked()) {
    require(policy.delta > 0.0, ErrorCode::InvalidArgument, "relaxation parameter must be positive");
  }

  NlpInstance out = nlp;
  out.relaxation.applied = true;
  out.relaxation.mode = policy.mode;
  out.relaxation.barrier_linked = policy.barrier_linked();
  out.relaxation.delta = policy.barrier_linked() ? kMinBarrierDelta : policy.delta;

  // Unique variable list of a group plus the slot of each entry variable.
  auto point_of = [&](std::span<const ComplementarityEntry> group, std::vector<std::size_t>& vars,
                      std::vector<std::size_t>& slots) {
    vars.clear();
    slots.clear();
    for (const auto& e : group) {
      for (std::size_t v : {e.var1, e.var2}) {
        auto it = std::find(vars.begin(), vars.end(), v);
        slots.push_back(static_cast<std::size_t>(it - vars.begin()));
        if (it == vars.end()) vars.push_back(v);
      }
    }
    std::vector<double> p;
    for (std::size_t v : vars) p.push_back(nlp.initial()[v]);
    return p;
  };

  auto add_row = [&](std::span<const ComplementarityEntry> group, std::size_t element, std::size_t node) {
    ConstraintBlock block;
    block.kind = BlockKind::Complementarity;
    block.element = element;
    block.node = node;
    std::vector<std::size_t> slots;
    const auto point = point_of(group, block.vars, slots);
    block.tape = detail::product_tape(group, slots, point);
    block.params = {out.relaxation.delta};
    block.live_delta = true;
    block.lower = {-kInf};
    block.upper = {0.0};
    out.add_block(std::move(block));
  };

  switch (policy.mode) {
    case RelaxationMode::PerConstraint:
    case RelaxationMode::PerConstraintBarrier:
      for (std::size_t k = 0; k < entries.size(); ++k) add_row(entries.subspan(k, 1), entries[k].element, entries[k].node);
      break;
    case RelaxationMode::Aggregate:
    case RelaxationMode::AggregateBarrier: {
      std::map<std::size_t, std::vector<ComplementarityEntry>> by_element;
      for (const auto& e : entries) by_element[e.element].push_back(e);
      for (const auto& [element, group] : by_element) add_row(group, element, 0);
      break;
    }
    case RelaxationMode::Penalty:
      for (std::size_t k = 0; k < entries.size(); ++k) {
        ObjectiveTerm term;
        term.kind = TermKind::Penalty;
        std::vector<std::size_t> slots;
        const auto point = point_of(entries.subspan(k, 1), term.vars, slots);
        term.tape = ad::record(
            [&](VarSpan v) {
              const auto& e = entries[k];
              return std::vector<Var>{static_cast<double>(e.alpha) * (v[0] - e.bound1) * (v[1] - e.bound2)};
            },
            point, 1);
        term.weight = policy.penalty_weight;
        out.add_objective(std::move(term));
      }
      break;
  }
  return out;
}

/// Largest signed complementarity product over the entries of `nlp` at x.
/// Zero when there are no entries.
inline double complementarity_residual(const NlpInstance& nlp, std::span<const double> x) {
  double worst = 0.0;
  bool any = false;
  for (const auto& e : nlp.complementarities()) {
    const double v = signed_product(e.alpha, x[e.var1], e.bound1, x[e.var2], e.bound2);
    worst = any ? std::max(worst, v) : v;
    any = true;
  }
  return worst;
}

/// Same measure for problem-level pairs over a list of algebraic vectors,
/// one per collocation point.
inline double complementarity_residual(std::span<const ComplementarityPair> pairs,
                                       const std::vector<std::vector<double>>& y_values,
                                       const VariableBounds& bounds) {
  double worst = 0.0;
  bool any = false;
  for (const auto& y : y_values) {
    for (const auto& pair : pairs) {
      const int alpha = pair.alpha != 0 ? pair.alpha : alpha_sign(pair.side1, pair.side2);
      const double v = signed_product(alpha, y[pair.sigma1], pair_bound(bounds, pair.sigma1, pair.side1),
                                      y[pair.sigma2], pair_bound(bounds, pair.sigma2, pair.side2));
      worst = any ? std::max(worst, v) : v;
      any = true;
    }
  }
  return worst;
}

}  // namespace mpcctraj
