#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mpcctraj/collocation.hpp"
#include "mpcctraj/ipm/solver.hpp"
#include "mpcctraj/mpcc.hpp"
#include "support.hpp"

using namespace mpcctraj;
using testing_support::branch_mpcc;

namespace {

/// One differential state driven by y0 - y1 with 0 <= y0 _|_ y1 >= 0.
ValidatedProblem one_pair_problem(std::size_t ne) {
  ProblemDefinition def;
  def.info.n_x = 1;
  def.info.n_y = 2;
  def.info.tf = 1.0;
  def.info.element_widths = ProblemInfo::uniform_widths(ne, 0.0, 1.0);
  def.bounds = VariableBounds::free(def.info);
  def.bounds.y_lower = {0.0, 0.0};
  def.x0 = {0.0};
  def.dynamics = [](const DaePoint& p) {
    return std::vector<Var>{p.xdot[0] - (p.y[0] - p.y[1]), p.y[0] + p.y[1] - 1.0};
  };
  def.complementarities = {ComplementarityPair{0, 1, BoundSide::Lower, BoundSide::Lower, 0}};
  return validate_problem(def);
}

std::vector<std::size_t> complementarity_rows(const NlpInstance& nlp) {
  std::vector<std::size_t> rows;
  for (const auto& b : nlp.blocks()) {
    if (b.kind == BlockKind::Complementarity) rows.push_back(b.row_offset);
  }
  return rows;
}

const RelaxationMode kAllModes[] = {RelaxationMode::PerConstraint, RelaxationMode::Aggregate,
                                    RelaxationMode::PerConstraintBarrier, RelaxationMode::AggregateBarrier,
                                    RelaxationMode::Penalty};

}  // namespace

TEST(Mpcc, AlphaSign) {
  EXPECT_EQ(alpha_sign(BoundSide::Lower, BoundSide::Lower), 1);
  EXPECT_EQ(alpha_sign(BoundSide::Lower, BoundSide::Upper), -1);
  EXPECT_EQ(alpha_sign(BoundSide::Upper, BoundSide::Lower), -1);
  EXPECT_EQ(alpha_sign(BoundSide::Upper, BoundSide::Upper), 1);
}

TEST(Mpcc, PerConstraintAddsOneRowPerPoint) {
  const auto nlp = transcribe(one_pair_problem(5), {RootKind::Radau, 1});
  EXPECT_EQ(nlp.complementarities().size(), 5u);
  const auto per = reformulate(nlp, {RelaxationMode::PerConstraint, 1e-3, 10.0});
  EXPECT_EQ(per.count_rows(BlockKind::Complementarity), 5u);
  EXPECT_EQ(per.num_rows(), nlp.num_rows() + 5);
  EXPECT_EQ(per.num_vars(), nlp.num_vars());
}

TEST(Mpcc, AggregateRowsCarryDeltaTimesPairCount) {
  const auto nlp = transcribe(one_pair_problem(5), {RootKind::Radau, 1});
  const double delta = 1e-3;
  const auto agg = reformulate(nlp, {RelaxationMode::Aggregate, delta, 10.0});
  EXPECT_EQ(agg.count_rows(BlockKind::Complementarity), 5u);
  // At a point on a branch the row reads 0 - delta * n_c with n_c = 1.
  std::vector<double> x(agg.initial().begin(), agg.initial().end());
  for (const auto& e : agg.complementarities()) x[e.var1] = 0.0;
  NlpEvaluator ev(agg);
  std::vector<double> c(agg.num_rows());
  ev.constraints(x, c);
  const auto rhi = agg.row_upper();
  for (std::size_t r : complementarity_rows(agg)) {
    EXPECT_DOUBLE_EQ(c[r], -delta * 1.0);
    EXPECT_EQ(rhi[r], 0.0);
    EXPECT_LE(c[r], rhi[r]);
  }
}

TEST(Mpcc, AggregateSumsEveryPairInTheElement) {
  // Two pairs per point: one row per element whose slack is 2 delta.
  ProblemDefinition def;
  def.info.n_x = 1;
  def.info.n_y = 4;
  def.info.tf = 1.0;
  def.info.element_widths = ProblemInfo::uniform_widths(3, 0.0, 1.0);
  def.bounds = VariableBounds::free(def.info);
  def.bounds.y_lower = {0.0, 0.0, 0.0, 0.0};
  def.x0 = {0.0};
  def.dynamics = [](const DaePoint& p) {
    return std::vector<Var>{p.xdot[0] - p.y[0], p.y[1] + p.y[3] - 1.0, p.y[2] - p.y[0]};
  };
  def.complementarities = {ComplementarityPair{0, 1, BoundSide::Lower, BoundSide::Lower, 0},
                           ComplementarityPair{2, 3, BoundSide::Lower, BoundSide::Lower, 0}};
  const auto nlp = transcribe(validate_problem(def), {RootKind::Radau, 1});
  const auto agg = reformulate(nlp, {RelaxationMode::Aggregate, 0.25, 10.0});
  EXPECT_EQ(agg.count_rows(BlockKind::Complementarity), 3u);
  std::vector<double> x(agg.num_vars(), 0.0);
  for (const auto& e : agg.complementarities()) {
    x[e.var1] = 0.5;
    x[e.var2] = 2.0;
  }
  NlpEvaluator ev(agg);
  std::vector<double> c(agg.num_rows());
  ev.constraints(x, c);
  for (std::size_t r : complementarity_rows(agg)) EXPECT_DOUBLE_EQ(c[r], 2 * (0.5 * 2.0) - 2 * 0.25);
}

TEST(Mpcc, PenaltyMovesProductsIntoTheObjective) {
  const auto nlp = transcribe(one_pair_problem(4), {RootKind::Radau, 1});
  const auto pen = reformulate(nlp, {RelaxationMode::Penalty, 1e-6, 7.0});
  EXPECT_EQ(pen.count_rows(BlockKind::Complementarity), 0u);
  EXPECT_EQ(pen.num_rows(), nlp.num_rows());
  std::vector<double> x(pen.num_vars(), 0.0);
  double expected = 0.0;
  for (const auto& e : pen.complementarities()) {
    x[e.var1] = 0.3;
    x[e.var2] = 0.4;
    expected += 7.0 * 0.3 * 0.4;
  }
  NlpEvaluator ev(pen);
  EXPECT_NEAR(ev.objective(x), expected, 1e-14);
}

TEST(Mpcc, BarrierLinkedRowsReadTheLiveDelta) {
  const auto nlp = transcribe(one_pair_problem(2), {RootKind::Radau, 1});
  const auto rel = reformulate(nlp, {RelaxationMode::PerConstraintBarrier, 123.0, 10.0});
  EXPECT_TRUE(rel.relaxation.barrier_linked);
  std::vector<double> x(rel.num_vars(), 0.0);
  NlpEvaluator ev(rel);
  ev.set_delta(0.01);
  std::vector<double> c(rel.num_rows());
  ev.constraints(x, c);
  for (std::size_t r : complementarity_rows(rel)) EXPECT_DOUBLE_EQ(c[r], -0.01);
}

TEST(Mpcc, BranchPointSatisfiesAnyRelaxation) {
  const auto nlp = transcribe(one_pair_problem(3), {RootKind::Radau, 1});
  for (double delta : {1e-1, 1e-6, 1e-12}) {
    const auto per = reformulate(nlp, {RelaxationMode::PerConstraint, delta, 10.0});
    std::vector<double> x(per.num_vars(), 0.0);
    for (const auto& e : per.complementarities()) x[e.var2] = 5.0;
    NlpEvaluator ev(per);
    std::vector<double> c(per.num_rows());
    ev.constraints(x, c);
    for (std::size_t r : complementarity_rows(per)) EXPECT_LE(c[r], 0.0);
  }
}

TEST(Mpcc, ReformulationErrors) {
  const auto nlp = transcribe(one_pair_problem(2), {RootKind::Radau, 1});
  EXPECT_THROW((void)reformulate(nlp, {RelaxationMode::PerConstraint, 0.0, 10.0}), Error);
  EXPECT_THROW((void)reformulate(nlp, {RelaxationMode::Penalty, 1e-6, -1.0}), Error);
  const auto once = reformulate(nlp, {RelaxationMode::PerConstraint, 1e-2, 10.0});
  EXPECT_THROW((void)reformulate(once, {RelaxationMode::PerConstraint, 1e-2, 10.0}), Error);
  // A grid of order 2 carrying complementarity entries.
  NlpInstance high = nlp;
  high.layout.order = 2;
  try {
    (void)reformulate(high, {RelaxationMode::Aggregate, 1e-2, 10.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedOrder);
  }
}

TEST(Mpcc, ResidualExamples) {
  VariableBounds lower_only;
  lower_only.y_lower = {0.0, 0.0};
  lower_only.y_upper = {kInf, kInf};
  const std::vector<ComplementarityPair> ll{{0, 1, BoundSide::Lower, BoundSide::Lower, 0}};
  EXPECT_EQ(complementarity_residual(ll, {{0.0, 3.0}}, lower_only), 0.0);
  EXPECT_NEAR(complementarity_residual(ll, {{0.1, 0.2}}, lower_only), 0.02, 1e-15);

  VariableBounds unit;
  unit.y_lower = {0.0, 0.0};
  unit.y_upper = {1.0, 1.0};
  const std::vector<ComplementarityPair> lu{{0, 1, BoundSide::Lower, BoundSide::Upper, 0}};
  // alpha = -1: -(0.1 - 0)(0.9 - 1) = 0.01
  EXPECT_NEAR(complementarity_residual(lu, {{0.1, 0.9}}, unit), 0.01, 1e-15);
  // Largest over points.
  EXPECT_NEAR(complementarity_residual(ll, {{0.1, 0.2}, {0.5, 0.5}, {0.0, 1.0}}, lower_only), 0.25, 1e-15);
}

TEST(Mpcc, ResidualIsNonnegativeInsideBounds) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const BoundSide sides[] = {BoundSide::Lower, BoundSide::Upper};
  for (int trial = 0; trial < 2000; ++trial) {
    VariableBounds b;
    const double l0 = u(rng) * 4 - 2, l1 = u(rng) * 4 - 2;
    b.y_lower = {l0, l1};
    b.y_upper = {l0 + u(rng) * 3, l1 + u(rng) * 3};
    const std::vector<ComplementarityPair> pair{{0, 1, sides[trial % 2], sides[(trial / 2) % 2], 0}};
    const std::vector<double> y{b.y_lower[0] + u(rng) * (b.y_upper[0] - b.y_lower[0]),
                                b.y_lower[1] + u(rng) * (b.y_upper[1] - b.y_lower[1])};
    EXPECT_GE(complementarity_residual(pair, {y}, b), -1e-12);
  }
}

TEST(Mpcc, NlpResidualMatchesEntries) {
  auto nlp = branch_mpcc();
  const std::vector<double> x{0.25, 0.5};
  EXPECT_DOUBLE_EQ(complementarity_residual(nlp, x), 0.125);
  EXPECT_EQ(complementarity_residual(NlpInstance{}, std::vector<double>{}), 0.0);
}

TEST(Mpcc, BranchProblemUnderEveryPolicy) {
  // Branch enumeration: x1 = 0 gives min (x2 - 1)^2 + 1 = 1 at x2 = 1, and
  // symmetrically for x2 = 0; both branches are worth 1.
  const auto nlp = branch_mpcc(1.0, 1.0, 0.9, 0.1);
  for (auto mode : kAllModes) {
    const RelaxationPolicy pol{mode, 1e-6, 10.0};
    const auto sol = ipm::solve(nlp, pol);
    EXPECT_TRUE(sol.optimal()) << static_cast<int>(mode) << " " << ipm::to_string(sol.status);
    EXPECT_NEAR(sol.objective, 1.0, 1e-3) << static_cast<int>(mode);
    EXPECT_NEAR(std::min(sol.x[0], sol.x[1]), 0.0, 1e-3);
    EXPECT_NEAR(std::max(sol.x[0], sol.x[1]), 1.0, 1e-3);
  }
}

TEST(Mpcc, PerConstraintResidualStaysWithinDelta) {
  const auto nlp = branch_mpcc(1.0, 1.0, 0.9, 0.1);
  double prev_obj = 0.0;
  for (double delta : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const auto sol = ipm::solve(nlp, RelaxationPolicy{RelaxationMode::PerConstraint, delta, 10.0});
    ASSERT_TRUE(sol.optimal()) << delta;
    EXPECT_LE(sol.complementarity, delta + 1e-8) << delta;
    // Relaxed optima approach the branch value 1 from below.
    EXPECT_LE(sol.objective, 1.0 + 1e-8);
    EXPECT_GE(sol.objective, prev_obj - 1e-10);
    prev_obj = sol.objective;
  }
  EXPECT_NEAR(prev_obj, 1.0, 1e-3);
}

TEST(Mpcc, BarrierLinkedDeltaEndsAtFinalMu) {
  const auto nlp = branch_mpcc(1.0, 1.0, 0.9, 0.1);
  for (auto mode : {RelaxationMode::PerConstraintBarrier, RelaxationMode::AggregateBarrier}) {
    const auto sol = ipm::solve(nlp, RelaxationPolicy{mode, 1e-6, 10.0});
    ASSERT_TRUE(sol.optimal());
    EXPECT_DOUBLE_EQ(sol.final_delta, std::max(sol.final_mu, kMinBarrierDelta));
    EXPECT_LE(sol.complementarity, sol.final_mu + 1e-8);
  }
}

TEST(Mpcc, OriginIsOptimalForLinearObjective) {
  auto nlp = testing_support::scalar_program({0.0, 0.0}, {kInf, kInf}, {0.5, 0.5},
                                             [](VarSpan v) { return v[0] + v[1]; });
  nlp.add_complementarity(ComplementarityEntry{0, 1, 0.0, 0.0, 1, 0, 0, 0, PairSource::Problem});
  const auto sol = ipm::solve(nlp, RelaxationPolicy{RelaxationMode::PerConstraint, 1e-6, 10.0});
  ASSERT_TRUE(sol.optimal());
  EXPECT_LE(sol.objective, 1e-3);
  EXPECT_LE(std::hypot(sol.x[0], sol.x[1]), 1e-3);
}
