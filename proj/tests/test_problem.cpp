#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mpcctraj/problem.hpp"
#include "mpcctraj/systems/examples.hpp"
#include "support.hpp"

using namespace mpcctraj;
using testing_support::decay_definition;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mpcctraj::Error";
  return ErrorCode::InvalidArgument;
}

ProblemDefinition pendulum_like(std::size_t rows) {
  ProblemDefinition def;
  def.info.n_x = 2;
  def.info.n_u = 1;
  def.info.tf = 1.0;
  def.info.element_widths = ProblemInfo::uniform_widths(4, 0.0, 1.0);
  def.bounds = VariableBounds::free(def.info);
  def.x0 = {0.0, 0.0};
  def.dynamics = [rows](const DaePoint& p) {
    std::vector<Var> r{p.xdot[0] - p.x[1], p.xdot[1] - p.u[0] + sin(p.x[0])};
    while (r.size() < rows) r.push_back(p.x[0]);
    return r;
  };
  return def;
}

}  // namespace

TEST(Problem, PairWithoutAlgebraicVariablesIsRejected) {
  auto def = decay_definition(4);
  def.complementarities = {ComplementarityPair{0, 1, BoundSide::Lower, BoundSide::Lower, 0}};
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::BadComplementarity);
}

TEST(Problem, QuarterWidthsOnUnitHorizonAreAccepted) {
  auto def = decay_definition(1);
  def.info.element_widths = {0.25, 0.25, 0.25, 0.25};
  const auto vp = validate_problem(def);
  EXPECT_EQ(vp.info().num_elements(), 4u);
  EXPECT_EQ(vp.residual_rows, 1u);
}

TEST(Problem, ResidualLengthMustMatch) {
  EXPECT_NO_THROW((void)validate_problem(pendulum_like(2)));
  EXPECT_EQ(code_of([] { (void)validate_problem(pendulum_like(3)); }), ErrorCode::DimensionMismatch);
}

TEST(Problem, GridErrors) {
  auto def = decay_definition(1);
  def.info.element_widths = {0.0};
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::BadGrid);
  def.info.element_widths = {0.5, 0.4};
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::BadGrid);
  def.info.element_widths = {};
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::BadGrid);
  // Non-uniform widths that sum to the horizon are fine.
  def.info.element_widths = {0.1, 0.6, 0.3};
  EXPECT_NO_THROW((void)validate_problem(def));
}

TEST(Problem, ParametersNeedBoundsAndGuess) {
  auto def = decay_definition(2);
  def.info.n_p = 1;
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::MissingParamData);
  def.bounds.p_lower = {0.0};
  def.bounds.p_upper = {1.0};
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::MissingParamData);
  def.p_guess = {0.5};
  EXPECT_NO_THROW((void)validate_problem(def));
}

TEST(Problem, ComplementarityChecks) {
  ProblemDefinition def = decay_definition(2);
  def.info.n_y = 3;
  def.bounds = VariableBounds::free(def.info);
  def.bounds.y_lower = {0.0, 0.0, -kInf};
  def.bounds.y_upper = {1.0, kInf, kInf};
  def.dynamics = [](const DaePoint& p) {
    return std::vector<Var>{p.xdot[0] + p.x[0], p.y[0] - p.y[1], p.y[2]};
  };
  def.complementarities = {ComplementarityPair{0, 1, BoundSide::Upper, BoundSide::Lower, 0}};
  const auto vp = validate_problem(def);
  EXPECT_EQ(vp.n_c, 1u);
  EXPECT_EQ(vp.def.complementarities[0].alpha, -1);

  auto same = def;
  same.complementarities = {ComplementarityPair{1, 1, BoundSide::Lower, BoundSide::Lower, 0}};
  EXPECT_EQ(code_of([&] { (void)validate_problem(same); }), ErrorCode::BadComplementarity);
  auto out_of_range = def;
  out_of_range.complementarities = {ComplementarityPair{0, 3, BoundSide::Lower, BoundSide::Lower, 0}};
  EXPECT_EQ(code_of([&] { (void)validate_problem(out_of_range); }), ErrorCode::BadComplementarity);
  auto infinite = def;
  infinite.complementarities = {ComplementarityPair{0, 2, BoundSide::Lower, BoundSide::Lower, 0}};
  EXPECT_EQ(code_of([&] { (void)validate_problem(infinite); }), ErrorCode::BadComplementarity);
  auto wrong_sign = def;
  wrong_sign.complementarities = {ComplementarityPair{0, 1, BoundSide::Upper, BoundSide::Lower, 1}};
  EXPECT_EQ(code_of([&] { (void)validate_problem(wrong_sign); }), ErrorCode::BadComplementarity);
}

TEST(Problem, BoundSizesAndOrder) {
  auto def = decay_definition(2);
  def.bounds.x_lower = {1.0};
  def.bounds.x_upper = {0.0};
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::InvalidArgument);
  def.bounds.x_upper = {2.0, 3.0};
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::DimensionMismatch);
}

TEST(Problem, XdotBoundsDefaultToFree) {
  auto def = decay_definition(2);
  def.bounds.xdot_lower.clear();
  def.bounds.xdot_upper.clear();
  const auto vp = validate_problem(def);
  ASSERT_EQ(vp.def.bounds.xdot_lower.size(), 1u);
  EXPECT_EQ(vp.def.bounds.xdot_lower[0], -kInf);
  EXPECT_EQ(vp.def.bounds.xdot_upper[0], kInf);
}

TEST(Problem, NonFiniteResidualAtGuessIsRejected) {
  auto def = decay_definition(2);
  def.dynamics = [](const DaePoint& p) { return std::vector<Var>{p.xdot[0] + log(p.x[0] - 1.0)}; };
  EXPECT_EQ(code_of([&] { (void)validate_problem(def); }), ErrorCode::NonFiniteValue);
}

TEST(Problem, ValidationIsIdempotentOnBundledExamples) {
  for (auto name : systems::kExampleNames) {
    const auto once = systems::make_example(name);
    const auto twice = validate_problem(once);
    EXPECT_TRUE(same_structure(once, twice)) << name;
  }
}

TEST(Problem, BundledExamplesAreFiniteAtTheirGuess) {
  for (auto name : systems::kExampleNames) {
    const auto vp = systems::make_example(name);
    const auto& in = vp.info();
    const auto g = vp.guess_at(in.t0 + 0.3 * (in.tf - in.t0));
    std::vector<double> point;
    for (const auto* v : {&g.xdot, &g.x, &g.y, &g.u, &vp.def.p_guess}) point.insert(point.end(), v->begin(), v->end());
    const std::size_t nx = in.n_x, ny = in.n_y, nu = in.n_u, np = in.n_p;
    auto split = [&](VarSpan v) {
      return DaePoint{v.subspan(0, nx), v.subspan(nx, nx), v.subspan(2 * nx, ny), v.subspan(2 * nx + ny, nu),
                      v.subspan(2 * nx + ny + nu, np), NodeContext{}};
    };
    const auto r = ad::evaluate_direct([&](VarSpan v) { return vp.def.dynamics(split(v)); }, point);
    EXPECT_EQ(r.size(), vp.residual_rows) << name;
    for (double v : r) EXPECT_TRUE(std::isfinite(v)) << name;
    if (vp.def.stage_cost) {
      const auto c = ad::evaluate_direct([&](VarSpan v) { return std::vector<Var>{vp.def.stage_cost(split(v))}; },
                                         point);
      EXPECT_TRUE(std::isfinite(c[0])) << name;
    }
  }
}

TEST(Problem, UnknownExampleName) {
  EXPECT_EQ(code_of([] { (void)systems::make_example("acrobot"); }), ErrorCode::UnknownExample);
}
