#pragma once

// Registry of bundled scenarios with their default discretization.

#include <array>
#include <string>
#include <string_view>

#include "mpcctraj/collocation.hpp"
#include "mpcctraj/error.hpp"
#include "mpcctraj/mode_schedule.hpp"
#include "mpcctraj/mpcc.hpp"
#include "mpcctraj/systems/basic.hpp"
#include "mpcctraj/systems/car.hpp"
#include "mpcctraj/systems/pusher.hpp"

namespace mpcctraj::systems {

inline constexpr std::array<std::string_view, 6> kExampleNames{"pendulum", "double_integrator", "pusher",
                                                              "pusher_obstacles", "car_parking", "pusher_modes"};

inline ValidatedProblem make_example(std::string_view name, const ExampleOptions& opt = {}) {
  if (name == "pendulum") return pendulum(opt);
  if (name == "double_integrator") return double_integrator(opt);
  if (name == "pusher") return pusher(opt);
  if (name == "pusher_obstacles") return pusher_obstacles(opt);
  if (name == "car_parking") return car_parking(opt);
  if (name == "pusher_modes") return pusher_modes(opt);
  fail(ErrorCode::UnknownExample, "unknown example '" + std::string(name) + "'");
}

/// Mode-schedule variant of an example with a caller-supplied sequence.
/// Only examples with a natural mode base accept one.
inline ValidatedProblem make_mode_example(std::string_view name, const ExampleOptions& opt, const ModeSequence& seq) {
  if (name == "pusher_modes" || name == "pusher") return pusher_modes(opt, seq);
  if (name == "double_integrator") {
    ExampleOptions base_opt = opt;
    base_opt.num_elements = seq.num_elements();
    return build_mode_problem(double_integrator(base_opt, !seq.minimum_time), seq);
  }
  fail(ErrorCode::BadConfig, "example '" + std::string(name) + "' does not take a mode sequence");
}

/// Relaxation used when the caller does not choose one.
inline RelaxationPolicy default_policy(std::string_view name) {
  if (name == "car_parking") return RelaxationPolicy{RelaxationMode::AggregateBarrier, 1e-6, 10.0};
  return RelaxationPolicy{RelaxationMode::PerConstraintBarrier, 1e-6, 10.0};
}

/// Discretization used when the caller does not choose one. Scenarios with
/// complementarity or collision rows need order 1.
inline RootScheme default_scheme(std::string_view name) {
  if (name == "pendulum" || name == "double_integrator") return RootScheme{RootKind::Radau, 2};
  return RootScheme{RootKind::Radau, 1};
}

}  // namespace mpcctraj::systems
