#pragma once

// Shared reference pipeline: built once per test binary since the Riccati solve
// takes a few seconds.

#include <memory>

#include "orbistab/orbistab.hpp"

namespace orbistab::testing {

inline constexpr double kReferenceA2 = 0.1129;

struct Reference {
  MechanicalSystem sys;
  std::shared_ptr<OrbitParameterization> orbit;
  std::shared_ptr<ProjectionOperator> op;
  std::shared_ptr<TransverseLinearization> tv;
  SolverConfig cfg;

  static const Reference& get() {
    static const Reference ref = [] {
      Reference r;
      r.sys = cart_pendulum();
      r.orbit = std::make_shared<OrbitParameterization>(plan_orbit(r.sys, cosine_phase_template(kReferenceA2)));
      r.op = std::make_shared<ProjectionOperator>(ProjectionOperator::implicit_phase(r.orbit));
      r.tv = std::make_shared<TransverseLinearization>(
          build_linearization(r.sys, *r.orbit, *r.op, FeedforwardChoice::Mixed, 512));
      r.cfg.resolve(4, 1);
      return r;
    }();
    return ref;
  }

  /// Certified gain schedule for Q = I, Gamma = kappa = 0.1, order 40.
  const GainSchedule& gains() const {
    static const GainSchedule gs = solve(tv, cfg);
    return gs;
  }
};

}  // namespace orbistab::testing
