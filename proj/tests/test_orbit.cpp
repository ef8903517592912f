#include <gtest/gtest.h>

#include <numbers>

#include <boost/numeric/odeint.hpp>

#include "orbistab/orbit.hpp"

namespace {

using namespace orbistab;

// Passive-row coefficients built directly from the curve by finite differences,
// independent of the library's reduced-dynamics code:
//   alpha = cos(th) phi1' + phi2',  beta = cos(th) phi1'' + phi2'',  gamma = -g sin(th).
struct HandReduced {
  double a2, k, g = 9.81;
  Eigen::Vector2d phi(double s) const { return {-k * std::sin(a2 * std::cos(s)), a2 * std::cos(s)}; }
  std::array<double, 3> coeffs(double s) const {
    const double h = 1e-4;
    const Eigen::Vector2d p0 = phi(s), pp = phi(s + h), pm = phi(s - h);
    const Eigen::Vector2d d1 = (pp - pm) / (2 * h);
    const Eigen::Vector2d d2 = (pp - 2 * p0 + pm) / (h * h);
    const double c = std::cos(p0(1));
    return {c * d1(0) + d1(1), c * d2(0) + d2(1), -g * std::sin(p0(1))};
  }
};

// Integrates alpha s'' + beta s'^2 + gamma = 0 in time from (s0, rho(s0)) and
// returns the worst relative gap between s'(t) and rho(s(t)) while s < s_end.
double time_integration_gap(const OrbitParameterization& orbit, const HandReduced& hr, double s0, double s_end) {
  using State = std::array<double, 2>;
  auto rhs = [&](const State& z, State& dz, double) {
    const auto [a, b, c] = hr.coeffs(z[0]);
    dz[0] = z[1];
    dz[1] = -(b * z[1] * z[1] + c) / a;
  };
  namespace odeint = boost::numeric::odeint;
  auto stepper = odeint::make_dense_output(1e-12, 1e-12, odeint::runge_kutta_dopri5<State>());
  State z{s0, orbit.rho(s0)};
  stepper.initialize(z, 0.0, 1e-4);
  double worst = 0.0;
  while (stepper.current_state()[0] < s_end) {
    stepper.do_step(rhs);
    const State& cur = stepper.current_state();
    if (cur[0] >= s_end) break;
    worst = std::max(worst, std::abs(cur[1] - orbit.rho(cur[0])) / orbit.rho(cur[0]));
  }
  return worst;
}

class OrbitTest : public ::testing::TestWithParam<double> {};

TEST_P(OrbitTest, VelocityProfileMatchesTimeIntegration) {
  const double a2 = GetParam();
  const auto orbit = plan_orbit(cart_pendulum(), cosine_phase_template(a2));
  const HandReduced hr{a2, 1.5};
  const double margin = 0.05;
  EXPECT_LT(time_integration_gap(orbit, hr, margin, std::numbers::pi - margin), 1e-5);
  EXPECT_LT(time_integration_gap(orbit, hr, std::numbers::pi + margin, kTwoPi - margin), 1e-5);
}

TEST_P(OrbitTest, AnchorsSatisfyTheSingularPointCondition) {
  const double a2 = GetParam();
  const auto sys = cart_pendulum();
  const auto orbit = plan_orbit(sys, cosine_phase_template(a2));
  const HandReduced hr{a2, 1.5};
  ASSERT_EQ(orbit.profile().anchors.size(), 2u);
  for (double sa : orbit.profile().anchors) {
    const auto [a, b, c] = hr.coeffs(sa);
    EXPECT_NEAR(a, 0.0, 1e-8);
    EXPECT_LT(std::abs(b * orbit.rho(sa) * orbit.rho(sa) + c), 1e-6);
  }
  const auto rd = reduced_dynamics(sys, cosine_phase_template(a2));
  EXPECT_LT(integral_identity_residual(rd, orbit.profile(), 0.0, kTwoPi, 256), 1e-8);
}

TEST_P(OrbitTest, ProfileIsPositivePeriodicAndEven) {
  const auto orbit = plan_orbit(cart_pendulum(), cosine_phase_template(GetParam()));
  double lo = 1e300;
  for (int i = 0; i < 4096; ++i) {
    const double s = kTwoPi * i / 4096;
    lo = std::min(lo, orbit.rho(s));
    EXPECT_NEAR(orbit.rho(s), orbit.rho(kTwoPi - s), 1e-9 * orbit.rho(s));
  }
  EXPECT_GT(lo, 1.0);
  EXPECT_NEAR(orbit.rho(0.0), orbit.rho(kTwoPi), 1e-12);
  EXPECT_NEAR(orbit.drho(1e-9), orbit.drho(kTwoPi + 1e-9), 1e-8);
}

TEST_P(OrbitTest, StateDerivativesMatchFiniteDifferences) {
  const auto orbit = plan_orbit(cart_pendulum(), cosine_phase_template(GetParam()));
  const double h = 1e-5;
  for (double s : {0.3, 1.7, 3.0, 4.4, 6.0}) {
    EXPECT_LT((orbit.xs_prime(s) - (orbit.xs(s + h) - orbit.xs(s - h)) / (2 * h)).norm(), 1e-7);
    EXPECT_LT((orbit.xs_second(s) - (orbit.xs_prime(s + h) - orbit.xs_prime(s - h)) / (2 * h)).norm(), 1e-6);
  }
}

TEST_P(OrbitTest, NominalInputReproducesOrbitAcceleration) {
  const auto sys = cart_pendulum();
  const auto orbit = plan_orbit(sys, cosine_phase_template(GetParam()));
  for (double s : {0.2, 1.0, 2.5, 3.6, 5.9}) {
    // d/dt x_s(s(t)) with s' = rho(s) is x_s'(s) rho(s).
    const Vec f = forward_dynamics(sys, orbit.xs(s), nominal_input(sys, orbit, s));
    EXPECT_LT((f - orbit.xs_prime(s) * orbit.rho(s)).norm(), 1e-7);
  }
}

INSTANTIATE_TEST_SUITE_P(Amplitudes, OrbitTest, ::testing::Values(0.1129, 0.5));

TEST(OrbitRegression, ReferenceProfile) {
  const auto sys = cart_pendulum();
  const auto orbit = plan_orbit(sys, cosine_phase_template(0.1129));
  EXPECT_NEAR(orbit.rho(0.0), 4.51146768335, 1e-8);
  EXPECT_NEAR(orbit.rho(std::numbers::pi / 2), 4.42709481176, 1e-8);
  EXPECT_NEAR(orbit_period(orbit), 1.40600598916, 1e-8);
  EXPECT_NEAR(nominal_input(sys, orbit, 1.0)(0), 2.37053389893, 1e-7);
}

TEST(OrbitRegression, LargeAmplitudeProfile) {
  const auto orbit = plan_orbit(cart_pendulum(), cosine_phase_template(0.5));
  EXPECT_NEAR(orbit.rho(0.0), 7.78443022782, 1e-8);
  EXPECT_NEAR(orbit.rho(std::numbers::pi / 2), 4.38345081935, 1e-8);
  EXPECT_NEAR(orbit_period(orbit), 1.13707636748, 1e-8);
}

TEST(OrbitErrors, NoPositiveAnchorVelocityIsInfeasible) {
  try {
    plan_orbit(cart_pendulum(), cosine_phase_template(1.0));
    FAIL() << "expected infeasible-orbit";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InfeasibleOrbit);
  }
}

TEST(OrbitErrors, CurveDimensionMustMatchSystem) {
  auto phi = cosine_phase_template(0.2);
  phi.n_q = 3;
  EXPECT_THROW(reduced_dynamics(cart_pendulum(), phi), Error);
}

}  // namespace
