#include <gtest/gtest.h>

#include <random>

#include "orbistab/projection.hpp"

namespace {

using namespace orbistab;

std::shared_ptr<const OrbitParameterization> reference_orbit() {
  static const auto orbit =
      std::make_shared<const OrbitParameterization>(plan_orbit(cart_pendulum(), cosine_phase_template(0.1129)));
  return orbit;
}

ProjectionOperator make(ProjectionVariant v) {
  return v == ProjectionVariant::ImplicitPhase ? ProjectionOperator::implicit_phase(reference_orbit())
                                               : ProjectionOperator::min_distance(reference_orbit());
}

class ProjectionTest : public ::testing::TestWithParam<ProjectionVariant> {};

TEST_P(ProjectionTest, OrbitPointsProjectToThemselves) {
  const auto op = make(GetParam());
  for (int i = 0; i < 512; ++i) {
    const double s = kTwoPi * i / 512;
    const auto r = op.project(reference_orbit()->xs(s));
    EXPECT_LT(std::abs(wrap_signed(r.s - s)), 1e-10) << "s = " << s;
    EXPECT_LT(r.x_perp.norm(), 1e-9);
  }
}

TEST_P(ProjectionTest, OnOrbitNewtonConvergesInTwoSteps) {
  const auto op = make(GetParam());
  for (double s : {0.05, 1.0, 2.9, 4.0, 6.1}) EXPECT_LE(op.project(reference_orbit()->xs(s)).iterations, 2);
  EXPECT_EQ(op.project(reference_orbit()->xs(1.0), 1.0).iterations, 0);
}

TEST_P(ProjectionTest, ProjectionMatrixProperties) {
  const auto op = make(GetParam());
  const auto& orbit = *reference_orbit();
  for (int i = 0; i < 512; ++i) {
    const double s = kTwoPi * i / 512;
    const Mat om = op.omega_matrix(s);
    const Eigen::RowVectorXd dp = op.dP_on_orbit(s);
    const Vec t = orbit.xs_prime(s);
    EXPECT_LT((om * om - om).norm(), 1e-10);
    EXPECT_LT((dp * om).norm(), 1e-10);
    EXPECT_LT((om * t).norm(), 1e-10);
    EXPECT_NEAR(dp.dot(t), 1.0, 1e-8);
    Eigen::JacobiSVD<Mat> svd(om);
    EXPECT_EQ((svd.singularValues().array() > 1e-8).count(), 3);
  }
}

TEST_P(ProjectionTest, JacobianMatchesFiniteDifferences) {
  const auto op = make(GetParam());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.02);
  for (double s : {0.4, 2.0, 3.3, 5.1}) {
    Vec x = reference_orbit()->xs(s);
    for (int i = 0; i < 4; ++i) x(i) += g(rng);
    const double s0 = op.project(x, s).s;
    const Eigen::RowVectorXd dp = op.dP(x, s0);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = wrap_signed(op.project(xp, s0).s - op.project(xm, s0).s) / (2 * h);
      EXPECT_NEAR(dp(i), fd, 1e-6 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_P(ProjectionTest, HessianIsSymmetricAndMatchesDifferencedJacobian) {
  const auto op = make(GetParam());
  for (double s : {0.7, 2.4, 4.9}) {
    const Mat raw = op.d2P_on_orbit_raw(s);
    EXPECT_LT((raw - raw.transpose()).norm(), 1e-5 * (1.0 + raw.norm()));
    const Vec x0 = reference_orbit()->xs(s);
    const Vec dir = Vec::LinSpaced(4, 0.3, -0.6);
    const double h = 1e-4;
    const Eigen::RowVectorXd fd = (op.dP(x0 + h * dir, s) - op.dP(x0 - h * dir, s)) / (2 * h);
    EXPECT_LT((op.d2P_on_orbit(s) * dir - fd.transpose()).norm(), 1e-5 * (1.0 + fd.norm()));
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, ProjectionTest,
                         ::testing::Values(ProjectionVariant::ImplicitPhase, ProjectionVariant::MinDistance),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(ImplicitPhase, LevelSetsAreRadialInThePendulumPlane) {
  // Scaling (theta, theta') about the origin leaves the phase unchanged.
  const auto op = ProjectionOperator::implicit_phase(reference_orbit());
  for (double s : {0.3, 1.9, 4.2}) {
    Vec x = reference_orbit()->xs(s);
    x(0) += 0.05;
    x(2) -= 0.1;
    const double s0 = op.project(x).s;
    Vec y = x;
    y(1) *= 1.4;
    y(3) *= 1.4;
    EXPECT_LT(std::abs(wrap_signed(op.project(y, s0).s - s0)), 1e-10);
    EXPECT_LT(std::abs(op.dP_on_orbit(s)(0)), 1e-15);
    EXPECT_LT(std::abs(op.dP_on_orbit(s)(2)), 1e-15);
  }
}

TEST(MinDistance, NormalOffsetsKeepTheFootPoint) {
  const auto op = ProjectionOperator::min_distance(reference_orbit());
  for (double s : {0.3, 1.9, 4.2}) {
    const Vec t = reference_orbit()->xs_prime(s);
    Vec d = Vec::LinSpaced(4, 1.0, -0.5);
    d -= t * (t.dot(d) / t.squaredNorm());
    d *= 0.01 / d.norm();
    EXPECT_LT(std::abs(wrap_signed(op.project(reference_orbit()->xs(s) + d, s).s - s)), 1e-10);
  }
}

TEST(MinDistance, WeightedVariantIsConsistent) {
  const Mat w = Vec::LinSpaced(4, 1.0, 4.0).asDiagonal();
  const auto op = ProjectionOperator::min_distance(reference_orbit(), {}, [w](double) { return w; });
  for (double s : {0.3, 3.0, 5.5}) {
    EXPECT_LT(std::abs(wrap_signed(op.project(reference_orbit()->xs(s)).s - s)), 1e-10);
    EXPECT_NEAR(op.dP_on_orbit(s).dot(reference_orbit()->xs_prime(s)), 1.0, 1e-10);
  }
}

TEST(ProjectionErrors, OriginOfThePhasePlaneHasNoPhase) {
  const auto op = ProjectionOperator::implicit_phase(reference_orbit());
  try {
    op.project(Vec::Zero(4));
    FAIL() << "expected implicit-function-violation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ImplicitFunctionViolation);
  }
}

TEST(ProjectionErrors, NonFiniteInputIsRejected) {
  const auto op = ProjectionOperator::min_distance(reference_orbit());
  Vec x = Vec::Zero(4);
  x(2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(op.project(x), Error);
}

TEST(ProjectionErrors, PhaseProjectionNeedsAnAmplitude) {
  auto phi = cosine_phase_template(0.1129);
  phi.params.erase("a2");
  const auto sys = cart_pendulum();
  auto orbit = std::make_shared<const OrbitParameterization>(plan_orbit(sys, phi, 256));
  EXPECT_THROW(ProjectionOperator::implicit_phase(orbit), Error);
}

}  // namespace
