#include <gtest/gtest.h>

#include <boost/numeric/odeint.hpp>

#include "orbistab/mechanics.hpp"

namespace {

using namespace orbistab;

Vec state(double x, double th, double xd, double thd) {
  Vec v(4);
  v << x, th, xd, thd;
  return v;
}

TEST(CartPendulum, MassMatrixIsSymmetricPositiveDefinite) {
  const auto sys = cart_pendulum();
  for (int i = 0; i < 64; ++i) {
    Vec q(2);
    q << 0.3, -3.0 + 6.0 * i / 63.0;
    const Mat m = sys.mass_matrix(q);
    EXPECT_LT((m - m.transpose()).norm(), 1e-15);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(m).eigenvalues().minCoeff(), 0.38);
  }
}

TEST(CartPendulum, InertiaRateMinusTwiceCoriolisIsSkew) {
  const auto sys = cart_pendulum();
  Vec q(2), w(2);
  q << 0.1, 0.7;
  w << -0.4, 1.3;
  const double h = 1e-6;
  const Mat mdot = (sys.mass_matrix(q + h * w) - sys.mass_matrix(q - h * w)) / (2 * h);
  const Mat n = mdot - 2.0 * sys.coriolis_matrix(q, w);
  EXPECT_LT((n + n.transpose()).norm(), 1e-9);
}

TEST(CartPendulum, AccelerationsMatchCramerSolution) {
  const auto sys = cart_pendulum(9.81);
  for (double th : {-2.0, -0.4, 0.0, 0.9, 2.7}) {
    const double thd = 0.8, u = 1.7;
    const Vec f = forward_dynamics(sys, state(0.2, th, -0.5, thd), Vec::Constant(1, u));
    // 2 xdd + cos(th) thdd = u + sin(th) thd^2 ;  cos(th) xdd + thdd = g sin(th)
    const double c = std::cos(th), s = std::sin(th);
    const double r1 = u + s * thd * thd, r2 = 9.81 * s;
    const double det = 2.0 - c * c;
    EXPECT_NEAR(f(2), (r1 - c * r2) / det, 1e-12);
    EXPECT_NEAR(f(3), (2.0 * r2 - c * r1) / det, 1e-12);
    EXPECT_DOUBLE_EQ(f(0), -0.5);
    EXPECT_DOUBLE_EQ(f(1), thd);
  }
}

TEST(CartPendulum, ResidualVanishesOnForwardDynamics) {
  const auto sys = cart_pendulum();
  const Vec x = state(0.0, 1.1, 0.3, -0.6);
  const Vec u = Vec::Constant(1, -2.0);
  const Vec f = forward_dynamics(sys, x, u);
  EXPECT_LT(dynamics_residual(sys, x.head(2), x.tail(2), f.tail(2), u).norm(), 1e-13);
}

TEST(CartPendulum, EnergyIsConservedWithoutInput) {
  const auto sys = cart_pendulum();
  using State = std::vector<double>;
  auto rhs = [&](const State& z, State& dz, double) {
    const Vec f = forward_dynamics(sys, Eigen::Map<const Vec>(z.data(), 4), Vec::Zero(1));
    for (int i = 0; i < 4; ++i) dz[i] = f(i);
  };
  State z{0.0, 0.5, 0.2, -1.0};
  const double e0 = total_energy(sys, GeneralizedState::from_stacked(Eigen::Map<Vec>(z.data(), 4)));
  namespace odeint = boost::numeric::odeint;
  odeint::integrate_adaptive(odeint::make_controlled(1e-12, 1e-12, odeint::runge_kutta_fehlberg78<State>()), rhs,
                             z, 0.0, 3.0, 1e-3);
  const double e1 = total_energy(sys, GeneralizedState::from_stacked(Eigen::Map<Vec>(z.data(), 4)));
  EXPECT_NEAR(e1, e0, 1e-9);
}

TEST(CartPendulum, AnnihilatorSelectsPassiveRow) {
  const auto sys = cart_pendulum();
  const Eigen::RowVectorXd a = input_annihilator(sys);
  EXPECT_LT((a * sys.input_matrix).norm(), 1e-15);
  EXPECT_NEAR(a.norm(), 1.0, 1e-15);
  EXPECT_NEAR(a(1), 1.0, 1e-15);
}

TEST(MechanicalSystem, SingularInertiaIsRejected) {
  auto sys = cart_pendulum();
  sys.mass_matrix = [](const Vec&) {
    Mat m(2, 2);
    m << 1.0, 1.0, 1.0, 1.0;
    return m;
  };
  try {
    forward_dynamics(sys, state(0, 0, 0, 0), Vec::Zero(1));
    FAIL() << "expected singular-dynamics";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularDynamics);
  }
}

TEST(MechanicalSystem, ReducedDynamicsNeedOnePassiveDof) {
  auto sys = cart_pendulum();
  sys.n_u = 2;
  sys.input_matrix = Mat::Identity(2, 2);
  EXPECT_THROW(input_annihilator(sys), Error);
}

}  // namespace
