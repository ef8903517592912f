#include <gtest/gtest.h>

#include "fixture.hpp"

namespace {

using namespace orbistab;
using orbistab::testing::Reference;

// Stabilizing solution of A^T X + X A + Q - X S X = 0 from the stable invariant
// subspace of the Hamiltonian matrix.
Mat hamiltonian_care(const Mat& a, const Mat& s, const Mat& q) {
  const auto n = a.rows();
  Mat h(2 * n, 2 * n);
  h << a, -s, -q, -a.transpose();
  Eigen::ComplexEigenSolver<Mat> es(h);
  Eigen::MatrixXcd stable(2 * n, n);
  int k = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i)
    if (es.eigenvalues()(i).real() < 0.0) stable.col(k++) = es.eigenvectors().col(i);
  EXPECT_EQ(k, n);
  const Eigen::MatrixXcd x = stable.bottomRows(n) * stable.topRows(n).inverse();
  return x.real();
}

// A constant pair embedded as a "transverse" linearization with no tangent direction:
// Omega = I, DP = 0, rho = 1. The projected equation is then the algebraic one.
std::shared_ptr<TransverseLinearization> constant_embedding(const Mat& a, const Mat& b) {
  TransversePoint p;
  p.a_perp = a;
  p.b_perp = b;
  p.omega = Mat::Identity(a.rows(), a.rows());
  p.dp = Eigen::RowVectorXd::Zero(a.rows());
  p.tangent = Vec::Zero(a.rows());
  p.rho = 1.0;
  return std::make_shared<TransverseLinearization>(std::vector<TransversePoint>(32, p));
}

struct ConstantPair {
  const char* name;
  Mat a, b;
};

class TimeInvariantOracle : public ::testing::TestWithParam<int> {};

TEST_P(TimeInvariantOracle, GainMatchesHamiltonianSolution) {
  std::vector<ConstantPair> pairs;
  {
    Mat a(2, 2), b(2, 1);
    a << 0.0, 1.0, 2.0, -1.0;  // one unstable mode
    b << 0.0, 1.0;
    pairs.push_back({"unstable2", a, b});
  }
  {
    Mat a(3, 3), b(3, 2);
    a << 0.5, 1.0, 0.0, 0.0, -0.2, 1.0, 1.0, 0.0, 0.3;
    b << 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
    pairs.push_back({"unstable3", a, b});
  }
  const ConstantPair& pr = pairs[GetParam()];
  SolverConfig cfg;
  cfg.fourier_order = 3;
  cfg.kappa = 0.1;
  cfg.Q = Mat::Identity(pr.a.rows(), pr.a.rows());
  cfg.Gamma = 0.1 * Mat::Identity(pr.b.cols(), pr.b.cols());
  const GainSchedule gs = solve(constant_embedding(pr.a, pr.b), cfg);

  // kappa R enters as a shift of A by kappa / 2.
  const Mat shifted = pr.a + 0.5 * cfg.kappa * Mat::Identity(pr.a.rows(), pr.a.rows());
  const Mat x = hamiltonian_care(shifted, pr.b * cfg.Gamma.inverse() * pr.b.transpose(), cfg.Q);
  const Mat k_oracle = -cfg.Gamma.inverse() * pr.b.transpose() * x;
  for (double s : {0.0, 1.0, 2.5, 4.0, 5.9}) {
    EXPECT_LT((gs.K(s) - k_oracle).norm(), 1e-6) << pr.name << " s = " << s;
    EXPECT_LT(gs.dR(s).norm(), 1e-8);
  }
  EXPECT_TRUE(gs.floquet.transverse_stable());
  EXPECT_EQ(gs.floquet.tangent_index, -1);
}

INSTANTIATE_TEST_SUITE_P(Pairs, TimeInvariantOracle, ::testing::Values(0, 1));

TEST(TrigBasis, FitRecoversTrigonometricPolynomials) {
  const TrigBasis basis{5};
  Vec coef = Vec::LinSpaced(basis.size(), 1.0, -1.0);
  Vec samples(64);
  for (int i = 0; i < 64; ++i) samples(i) = basis.values(kTwoPi * i / 64).dot(coef);
  EXPECT_LT((basis.fit(samples) - coef).norm(), 1e-13);
}

TEST(TrigBasis, DerivativesMatchFiniteDifferences) {
  const TrigBasis basis{12};
  const double h = 1e-6;
  for (double s : {0.0, 1.3, 4.1}) {
    const Vec fd = (basis.values(s + h) - basis.values(s - h)) / (2 * h);
    EXPECT_LT((basis.derivatives(s) - fd).norm(), 1e-7);
    EXPECT_NEAR(basis.values(s)(2 * 12 - 1), std::cos(12 * s), 1e-13);
  }
}

TEST(SymmetricEntries, RowMajorUpperTriangle) {
  const auto e = symmetric_entries(3);
  ASSERT_EQ(e.size(), 6u);
  EXPECT_EQ(e[1], std::make_pair(0, 1));
  EXPECT_EQ(e[3], std::make_pair(1, 1));
  EXPECT_EQ(e[5], std::make_pair(2, 2));
}

TEST(SolverConfig, RejectsIndefiniteWeights) {
  SolverConfig cfg;
  cfg.Q = -Mat::Identity(4, 4);
  EXPECT_THROW(cfg.resolve(4, 1), Error);
  SolverConfig c2;
  c2.fourier_order = 10;
  c2.collocation_points = 15;
  EXPECT_THROW(c2.resolve(4, 1), Error);
}

TEST(ReferenceSolve, ResidualWithinTolerance) {
  const auto& ref = Reference::get();
  const auto& gs = ref.gains();
  EXPECT_LE(max_residual(*ref.tv, gs, ref.cfg, 2048), 2e-4);
  EXPECT_LE(gs.achieved_residual, 2e-4);
  EXPECT_EQ(gs.order(), 40);
}

TEST(ReferenceSolve, SolutionIsPositiveSemidefiniteAndGauged) {
  const auto& ref = Reference::get();
  const auto& gs = ref.gains();
  for (int i = 0; i < 256; ++i) {
    const double s = kTwoPi * i / 256;
    const Mat r = gs.R(s);
    EXPECT_LT((r - r.transpose()).norm(), 1e-14);
    const Mat k = detail::kernel_basis(ref.op->dP_on_orbit(s));
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(k.transpose() * r * k).eigenvalues()(0), 0.0);
    EXPECT_LT((r * ref.orbit->xs_prime(s)).norm(), 1e-5 * r.norm());
  }
}

TEST(ReferenceSolve, ClosedLoopFloquetCertificate) {
  const auto& ref = Reference::get();
  const FloquetReport fl = floquet_multipliers(*ref.tv, ref.gains(), 4096);
  ASSERT_EQ(fl.multipliers.size(), 4u);
  ASSERT_GE(fl.tangent_index, 0);
  EXPECT_NEAR(std::abs(fl.multipliers[fl.tangent_index] - 1.0), 0.0, 1e-6);
  EXPECT_LT(fl.tangent_left_angle, 1e-6);
  int inside = 0;
  for (const auto& z : fl.transverse) inside += std::abs(z) < 1.0;
  EXPECT_EQ(inside, 3);
  // DP(0) is a left eigenvector for the neutral multiplier.
  const Eigen::RowVectorXd dp = ref.op->dP_on_orbit(0.0);
  EXPECT_LT((dp * fl.monodromy - dp).norm(), 1e-7 * dp.norm());
}

TEST(ReferenceSolve, RegressionValues) {
  const auto& gs = Reference::get().gains();
  std::vector<double> radii;
  for (const auto& z : gs.floquet.transverse) radii.push_back(std::abs(z));
  std::sort(radii.begin(), radii.end());
  ASSERT_EQ(radii.size(), 3u);
  EXPECT_NEAR(radii[2], 0.2025364664, 1e-6);
  EXPECT_NEAR(radii[1], 0.03209391919, 1e-6);
  EXPECT_NEAR(radii[0], 0.00630352496, 1e-6);
  const Mat k0 = gs.K(0.0);
  const double expected[4] = {4.740882858, 32.47303947, 6.716561087, 10.01070077};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(k0(i), expected[i], 1e-5 * std::abs(expected[i]));
  EXPECT_NEAR(gs.R(0.0)(1, 1), 36.48701592, 1e-5);
}

TEST(ReferenceSolve, LyapunovFunctionDecreases) {
  const auto& ref = Reference::get();
  const LyapunovReport rep = lyapunov_decrease_check(*ref.tv, ref.gains(), ref.cfg, 1000, 11);
  EXPECT_EQ(rep.samples, 1000);
  EXPECT_LT(rep.max_vdot, 0.0);
  EXPECT_LT(rep.max_relative_error, 1e-3);
  EXPECT_GE(rep.min_bound_margin, -1e-12);
}

TEST(ReferenceSolve, ResidualOfPerturbedScheduleIsLarger) {
  const auto& ref = Reference::get();
  const auto& gs = ref.gains();
  Mat coef = gs.coefficients();
  coef(0, 3) += 1e-2;
  const GainSchedule perturbed(ref.tv, coef, ref.cfg.Gamma);
  EXPECT_GT(max_residual(*ref.tv, perturbed, ref.cfg, 512), 1e-3);
}

TEST(OpenLoop, MonodromyIsUnipotent) {
  // The uncontrolled transverse dynamics drift rather than diverge: the monodromy
  // is I + N with N^2 = 0, so every multiplier is 1 and growth over k periods is linear.
  const auto& ref = Reference::get();
  const FloquetReport ol = open_loop_multipliers(*ref.tv, 4096);
  for (const auto& z : ol.multipliers) EXPECT_LT(std::abs(z - 1.0), 1e-3);
  const Mat n = ol.monodromy - Mat::Identity(4, 4);
  EXPECT_GT(n.norm(), 1.0);
  EXPECT_LT((n * n).norm(), 1e-6 * n.norm() * n.norm());
  Mat w10 = Mat::Identity(4, 4);
  for (int k = 0; k < 10; ++k) w10 = w10 * ol.monodromy;
  const Mat linear = Mat::Identity(4, 4) + 10.0 * n;
  EXPECT_LT((w10 - linear).norm(), 1e-5 * linear.norm());
}

TEST(SolverErrors, UnreachableToleranceReportsBestResidual) {
  const auto& ref = Reference::get();
  SolverConfig cfg = ref.cfg;
  cfg.residual_tol = 1e-9;
  cfg.max_outer_iterations = 3;
  try {
    solve(ref.tv, cfg);
    FAIL() << "expected no-certificate";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoCertificate);
    EXPECT_GT(e.best_residual(), 1e-9);
    EXPECT_LT(e.best_residual(), 1e-5);
  }
}

TEST(SolverErrors, LowOrderDoesNotCertify) {
  const auto& ref = Reference::get();
  SolverConfig cfg = ref.cfg;
  cfg.fourier_order = 2;
  const SolveReport rep = solve_report(ref.tv, cfg);
  EXPECT_FALSE(rep.ok());
  EXPECT_EQ(rep.failure, ErrorKind::NoCertificate);
  EXPECT_GT(rep.schedule.achieved_residual, cfg.residual_tol);
}

}  // namespace
