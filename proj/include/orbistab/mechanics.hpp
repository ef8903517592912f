#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <utility>

#include <Eigen/Dense>

#include "orbistab/errors.hpp"

namespace orbistab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Euler-Lagrange system M(q)q'' + C(q,q')q' + F(q)q' + G(q) = B u.
///
/// The evaluators are plain closures; the cart-pendulum is provided by
/// cart_pendulum(), anything else is assembled programmatically.
struct MechanicalSystem {
  int n_q = 0;
  int n_u = 0;
  std::function<Mat(const Vec& q)> mass_matrix;
  std::function<Mat(const Vec& q, const Vec& w)> coriolis_matrix;
  std::function<Mat(const Vec& q)> friction_matrix;
  std::function<Vec(const Vec& q)> gravity_vector;
  Mat input_matrix;
  Mat input_left_inverse;
  /// Optional; only used for energy bookkeeping.
  std::function<double(const Vec& q)> potential_energy;
};

/// Stacked state x = (q, q').
struct GeneralizedState {
  Vec q;
  Vec qdot;

  GeneralizedState() = default;
  GeneralizedState(Vec q_in, Vec qdot_in) : q(std::move(q_in)), qdot(std::move(qdot_in)) {}

  static GeneralizedState from_stacked(const Vec& x) {
    const auto n = x.size() / 2;
    return {x.head(n), x.tail(n)};
  }

  Vec x() const {
    Vec out(q.size() + qdot.size());
    out << q, qdot;
    return out;
  }

  bool finite() const { return q.allFinite() && qdot.allFinite(); }
};

namespace detail {

inline constexpr double kMaxMassCondition = 1e12;

// Factorizes M(q) and rejects near-singular inertia.
inline Eigen::PartialPivLU<Mat> factor_mass(const MechanicalSystem& sys, const Vec& q) {
  Eigen::PartialPivLU<Mat> lu(sys.mass_matrix(q));
  const double rcond = lu.rcond();
  if (!(rcond > 1.0 / kMaxMassCondition)) {
    throw Error(ErrorKind::SingularDynamics, "mass matrix condition estimate exceeds 1e12");
  }
  return lu;
}

}  // namespace detail

/// Right-hand side of the state equation: (q', M^{-1}(B u - C q' - F q' - G)).
inline Vec forward_dynamics(const MechanicalSystem& sys, const GeneralizedState& x, const Vec& u) {
  const auto lu = detail::factor_mass(sys, x.q);
  const Vec rhs = sys.input_matrix * u - sys.coriolis_matrix(x.q, x.qdot) * x.qdot -
                  sys.friction_matrix(x.q) * x.qdot - sys.gravity_vector(x.q);
  Vec out(2 * sys.n_q);
  out << x.qdot, lu.solve(rhs);
  return out;
}

inline Vec forward_dynamics(const MechanicalSystem& sys, const Vec& x, const Vec& u) {
  return forward_dynamics(sys, GeneralizedState::from_stacked(x), u);
}

/// Residual of the equations of motion for a given acceleration; zero on solutions.
inline Vec dynamics_residual(const MechanicalSystem& sys, const Vec& q, const Vec& qdot,
                             const Vec& qddot, const Vec& u) {
  return sys.mass_matrix(q) * qddot + sys.coriolis_matrix(q, qdot) * qdot +
         sys.friction_matrix(q) * qdot + sys.gravity_vector(q) - sys.input_matrix * u;
}

/// U = M(q) (Lambda rho) + C(q,q')q' + F(q)q' + G(q), with the orbit-dependent
/// acceleration term Lambda(s) rho(s) passed in directly.
inline Vec eval_U(const MechanicalSystem& sys, const Vec& q, const Vec& qdot,
                  const Vec& lambda_rho) {
  return sys.mass_matrix(q) * lambda_rho + sys.coriolis_matrix(q, qdot) * qdot +
         sys.friction_matrix(q) * qdot + sys.gravity_vector(q);
}

inline double kinetic_energy(const MechanicalSystem& sys, const GeneralizedState& x) {
  return 0.5 * x.qdot.dot(sys.mass_matrix(x.q) * x.qdot);
}

inline double total_energy(const MechanicalSystem& sys, const GeneralizedState& x) {
  const double potential = sys.potential_energy ? sys.potential_energy(x.q) : 0.0;
  return kinetic_energy(sys, x) + potential;
}

/// Unit-mass cart with a massless unit-length rod and point bob; theta = 0 is upright.
inline MechanicalSystem cart_pendulum(double g = 9.81) {
  MechanicalSystem sys;
  sys.n_q = 2;
  sys.n_u = 1;
  sys.mass_matrix = [](const Vec& q) {
    const double c = std::cos(q(1));
    Mat m(2, 2);
    m << 2.0, c, c, 1.0;
    return m;
  };
  sys.coriolis_matrix = [](const Vec& q, const Vec& w) {
    Mat c = Mat::Zero(2, 2);
    c(0, 1) = -std::sin(q(1)) * w(1);
    return c;
  };
  sys.friction_matrix = [](const Vec&) { return Mat::Zero(2, 2); };
  sys.gravity_vector = [g](const Vec& q) {
    Vec out(2);
    out << 0.0, -g * std::sin(q(1));
    return out;
  };
  sys.input_matrix = Mat(2, 1);
  sys.input_matrix << 1.0, 0.0;
  sys.input_left_inverse = Mat(1, 2);
  sys.input_left_inverse << 1.0, 0.0;
  sys.potential_energy = [g](const Vec& q) { return g * std::cos(q(1)); };
  return sys;
}

/// Row vector spanning the left null space of B (one passive degree of freedom).
inline Eigen::RowVectorXd input_annihilator(const MechanicalSystem& sys) {
  if (sys.n_q - sys.n_u != 1) {
    throw Error(ErrorKind::NotApplicable,
                "reduced dynamics need exactly one unactuated degree of freedom");
  }
  Eigen::JacobiSVD<Mat> svd(sys.input_matrix.transpose(), Eigen::ComputeFullV);
  Eigen::RowVectorXd row = svd.matrixV().col(sys.n_q - 1).transpose();
  // Fix the sign so the largest entry is positive.
  Eigen::Index idx = 0;
  row.cwiseAbs().maxCoeff(&idx);
  if (row(idx) < 0.0) row = -row;
  return row;
}

}  // namespace orbistab
