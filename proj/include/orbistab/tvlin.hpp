#pragma once

#include <string>
#include <vector>

#include "orbistab/mechanics.hpp"
#include "orbistab/orbit.hpp"
#include "orbistab/projection.hpp"
#include "orbistab/spline.hpp"

namespace orbistab {

/// Feedforward term U-hat used in u = B^dagger U-hat(x, s) + v. All three agree on the orbit.
enum class FeedforwardChoice {
  OnOrbit,  ///< U(Phi(s), Phi'(s) rho(s), s)
  Mixed,    ///< U(q, Phi'(s) rho(s), s)
  Full,     ///< U(q, q', s)
};

inline const char* to_string(FeedforwardChoice ff) {
  switch (ff) {
    case FeedforwardChoice::OnOrbit: return "on_orbit";
    case FeedforwardChoice::Mixed: return "mixed";
    case FeedforwardChoice::Full: return "full";
  }
  return "unknown";
}

inline Vec u_hat(const MechanicalSystem& sys, const OrbitParameterization& orbit, FeedforwardChoice ff,
                 const Vec& x, double s) {
  const int n = sys.n_q;
  const auto d = orbit.phi(s);
  const Vec nominal_velocity = d[1] * orbit.rho(s);
  switch (ff) {
    case FeedforwardChoice::OnOrbit: return eval_U(sys, d[0], nominal_velocity, s, orbit);
    case FeedforwardChoice::Mixed: return eval_U(sys, x.head(n), nominal_velocity, s, orbit);
    case FeedforwardChoice::Full: return eval_U(sys, x.head(n), x.tail(n), s, orbit);
  }
  return {};
}

/// Control u = B^dagger U-hat(x, s) + v.
inline Vec feedforward_input(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                             FeedforwardChoice ff, const Vec& x, double s) {
  return sys.input_left_inverse * u_hat(sys, orbit, ff, x, s);
}

/// U-tilde(x, s) = B B^dagger U-hat(x, s) - U(q, q', s).
inline Vec u_tilde(const MechanicalSystem& sys, const OrbitParameterization& orbit, FeedforwardChoice ff,
                   const Vec& x, double s) {
  const int n = sys.n_q;
  return sys.input_matrix * (sys.input_left_inverse * u_hat(sys, orbit, ff, x, s)) -
         eval_U(sys, x.head(n), x.tail(n), s, orbit);
}

namespace detail {

// Central-difference Jacobian with one Richardson extrapolation step.
template <typename F>
Mat richardson_jacobian(F&& f, const Vec& x0, double step) {
  const Vec f0 = f(x0);
  Mat jac(f0.size(), x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const auto central = [&](double h) {
      Vec xp = x0;
      Vec xm = x0;
      xp(i) += h;
      xm(i) -= h;
      return Vec((f(xp) - f(xm)) / (2.0 * h));
    };
    jac.col(i) = (4.0 * central(0.5 * step) - central(step)) / 3.0;
  }
  return jac;
}

}  // namespace detail

/// Partial of U-tilde with respect to q' on the orbit through the velocity-error split:
/// -(I - B B^dagger)-free part of d/dz [C(q,z)z + 2C(q,Phi' rho)z + F z] at z = 0.
inline Mat u_tilde_velocity_partial_split(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                                          FeedforwardChoice ff, double s) {
  const auto d = orbit.phi(s);
  const Vec nominal_velocity = d[1] * orbit.rho(s);
  const Mat du_dqdot = 2.0 * sys.coriolis_matrix(d[0], nominal_velocity) + sys.friction_matrix(d[0]);
  if (ff == FeedforwardChoice::Full) {
    const Mat bb = sys.input_matrix * sys.input_left_inverse;
    return -(Mat::Identity(sys.n_q, sys.n_q) - bb) * du_dqdot;
  }
  return -du_dqdot;
}

/// A(s) = [[0, I], [M^{-1} dU~/dq, M^{-1} dU~/dq']] at x = x_s(s), s held fixed.
inline Mat a_block_matrix(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                          FeedforwardChoice ff, double s) {
  const int n = sys.n_q;
  const Vec x0 = orbit.xs(s);
  const auto lu = detail::factor_mass(sys, x0.head(n));
  const Mat jac = detail::richardson_jacobian(
      [&](const Vec& x) { return u_tilde(sys, orbit, ff, x, s); }, x0, 1e-6 * (1.0 + x0.norm()));
  Mat a = Mat::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n).setIdentity();
  a.bottomRows(n) = lu.solve(jac);
  return a;
}

inline Mat a_block_matrix(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                          const ProjectionOperator&, FeedforwardChoice ff, double s) {
  return a_block_matrix(sys, orbit, ff, s);
}

/// Input column block [0; M^{-1} B] at x_s(s).
inline Mat input_block(const MechanicalSystem& sys, const OrbitParameterization& orbit, double s) {
  const int n = sys.n_q;
  const Vec x0 = orbit.xs(s);
  const auto lu = detail::factor_mass(sys, x0.head(n));
  Mat g = Mat::Zero(2 * n, sys.n_u);
  g.bottomRows(n) = lu.solve(sys.input_matrix);
  return g;
}

/// Everything the transverse dynamics need at one value of s.
struct TransversePoint {
  Mat a_perp;
  Mat b_perp;
  Mat omega;
  Eigen::RowVectorXd dp;
  Vec tangent;  ///< x_s'(s)
  double rho = 0.0;
};

/// A_perp = Omega A - x_s' x_s'^T D2P rho,  B_perp = Omega [0; M^{-1} B].
inline TransversePoint transverse_point(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                                        const ProjectionOperator& op, FeedforwardChoice ff, double s) {
  TransversePoint p;
  p.rho = orbit.rho(s);
  p.tangent = orbit.xs_prime(s);
  p.dp = op.dP_on_orbit(s);
  p.omega = Mat::Identity(p.tangent.size(), p.tangent.size()) - p.tangent * p.dp;
  const Mat hess = op.d2P_on_orbit(s);
  p.a_perp = p.omega * a_block_matrix(sys, orbit, ff, s) -
             p.tangent * (p.tangent.transpose() * hess) * p.rho;
  p.b_perp = p.omega * input_block(sys, orbit, s);
  return p;
}

/// Alternate form Omega df/dx - Xi rho with Xi = x_s' x_s'^T D2P + x_s'' DP, where df/dx is
/// differenced from the closed-loop vector field with s frozen.
inline Mat a_perp_alternate(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                            const ProjectionOperator& op, FeedforwardChoice ff, double s) {
  const Vec x0 = orbit.xs(s);
  const Mat dfdx = detail::richardson_jacobian(
      [&](const Vec& x) {
        return forward_dynamics(sys, x, feedforward_input(sys, orbit, ff, x, s));
      },
      x0, 1e-6 * (1.0 + x0.norm()));
  const Vec d1 = orbit.xs_prime(s);
  const Eigen::RowVectorXd dp = op.dP_on_orbit(s);
  const Mat omega = Mat::Identity(d1.size(), d1.size()) - d1 * dp;
  const Mat xi = d1 * (d1.transpose() * op.d2P_on_orbit(s)) + orbit.xs_second(s) * dp;
  return omega * dfdx - xi * orbit.rho(s);
}

/// How a linearization grid was produced.
struct LinearizationProvenance {
  std::string projection = "unspecified";
  std::string feedforward = "unspecified";
  double derivative_step = 1e-6;
  double hessian_step = 1e-5;
};

/// Periodic grid of the transverse linearization, interpolated entrywise.
class TransverseLinearization {
 public:
  using Provenance = LinearizationProvenance;

  TransverseLinearization() = default;

  /// Assembles the object from per-node samples on a uniform grid over [0, 2pi).
  TransverseLinearization(const std::vector<TransversePoint>& nodes, Provenance prov = {})
      : provenance(std::move(prov)) {
    if (nodes.size() < 4) throw Error(ErrorKind::Config, "linearization grid needs at least 4 nodes");
    n_ = static_cast<int>(nodes.front().tangent.size());
    m_ = static_cast<int>(nodes.front().b_perp.cols());
    Eigen::MatrixXd packed(static_cast<Eigen::Index>(nodes.size()), channels());
    for (std::size_t i = 0; i < nodes.size(); ++i) packed.row(i) = pack(nodes[i]).transpose();
    spline_ = PeriodicSpline(std::move(packed));
  }

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  int grid_size() const { return spline_.nodes(); }
  double node(int i) const { return spline_.node(i); }

  TransversePoint at(double s) const {
    Vec packed(channels());
    spline_.eval_into(s, 0, packed);
    return unpack(packed);
  }

  TransversePoint node_point(int i) const { return unpack(spline_.values().row(i).transpose()); }

  Mat a_perp(double s) const { return at(s).a_perp; }
  Mat b_perp(double s) const { return at(s).b_perp; }

  Provenance provenance;

 private:
  int channels() const { return 2 * n_ * n_ + n_ * m_ + 2 * n_ + 1; }

  Vec pack(const TransversePoint& p) const {
    Vec out(channels());
    int k = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out(k++) = p.a_perp(i, j);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) out(k++) = p.b_perp(i, j);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out(k++) = p.omega(i, j);
    for (int i = 0; i < n_; ++i) out(k++) = p.dp(i);
    for (int i = 0; i < n_; ++i) out(k++) = p.tangent(i);
    out(k) = p.rho;
    return out;
  }

  TransversePoint unpack(const Vec& v) const {
    TransversePoint p;
    p.a_perp.resize(n_, n_);
    p.b_perp.resize(n_, m_);
    p.omega.resize(n_, n_);
    p.dp.resize(n_);
    p.tangent.resize(n_);
    int k = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) p.a_perp(i, j) = v(k++);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) p.b_perp(i, j) = v(k++);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) p.omega(i, j) = v(k++);
    for (int i = 0; i < n_; ++i) p.dp(i) = v(k++);
    for (int i = 0; i < n_; ++i) p.tangent(i) = v(k++);
    p.rho = v(k);
    return p;
  }

  int n_ = 0;
  int m_ = 0;
  PeriodicSpline spline_;
};

/// Samples the transverse linearization on a uniform grid (default 512 nodes).
inline TransverseLinearization build_linearization(const MechanicalSystem& sys,
                                                   const OrbitParameterization& orbit,
                                                   const ProjectionOperator& op, FeedforwardChoice ff,
                                                   int grid = 512) {
  std::vector<TransversePoint> nodes;
  nodes.reserve(grid);
  for (int i = 0; i < grid; ++i) nodes.push_back(transverse_point(sys, orbit, op, ff, kTwoPi * i / grid));
  TransverseLinearization::Provenance prov;
  prov.projection = to_string(op.variant());
  prov.feedforward = to_string(ff);
  return TransverseLinearization(nodes, prov);
}

/// Nonlinear rate of change of x_perp = x - x_s(P(x)) under u = B^dagger U-hat + v:
/// d/dt x_perp = (I - x_s'(s) DP(x)) f(x, u).
inline Vec transverse_rate(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                           const ProjectionOperator& op, FeedforwardChoice ff, const Vec& x, const Vec& v,
                           std::optional<double> hint = std::nullopt) {
  const auto proj = op.project(x, hint);
  const Vec u = feedforward_input(sys, orbit, ff, x, proj.s) + v;
  const Vec xdot = forward_dynamics(sys, x, u);
  const Eigen::RowVectorXd dp = op.jacobian_at(x, proj.s);
  return xdot - orbit.xs_prime(proj.s) * (dp * xdot);
}

}  // namespace orbistab
