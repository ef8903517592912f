#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orbistab/errors.hpp"
#include "orbistab/mechanics.hpp"
#include "orbistab/spline.hpp"

namespace orbistab {

/// Virtual-constraint curve Phi(s) with its first three derivatives.
struct PhiTemplate {
  std::string name;
  int n_q = 0;
  std::map<std::string, double> params;
  /// Returns {Phi, Phi', Phi'', Phi'''} at s.
  std::function<std::array<Vec, 4>(double s)> eval;
};

/// Cart-pendulum curve Phi(s) = (-k sin(a cos s), a cos s), s in [0, 2pi).
inline PhiTemplate cosine_phase_template(double a2, double cart_gain = 1.5) {
  PhiTemplate t;
  t.name = "cosine_phase";
  t.n_q = 2;
  t.params = {{"a2", a2}, {"cart_gain", cart_gain}};
  t.eval = [a2, cart_gain](double s) {
    const double c0 = a2 * std::cos(s);
    const double c1 = -a2 * std::sin(s);
    const double c2 = -c0;
    const double c3 = -c1;
    const double sc = std::sin(c0);
    const double cc = std::cos(c0);
    std::array<Vec, 4> d;
    for (auto& v : d) v.resize(2);
    d[0] << -cart_gain * sc, c0;
    d[1] << -cart_gain * cc * c1, c1;
    d[2] << -cart_gain * (-sc * c1 * c1 + cc * c2), c2;
    d[3] << -cart_gain * (-cc * c1 * c1 * c1 - 3.0 * sc * c1 * c2 + cc * c3), c3;
    return d;
  };
  return t;
}

// ---------------------------------------------------------------------------
// Reduced dynamics alpha(s) s'' + beta(s) s'^2 + gamma(s) = 0
// ---------------------------------------------------------------------------

class ReducedDynamics {
 public:
  ReducedDynamics(MechanicalSystem sys, PhiTemplate phi, Eigen::RowVectorXd annihilator)
      : sys_(std::move(sys)), phi_(std::move(phi)), annihilator_(std::move(annihilator)) {}

  double alpha(double s) const {
    const auto d = phi_.eval(s);
    return annihilator_ * (sys_.mass_matrix(d[0]) * d[1]);
  }

  double beta(double s) const {
    const auto d = phi_.eval(s);
    return annihilator_ * (sys_.mass_matrix(d[0]) * d[2] + sys_.coriolis_matrix(d[0], d[1]) * d[1]);
  }

  double gamma(double s) const {
    const auto d = phi_.eval(s);
    return annihilator_ * sys_.gravity_vector(d[0]);
  }

  /// Five-point central differences; the coefficients are smooth in s.
  double dalpha(double s) const { return derivative([this](double t) { return alpha(t); }, s); }
  double dbeta(double s) const { return derivative([this](double t) { return beta(t); }, s); }
  double dgamma(double s) const { return derivative([this](double t) { return gamma(t); }, s); }
  double delta(double s) const { return beta(s) - dalpha(s); }

  const std::vector<double>& singular_points() const { return singular_points_; }
  const MechanicalSystem& system() const { return sys_; }
  const PhiTemplate& phi() const { return phi_; }

  /// Locates zeros of alpha: exact zeros at scan nodes plus bisection on sign changes.
  void locate_singular_points(int scan_points = 4096) {
    singular_points_.clear();
    const double h = kTwoPi / scan_points;
    std::vector<double> values(scan_points);
    for (int i = 0; i < scan_points; ++i) values[i] = alpha(h * i);
    for (int i = 0; i < scan_points; ++i) {
      const int j = (i + 1) % scan_points;
      if (values[i] == 0.0) {
        singular_points_.push_back(h * i);
        continue;
      }
      if (values[j] == 0.0 || (values[i] > 0.0) == (values[j] > 0.0)) continue;
      double lo = h * i;
      double hi = h * (i + 1);
      const bool lo_positive = values[i] > 0.0;
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double am = alpha(mid);
        if (am == 0.0) {
          lo = hi = mid;
          break;
        }
        ((am > 0.0) == lo_positive ? lo : hi) = mid;
      }
      singular_points_.push_back(wrap_periodic(0.5 * (lo + hi)));
    }
    std::sort(singular_points_.begin(), singular_points_.end());
  }

 private:
  template <typename F>
  static double derivative(F&& f, double s) {
    constexpr double h = 1e-3;
    return (-f(s + 2 * h) + 8 * f(s + h) - 8 * f(s - h) + f(s - 2 * h)) / (12 * h);
  }

  MechanicalSystem sys_;
  PhiTemplate phi_;
  Eigen::RowVectorXd annihilator_;
  std::vector<double> singular_points_;
};

/// Projects the passive row of the equations of motion onto the constraint curve.
inline ReducedDynamics reduced_dynamics(const MechanicalSystem& sys, const PhiTemplate& phi,
                                        int scan_points = 4096) {
  if (phi.n_q != sys.n_q) {
    throw Error(ErrorKind::NotApplicable, "constraint curve dimension does not match the system");
  }
  const Eigen::RowVectorXd annihilator = input_annihilator(sys);
  // Viscous friction on the passive row breaks the alpha/beta/gamma form.
  for (int i = 0; i < 64; ++i) {
    const auto d = phi.eval(kTwoPi * i / 64.0);
    const double f = annihilator * (sys.friction_matrix(d[0]) * d[1]);
    if (std::abs(f) > 1e-12) {
      throw Error(ErrorKind::NotApplicable, "passive-row friction is not supported by reduced dynamics");
    }
  }
  ReducedDynamics rd(sys, phi, annihilator);
  rd.locate_singular_points(scan_points);
  return rd;
}

// ---------------------------------------------------------------------------
// Velocity profile rho(s)
// ---------------------------------------------------------------------------

/// rho(s) > 0 on a uniform periodic grid with C2 cubic interpolation.
class VelocityProfile {
 public:
  VelocityProfile() = default;

  /// Builds the interpolant from nodal rho values on a uniform grid over [0, 2pi).
  explicit VelocityProfile(const Eigen::VectorXd& rho_nodes) : spline_(Eigen::MatrixXd(rho_nodes)) {}

  double rho(double s) const { return spline_.eval(s, 0)(0); }
  double drho(double s) const { return spline_.eval(s, 1)(0); }
  double ddrho(double s) const { return spline_.eval(s, 2)(0); }

  int grid_size() const { return spline_.nodes(); }
  double node(int i) const { return spline_.node(i); }
  Eigen::VectorXd nodes_rho() const { return spline_.values().col(0); }

  /// Relative mismatch between the two continuations met at each stitch point.
  std::vector<double> stitch_mismatch;
  std::vector<double> anchors;

 private:
  PeriodicSpline spline_;
};

namespace detail {

// d(rho^2)/ds for the passive-row identity, with the analytic limit at alpha = 0.
struct RhoSquaredField {
  const ReducedDynamics& rd;

  double operator()(double s, double y) const {
    const double a = rd.alpha(s);
    if (std::abs(a) < 1e-8) {
      const double da = rd.dalpha(s);
      const double denom = da + 2.0 * rd.beta(s);
      if (std::abs(denom) < 1e-12) {
        throw Error(ErrorKind::InconsistentParameterization,
                    "degenerate singular point: alpha' + 2 beta vanishes");
      }
      return -2.0 * (rd.dbeta(s) * y + rd.dgamma(s)) / denom;
    }
    return -2.0 * (rd.beta(s) * y + rd.gamma(s)) / a;
  }
};

inline double rk4_rho_squared(const RhoSquaredField& f, double s0, double y0, double s1,
                              double max_step) {
  const double span = s1 - s0;
  if (span == 0.0) return y0;
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(span) / max_step)));
  const double h = span / n;
  double s = s0;
  double y = y0;
  for (int i = 0; i < n; ++i) {
    const double k1 = f(s, y);
    const double k2 = f(s + 0.5 * h, y + 0.5 * h * k1);
    const double k3 = f(s + 0.5 * h, y + 0.5 * h * k2);
    const double k4 = f(s + h, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s = s0 + (i + 1) * h;
  }
  return y;
}

}  // namespace detail

/// Solves the passive-row identity for rho^2 and returns the positive root.
///
/// Every singular point s_a (alpha = 0) is anchored at rho^2 = -gamma/beta; the
/// linear equation in rho^2 is integrated outward from each anchor and the two
/// continuations meeting inside a regular interval are stitched at its midpoint.
/// Without singular points the unique periodic solution is taken.
inline VelocityProfile solve_rho(const ReducedDynamics& rd, int grid_size = 2048,
                                 int substeps = 8) {
  if (grid_size < 8) throw Error(ErrorKind::Config, "rho grid must have at least 8 nodes");
  const double h = kTwoPi / grid_size;
  const double max_step = h / substeps;
  const detail::RhoSquaredField field{rd};
  Eigen::VectorXd y = Eigen::VectorXd::Constant(grid_size, std::nan(""));
  std::vector<double> mismatch;

  const auto& anchors = rd.singular_points();
  if (anchors.empty()) {
    // Periodic solution of a scalar linear ODE: y(2pi) = m y(0) + c.
    const double c = detail::rk4_rho_squared(field, 0.0, 0.0, kTwoPi, max_step);
    const detail::RhoSquaredField* fp = &field;
    auto homogeneous = [fp](double s, double v) { return (*fp)(s, v) - (*fp)(s, 0.0); };
    double m = 1.0;
    {
      const int n = static_cast<int>(std::ceil(kTwoPi / max_step));
      const double hh = kTwoPi / n;
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double k1 = homogeneous(s, m);
        const double k2 = homogeneous(s + 0.5 * hh, m + 0.5 * hh * k1);
        const double k3 = homogeneous(s + 0.5 * hh, m + 0.5 * hh * k2);
        const double k4 = homogeneous(s + hh, m + hh * k3);
        m += hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s = (i + 1) * hh;
      }
    }
    if (std::abs(1.0 - m) < 1e-12) {
      throw Error(ErrorKind::InconsistentParameterization, "periodic rho^2 is not unique");
    }
    y(0) = c / (1.0 - m);
    for (int i = 1; i < grid_size; ++i) {
      y(i) = detail::rk4_rho_squared(field, h * (i - 1), y(i - 1), h * i, max_step);
    }
  } else {
    std::vector<double> anchor_values;
    for (double sa : anchors) {
      const double b = rd.beta(sa);
      const double g = rd.gamma(sa);
      if (b == 0.0 || !(-g / b > 0.0)) {
        throw Error(ErrorKind::InfeasibleOrbit,
                    "anchoring condition beta rho^2 + gamma = 0 has no positive solution at s = " +
                        std::to_string(sa));
      }
      anchor_values.push_back(-g / b);
    }
    const std::size_t k = anchors.size();
    for (std::size_t a = 0; a < k; ++a) {
      const double left = anchors[a];
      const double right = (a + 1 < k) ? anchors[a + 1] : anchors[0] + kTwoPi;
      const double mid = 0.5 * (left + right);
      const double y_left = anchor_values[a];
      const double y_right = anchor_values[(a + 1) % k];

      // Grid node indices in (left, right), unwrapped.
      const int first = static_cast<int>(std::floor(left / h)) + 1;
      const int last = static_cast<int>(std::ceil(right / h)) - 1;
      const auto assign = [&](int idx, double value) {
        y(((idx % grid_size) + grid_size) % grid_size) = value;
      };
      if (std::abs(left - h * (first - 1)) < 1e-13) assign(first - 1, y_left);

      double s_cur = left;
      double y_cur = y_left;
      int idx = first;
      for (; idx <= last && h * idx <= mid; ++idx) {
        y_cur = detail::rk4_rho_squared(field, s_cur, y_cur, h * idx, max_step);
        s_cur = h * idx;
        assign(idx, y_cur);
      }
      const double y_mid_forward = detail::rk4_rho_squared(field, s_cur, y_cur, mid, max_step);

      s_cur = right;
      y_cur = y_right;
      for (int j = last; j >= idx; --j) {
        y_cur = detail::rk4_rho_squared(field, s_cur, y_cur, h * j, max_step);
        s_cur = h * j;
        assign(j, y_cur);
      }
      const double y_mid_backward = detail::rk4_rho_squared(field, s_cur, y_cur, mid, max_step);
      const double scale = std::max({std::abs(y_mid_forward), std::abs(y_mid_backward), 1e-300});
      const double rel = std::abs(y_mid_forward - y_mid_backward) / scale;
      mismatch.push_back(rel);
      if (!(rel <= 1e-4)) {
        throw Error(ErrorKind::InconsistentParameterization,
                    "continuations from neighbouring singular points disagree (relative mismatch " +
                        std::to_string(rel) + ")");
      }
    }
  }

  Eigen::VectorXd rho(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    double v = y(i);
    if (!std::isfinite(v) || v < -1e-10) {
      throw Error(ErrorKind::InfeasibleOrbit, "rho^2 becomes negative at s = " + std::to_string(h * i));
    }
    v = std::max(v, 0.0);
    if (v == 0.0) throw Error(ErrorKind::InfeasibleOrbit, "rho vanishes at s = " + std::to_string(h * i));
    rho(i) = std::sqrt(v);
  }
  VelocityProfile profile(rho);
  profile.stitch_mismatch = std::move(mismatch);
  profile.anchors = anchors;
  return profile;
}

/// Residual of the integral form of the passive-row identity between s0 and s1,
/// by composite Gauss-Legendre quadrature. Both ends must lie in one regular interval.
inline double integral_identity_residual(const ReducedDynamics& rd, const VelocityProfile& profile,
                                         double s0, double s1, int panels = 64) {
  static constexpr std::array<double, 5> nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                  0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> weights = {0.2369268850561891, 0.4786286704993665,
                                                    0.5688888888888889, 0.4786286704993665,
                                                    0.2369268850561891};
  const auto quad = [&](auto&& f, double a, double b) {
    double total = 0.0;
    const double w = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const double lo = a + p * w;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        total += 0.5 * w * weights[k] * f(lo + 0.5 * w * (nodes[k] + 1.0));
      }
    }
    return total;
  };
  const auto inner = [&](double t) {
    return quad([&](double sigma) { return 2.0 * rd.delta(sigma) / rd.alpha(sigma); }, s0, t);
  };
  const double a0 = rd.alpha(s0);
  const double a1 = rd.alpha(s1);
  const double r0 = profile.rho(s0);
  const double r1 = profile.rho(s1);
  const double outer = quad([&](double tau) { return std::exp(inner(tau)) * rd.alpha(tau) * rd.gamma(tau); },
                            s0, s1);
  return 0.5 * std::exp(inner(s1)) * a1 * a1 * r1 * r1 - 0.5 * a0 * a0 * r0 * r0 + outer;
}

// ---------------------------------------------------------------------------
// Orbit parameterization x_s(s) = (Phi(s), Phi'(s) rho(s))
// ---------------------------------------------------------------------------

class OrbitParameterization {
 public:
  OrbitParameterization(PhiTemplate phi, VelocityProfile rho)
      : phi_(std::move(phi)), rho_(std::move(rho)) {}

  int n_q() const { return phi_.n_q; }
  double period() const { return kTwoPi; }
  const PhiTemplate& phi_template() const { return phi_; }
  const VelocityProfile& profile() const { return rho_; }
  const std::map<std::string, double>& params() const { return phi_.params; }

  std::array<Vec, 4> phi(double s) const { return phi_.eval(wrap_periodic(s)); }
  double rho(double s) const { return rho_.rho(s); }
  double drho(double s) const { return rho_.drho(s); }
  double ddrho(double s) const { return rho_.ddrho(s); }

  /// Lambda = Phi' rho' + Phi'' rho.
  Vec lambda(double s) const {
    const auto d = phi(s);
    return d[1] * drho(s) + d[2] * rho(s);
  }

  Vec lambda_prime(double s) const {
    const auto d = phi(s);
    const double r = rho(s);
    const double dr = drho(s);
    const double ddr = ddrho(s);
    return d[2] * dr + d[1] * ddr + d[3] * r + d[2] * dr;
  }

  Vec xs(double s) const {
    const auto d = phi(s);
    Vec out(2 * n_q());
    out << d[0], d[1] * rho(s);
    return out;
  }

  Vec xs_prime(double s) const {
    const auto d = phi(s);
    Vec out(2 * n_q());
    out << d[1], d[1] * drho(s) + d[2] * rho(s);
    return out;
  }

  Vec xs_second(double s) const {
    const auto d = phi(s);
    Vec out(2 * n_q());
    out << d[2], lambda_prime(s);
    return out;
  }

 private:
  PhiTemplate phi_;
  VelocityProfile rho_;
};

inline Vec eval_xs(const OrbitParameterization& orbit, double s) { return orbit.xs(s); }
inline Vec eval_xs_prime(const OrbitParameterization& orbit, double s) { return orbit.xs_prime(s); }
inline Vec eval_xs_second(const OrbitParameterization& orbit, double s) { return orbit.xs_second(s); }

/// U(q, q', s) along a given orbit.
inline Vec eval_U(const MechanicalSystem& sys, const Vec& q, const Vec& qdot, double s,
                  const OrbitParameterization& orbit) {
  return eval_U(sys, q, qdot, Vec(orbit.lambda(s) * orbit.rho(s)));
}

/// Same quantity through the velocity-error split
/// U(q, q', s) = U(q, Phi' rho, s) + C(q, z) z + 2 C(q, Phi' rho) z + F(q) z, z = q' - Phi' rho.
inline Vec eval_U_decomposed(const MechanicalSystem& sys, const Vec& q, const Vec& qdot, double s,
                             const OrbitParameterization& orbit) {
  const Vec nominal_velocity = orbit.phi(s)[1] * orbit.rho(s);
  const Vec z = qdot - nominal_velocity;
  return eval_U(sys, q, nominal_velocity, s, orbit) + sys.coriolis_matrix(q, z) * z +
         2.0 * sys.coriolis_matrix(q, nominal_velocity) * z + sys.friction_matrix(q) * z;
}

/// u_*(s) = B^dagger U(Phi, Phi' rho, s).
inline Vec nominal_input(const MechanicalSystem& sys, const OrbitParameterization& orbit, double s) {
  const auto d = orbit.phi(s);
  return sys.input_left_inverse * eval_U(sys, d[0], Vec(d[1] * orbit.rho(s)), s, orbit);
}

/// Builds the orbit for a constraint curve: reduced dynamics, then rho.
inline OrbitParameterization plan_orbit(const MechanicalSystem& sys, const PhiTemplate& phi,
                                        int grid_size = 2048) {
  const auto rd = reduced_dynamics(sys, phi);
  return OrbitParameterization(phi, solve_rho(rd, grid_size));
}

/// Period of the nominal motion, T = integral of ds / rho(s).
inline double orbit_period(const OrbitParameterization& orbit, int samples = 4096) {
  double total = 0.0;
  const double h = kTwoPi / samples;
  for (int i = 0; i < samples; ++i) total += h / orbit.rho(h * (i + 0.5));
  return total;
}

}  // namespace orbistab
