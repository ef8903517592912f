#pragma once

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <optional>

#include "orbistab/errors.hpp"
#include "orbistab/orbit.hpp"

namespace orbistab {

enum class ProjectionVariant { ImplicitPhase, MinDistance };

inline const char* to_string(ProjectionVariant v) {
  return v == ProjectionVariant::ImplicitPhase ? "implicit_phase" : "min_distance";
}

struct ProjectionResult {
  double s = 0.0;
  Vec x_perp;
  int iterations = 0;
  double residual = 0.0;
};

/// Recovers the orbit parameter s = P(x) from a state near the orbit.
///
/// Both variants define P implicitly through a scalar condition h(x, s) = 0:
///  - ImplicitPhase: h = s - atan2(-theta'/(a rho(s)), theta/a) for curves whose phase
///    coordinate is theta = a cos s (the pendulum angle of the cosine template);
///  - MinDistance: h = x_s'(s)^T V(s) (x - x_s(s)), the stationarity condition of the
///    V-weighted distance to the orbit.
/// DP follows from the implicit-function theorem, DP = -(dh/ds)^{-1} dh/dx.
class ProjectionOperator {
 public:
  using WeightMap = std::function<Mat(double s)>;

  struct Options {
    int max_iter = 50;
    double tol = 1e-12;
    int seed_nodes = 512;
  };

  static ProjectionOperator implicit_phase(std::shared_ptr<const OrbitParameterization> orbit,
                                           Options opts, int phase_index = 1) {
    ProjectionOperator op(ProjectionVariant::ImplicitPhase, std::move(orbit), opts);
    const auto it = op.orbit_->params().find("a2");
    if (it == op.orbit_->params().end() || !(it->second > 0.0)) {
      throw Error(ErrorKind::NotApplicable, "implicit-phase projection needs a positive amplitude a2");
    }
    op.amplitude_ = it->second;
    op.phase_index_ = phase_index;
    return op;
  }

  static ProjectionOperator implicit_phase(std::shared_ptr<const OrbitParameterization> orbit) {
    return implicit_phase(std::move(orbit), Options{});
  }

  /// Constant or s-dependent weight; defaults to the identity.
  static ProjectionOperator min_distance(std::shared_ptr<const OrbitParameterization> orbit,
                                         Options opts, WeightMap weight = {}) {
    ProjectionOperator op(ProjectionVariant::MinDistance, std::move(orbit), opts);
    op.weight_ = std::move(weight);
    return op;
  }

  static ProjectionOperator min_distance(std::shared_ptr<const OrbitParameterization> orbit) {
    return min_distance(std::move(orbit), Options{});
  }

  ProjectionVariant variant() const { return variant_; }
  const OrbitParameterization& orbit() const { return *orbit_; }
  std::shared_ptr<const OrbitParameterization> orbit_ptr() const { return orbit_; }
  const Options& options() const { return opts_; }
  int dim() const { return 2 * orbit_->n_q(); }

  /// Scalar condition h(x, s) and its partials.
  struct Condition {
    double value = 0.0;
    double ds = 0.0;
    Eigen::RowVectorXd dx;
  };

  Condition condition(const Vec& x, double s) const {
    return variant_ == ProjectionVariant::ImplicitPhase ? phase_condition(x, s)
                                                        : distance_condition(x, s);
  }

  ProjectionResult project(const Vec& x, std::optional<double> hint = std::nullopt) const {
    if (x.size() != dim() || !x.allFinite()) {
      throw Error(ErrorKind::Numeric, "projection input has wrong size or non-finite entries");
    }
    double s = hint ? wrap_periodic(*hint) : seed(x);
    ProjectionResult res;
    double best = std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
      const Condition c = condition(x, s);
      best = std::min(best, std::abs(c.value));
      if (std::abs(c.value) <= opts_.tol) {
        res.iterations = it;
        res.residual = std::abs(c.value);
        break;
      }
      if (it >= opts_.max_iter) {
        throw ConvergenceError(ErrorKind::OutsideNeighborhood,
                               "projection did not converge; state outside the tubular neighbourhood",
                               best);
      }
      if (!(std::abs(c.ds) >= 1e-10)) {
        throw ConvergenceError(ErrorKind::ImplicitFunctionViolation,
                               "derivative of the projection condition vanishes", best);
      }
      double step = c.value / c.ds;
      step = std::clamp(step, -0.5, 0.5);
      s = wrap_periodic(s - step);
    }
    res.s = s;
    res.x_perp = x - orbit_->xs(s);
    return res;
  }

  /// Full Jacobian DP(x) at an arbitrary state in the neighbourhood.
  Eigen::RowVectorXd dP(const Vec& x, std::optional<double> hint = std::nullopt) const {
    const auto r = project(x, hint);
    return jacobian_at(x, r.s);
  }

  Eigen::RowVectorXd jacobian_at(const Vec& x, double s) const {
    const Condition c = condition(x, s);
    if (!(std::abs(c.ds) >= 1e-10)) {
      throw Error(ErrorKind::ImplicitFunctionViolation, "derivative of the projection condition vanishes");
    }
    return -c.dx / c.ds;
  }

  Eigen::RowVectorXd dP_on_orbit(double s) const { return jacobian_at(orbit_->xs(s), s); }

  /// Central differences of DP around x_s(s), before symmetrization.
  Mat d2P_on_orbit_raw(double s) const {
    const Vec x0 = orbit_->xs(s);
    const double eps = 1e-5 * (1.0 + x0.norm());
    const int n = dim();
    Mat h(n, n);
    for (int i = 0; i < n; ++i) {
      Vec xp = x0;
      Vec xm = x0;
      xp(i) += eps;
      xm(i) -= eps;
      h.row(i) = (dP(xp, s) - dP(xm, s)) / (2.0 * eps);
    }
    return h;
  }

  Mat d2P_on_orbit(double s) const {
    const Mat h = d2P_on_orbit_raw(s);
    return 0.5 * (h + h.transpose());
  }

  Mat omega_matrix(double s) const {
    return Mat::Identity(dim(), dim()) - orbit_->xs_prime(s) * dP_on_orbit(s);
  }

 private:
  ProjectionOperator(ProjectionVariant v, std::shared_ptr<const OrbitParameterization> orbit, Options opts)
      : variant_(v), orbit_(std::move(orbit)), opts_(opts) {
    if (!orbit_) throw Error(ErrorKind::Config, "projection needs an orbit");
    const int n = std::max(8, opts_.seed_nodes);
    seed_states_.resize(dim(), n);
    for (int i = 0; i < n; ++i) seed_states_.col(i) = orbit_->xs(kTwoPi * i / n);
  }

  Mat weight(double s) const {
    return weight_ ? weight_(wrap_periodic(s)) : Mat::Identity(dim(), dim());
  }

  double weighted_distance(const Vec& x, int node) const {
    const Vec d = x - seed_states_.col(node);
    if (variant_ == ProjectionVariant::MinDistance && weight_) {
      return d.dot(weight(kTwoPi * node / seed_states_.cols()) * d);
    }
    return d.squaredNorm();
  }

  // Nearest seed node, refined by a parabola through its neighbours.
  double seed(const Vec& x) const {
    const int n = static_cast<int>(seed_states_.cols());
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double d = weighted_distance(x, i);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    const double h = kTwoPi / n;
    const double dm = weighted_distance(x, (best + n - 1) % n);
    const double dp = weighted_distance(x, (best + 1) % n);
    const double curv = dm - 2.0 * best_d + dp;
    double offset = 0.0;
    if (curv > 0.0) offset = std::clamp(0.5 * (dm - dp) / curv, -1.0, 1.0);
    return wrap_periodic(h * (best + offset));
  }

  Condition phase_condition(const Vec& x, double s) const {
    const int nq = orbit_->n_q();
    const double theta = x(phase_index_);
    const double theta_dot = x(nq + phase_index_);
    const double r = orbit_->rho(s);
    const double dr = orbit_->drho(s);
    const double a = amplitude_;
    const double cx = theta / a;
    const double cy = -theta_dot / (a * r);
    const double r2 = cx * cx + cy * cy;
    Condition c;
    c.dx = Eigen::RowVectorXd::Zero(dim());
    if (r2 == 0.0) {
      c.value = std::numeric_limits<double>::infinity();
      c.ds = 0.0;
      return c;
    }
    c.value = wrap_signed(s - std::atan2(cy, cx));
    const double dcy_ds = theta_dot * dr / (a * r * r);
    c.ds = 1.0 - cx / r2 * dcy_ds;
    c.dx(phase_index_) = cy / (r2 * a);
    c.dx(nq + phase_index_) = cx / (r2 * a * r);
    return c;
  }

  Condition distance_condition(const Vec& x, double s) const {
    const Vec xs = orbit_->xs(s);
    const Vec d1 = orbit_->xs_prime(s);
    const Vec d2 = orbit_->xs_second(s);
    const Mat v = weight(s);
    const Vec e = x - xs;
    Condition c;
    c.value = d1.dot(v * e);
    c.ds = d2.dot(v * e) - d1.dot(v * d1);
    if (weight_) {
      constexpr double hs = 1e-6;
      const Mat dv = (weight(s + hs) - weight(s - hs)) / (2.0 * hs);
      c.ds += d1.dot(dv * e);
    }
    c.dx = (v.transpose() * d1).transpose();
    return c;
  }

  ProjectionVariant variant_;
  std::shared_ptr<const OrbitParameterization> orbit_;
  Options opts_;
  Mat seed_states_;
  WeightMap weight_;
  double amplitude_ = 0.0;
  int phase_index_ = 1;
};

inline ProjectionResult project(const ProjectionOperator& op, const Vec& x,
                                std::optional<double> hint = std::nullopt) {
  return op.project(x, hint);
}

inline Eigen::RowVectorXd dP_on_orbit(const ProjectionOperator& op, double s) { return op.dP_on_orbit(s); }
inline Mat d2P_on_orbit(const ProjectionOperator& op, double s) { return op.d2P_on_orbit(s); }
inline Mat omega_matrix(const ProjectionOperator& op, double s) { return op.omega_matrix(s); }

}  // namespace orbistab
