#pragma once

#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace orbistab {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps s into [0, period).
inline double wrap_periodic(double s, double period = kTwoPi) {
  double r = std::fmod(s, period);
  if (r < 0.0) r += period;
  if (r >= period) r = 0.0;
  return r;
}

/// Minimal signed representative of an angle difference, in (-pi, pi].
inline double wrap_signed(double d) {
  d = std::remainder(d, kTwoPi);
  if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

/// C2 periodic cubic spline through uniformly spaced nodes s_i = i * period / n.
/// Each column of the value matrix is an independent channel.
class PeriodicSpline {
 public:
  PeriodicSpline() = default;

  PeriodicSpline(Eigen::MatrixXd values, double period = kTwoPi)
      : period_(period), values_(std::move(values)) {
    const auto n = values_.rows();
    if (n < 4) throw std::invalid_argument("periodic spline needs at least 4 nodes");
    h_ = period_ / static_cast<double>(n);
    solve_second_derivatives();
  }

  int nodes() const { return static_cast<int>(values_.rows()); }
  int channels() const { return static_cast<int>(values_.cols()); }
  double period() const { return period_; }
  double node(int i) const { return h_ * i; }
  const Eigen::MatrixXd& values() const { return values_; }

  /// Derivative of order 0, 1 or 2 of every channel at s.
  Eigen::VectorXd eval(double s, int order = 0) const {
    Eigen::VectorXd out(values_.cols());
    eval_into(s, order, out);
    return out;
  }

  template <typename Out>
  void eval_into(double s, int order, Out&& out) const {
    const double w = wrap_periodic(s, period_);
    const auto n = values_.rows();
    auto i = static_cast<Eigen::Index>(std::floor(w / h_));
    if (i >= n) i = n - 1;
    const Eigen::Index j = (i + 1) % n;
    const double b = (w - h_ * static_cast<double>(i)) / h_;
    const double a = 1.0 - b;
    switch (order) {
      case 0: {
        const double ca = (a * a * a - a) * h_ * h_ / 6.0;
        const double cb = (b * b * b - b) * h_ * h_ / 6.0;
        out = a * values_.row(i).transpose() + b * values_.row(j).transpose() +
              ca * second_.row(i).transpose() + cb * second_.row(j).transpose();
        break;
      }
      case 1: {
        const double ca = -(3.0 * a * a - 1.0) * h_ / 6.0;
        const double cb = (3.0 * b * b - 1.0) * h_ / 6.0;
        out = (values_.row(j) - values_.row(i)).transpose() / h_ +
              ca * second_.row(i).transpose() + cb * second_.row(j).transpose();
        break;
      }
      case 2:
        out = a * second_.row(i).transpose() + b * second_.row(j).transpose();
        break;
      default:
        throw std::invalid_argument("spline derivative order must be 0, 1 or 2");
    }
  }

 private:
  // Cyclic tridiagonal system M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}) / h^2,
  // solved with the Sherman-Morrison correction to a plain Thomas sweep.
  void solve_second_derivatives() {
    const auto n = values_.rows();
    Eigen::MatrixXd rhs(n, values_.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto prev = (i + n - 1) % n;
      const auto next = (i + 1) % n;
      rhs.row(i) = 6.0 * (values_.row(next) - 2.0 * values_.row(i) + values_.row(prev)) / (h_ * h_);
    }
    const double gamma = -4.0;
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, 4.0);
    diag(0) -= gamma;
    diag(n - 1) -= 1.0 / gamma;  // alpha * beta / gamma with alpha = beta = 1
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    u(0) = gamma;
    u(n - 1) = 1.0;

    const Eigen::MatrixXd y = thomas(diag, rhs);
    const Eigen::VectorXd z = thomas(diag, u);
    const double denom = 1.0 + z(0) + z(n - 1) / gamma;
    second_ = y;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      const double fact = (y(0, c) + y(n - 1, c) / gamma) / denom;
      second_.col(c) -= fact * z;
    }
  }

  // Unit off-diagonals.
  template <typename Rhs>
  static Eigen::Matrix<double, Eigen::Dynamic, Rhs::ColsAtCompileTime> thomas(
      const Eigen::VectorXd& diag, const Rhs& rhs) {
    const auto n = diag.size();
    Eigen::VectorXd cprime(n);
    Eigen::Matrix<double, Eigen::Dynamic, Rhs::ColsAtCompileTime> d = rhs;
    cprime(0) = 1.0 / diag(0);
    d.row(0) /= diag(0);
    for (Eigen::Index i = 1; i < n; ++i) {
      const double m = diag(i) - cprime(i - 1);
      cprime(i) = 1.0 / m;
      d.row(i) = (d.row(i) - d.row(i - 1)) / m;
    }
    for (Eigen::Index i = n - 2; i >= 0; --i) d.row(i) -= cprime(i) * d.row(i + 1);
    return d;
  }

  double period_ = kTwoPi;
  double h_ = 0.0;
  Eigen::MatrixXd values_;
  Eigen::MatrixXd second_;
};

}  // namespace orbistab
