#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace orbistab {

/// Real trigonometric basis of order N on [0, 2pi):
/// {1, cos s, sin s, cos 2s, sin 2s, ..., cos Ns, sin Ns}.
struct TrigBasis {
  int order = 0;

  int size() const { return 2 * order + 1; }

  /// Basis values (and optionally first derivatives) at s, via angle-addition recurrences.
  void eval(double s, Eigen::Ref<Eigen::VectorXd> value, Eigen::VectorXd* deriv = nullptr) const {
    value(0) = 1.0;
    if (deriv) (*deriv)(0) = 0.0;
    const double c1 = std::cos(s);
    const double s1 = std::sin(s);
    double ck = 1.0;
    double sk = 0.0;
    for (int k = 1; k <= order; ++k) {
      const double cn = ck * c1 - sk * s1;
      const double sn = sk * c1 + ck * s1;
      ck = cn;
      sk = sn;
      value(2 * k - 1) = ck;
      value(2 * k) = sk;
      if (deriv) {
        (*deriv)(2 * k - 1) = -k * sk;
        (*deriv)(2 * k) = k * ck;
      }
    }
  }

  Eigen::VectorXd values(double s) const {
    Eigen::VectorXd v(size());
    eval(s, v);
    return v;
  }

  Eigen::VectorXd derivatives(double s) const {
    Eigen::VectorXd v(size());
    Eigen::VectorXd d(size());
    eval(s, v, &d);
    return d;
  }

  /// Least-squares coefficients from uniform samples f(2 pi i / L), L > 2N.
  Eigen::VectorXd fit(const Eigen::VectorXd& samples) const {
    const auto l = samples.size();
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(size());
    Eigen::VectorXd v(size());
    for (Eigen::Index i = 0; i < l; ++i) {
      eval(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(l), v);
      coef += samples(i) * v;
    }
    coef(0) /= static_cast<double>(l);
    coef.tail(size() - 1) *= 2.0 / static_cast<double>(l);
    return coef;
  }
};

}  // namespace orbistab
