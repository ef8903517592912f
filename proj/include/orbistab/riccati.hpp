#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "orbistab/errors.hpp"
#include "orbistab/fourier.hpp"
#include "orbistab/spline.hpp"
#include "orbistab/tvlin.hpp"

namespace orbistab {

struct SolverConfig {
  Mat Q;                           ///< empty means identity of the state dimension
  Mat Gamma;                       ///< empty means 0.1 * identity of the input dimension
  double kappa = 0.1;
  int fourier_order = 40;
  int collocation_points = 0;      ///< 0 means 4N + 1
  double psd_margin = 0.0;
  double residual_tol = 2e-4;
  int max_outer_iterations = 60;

  int verification_grid = 2048;
  int floquet_steps = 4096;
  /// Periodic backward sweep used to initialise the coefficients.
  int sweep_steps = 4096;
  int max_sweeps = 400;
  double sweep_tol = 1e-11;
  /// Decay rate imposed on the tangential mode during the sweep (0 means 1 + kappa).
  double tangent_decay = 0.0;
  /// Weight of the gauge penalty on R x_s' (pins the component Omega cannot see).
  double gauge_weight = 1.0;
  double psd_weight = 1e3;

  int nodes() const { return collocation_points > 0 ? collocation_points : 4 * fourier_order + 1; }

  /// Fills defaults for the given dimensions and checks the solver hypotheses.
  void resolve(int n, int m) {
    if (Q.size() == 0) Q = Mat::Identity(n, n);
    if (Gamma.size() == 0) Gamma = 0.1 * Mat::Identity(m, m);
    if (Q.rows() != n || Q.cols() != n) throw Error(ErrorKind::Config, "riccati.Q has the wrong shape");
    if (Gamma.rows() != m || Gamma.cols() != m)
      throw Error(ErrorKind::Config, "riccati.Gamma has the wrong shape");
    auto spd = [](const Mat& a) {
      if ((a - a.transpose()).norm() > 1e-12 * (1.0 + a.norm())) return false;
      return Eigen::SelfAdjointEigenSolver<Mat>(a).eigenvalues().minCoeff() > 0.0;
    };
    if (!spd(Q)) throw Error(ErrorKind::Config, "riccati.Q must be symmetric positive definite");
    if (!spd(Gamma)) throw Error(ErrorKind::Config, "riccati.Gamma must be symmetric positive definite");
    if (!(kappa >= 0.0)) throw Error(ErrorKind::Config, "riccati.kappa must be non-negative");
    if (fourier_order < 0) throw Error(ErrorKind::Config, "riccati.fourier_order must be non-negative");
    if (nodes() < 2 * fourier_order + 1)
      throw Error(ErrorKind::Config, "riccati collocation_points must be at least 2N+1");
    if (psd_margin < 0.0) throw Error(ErrorKind::Config, "riccati.psd_margin must be non-negative");
    if (!(residual_tol > 0.0)) throw Error(ErrorKind::Config, "riccati.residual_tol must be positive");
  }
};

/// Upper-triangular entries (i <= j) of a symmetric n x n matrix, row-major.
inline std::vector<std::pair<int, int>> symmetric_entries(int n) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out.emplace_back(i, j);
  return out;
}

struct FloquetReport {
  Mat monodromy;
  std::vector<std::complex<double>> multipliers;
  /// Index of the multiplier carried by the tangential direction, -1 when the
  /// linearization has no tangential direction (e.g. a plain LTI embedding).
  int tangent_index = -1;
  /// Angle between the tangent-mode right eigenvector and x_s'(0), radians.
  double tangent_angle = 0.0;
  /// Angle between the tangent-mode left eigenvector and DP(0)^T, radians.
  double tangent_left_angle = 0.0;
  std::vector<std::complex<double>> transverse;

  double transverse_radius() const {
    double r = 0.0;
    for (const auto& z : transverse) r = std::max(r, std::abs(z));
    return r;
  }
  bool transverse_stable() const { return transverse_radius() < 1.0; }
};

/// Symmetric Fourier-parameterized R(s) and the derived feedback K(s) = -Gamma^{-1} B_perp(s)^T R(s).
class GainSchedule {
 public:
  GainSchedule() = default;

  /// coefficients: one row per symmetric entry (symmetric_entries order), 2N+1 columns.
  GainSchedule(std::shared_ptr<const TransverseLinearization> tv, Mat coefficients, Mat gamma)
      : tv_(std::move(tv)), coef_(std::move(coefficients)), gamma_inv_(gamma.inverse()) {
    n_ = tv_ ? tv_->state_dim() : 0;
    const auto entries = symmetric_entries(n_);
    if (static_cast<Eigen::Index>(entries.size()) != coef_.rows() || coef_.cols() % 2 != 1)
      throw Error(ErrorKind::Config, "gain schedule coefficients have the wrong shape");
    basis_.order = static_cast<int>(coef_.cols() / 2);
  }

  int order() const { return basis_.order; }
  int state_dim() const { return n_; }
  const Mat& coefficients() const { return coef_; }
  const TransverseLinearization& linearization() const { return *tv_; }
  std::shared_ptr<const TransverseLinearization> linearization_ptr() const { return tv_; }
  Mat gamma_inverse() const { return gamma_inv_; }

  Mat R(double s) const { return assemble(coef_ * basis_.values(s)); }
  Mat dR(double s) const { return assemble(coef_ * basis_.derivatives(s)); }
  Mat K(double s) const { return -gamma_inv_ * tv_->b_perp(s).transpose() * R(s); }
  Mat K(const TransversePoint& p, double s) const { return -gamma_inv_ * p.b_perp.transpose() * R(s); }

  /// Filled in by the solver.
  std::vector<double> residual_profile;  ///< Frobenius norm of the projected residual on the verification grid
  double achieved_residual = 0.0;
  double nodal_residual = 0.0;
  int iterations = 0;
  FloquetReport floquet;

 private:
  Mat assemble(const Vec& entries) const {
    Mat r(n_, n_);
    int k = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) {
        r(i, j) = entries(k);
        r(j, i) = entries(k);
        ++k;
      }
    return r;
  }

  std::shared_ptr<const TransverseLinearization> tv_;
  Mat coef_;
  Mat gamma_inv_;
  TrigBasis basis_;
  int n_ = 0;
};

/// Omega^T [R' rho + A^T R + R A + Q + kappa R - R B Gamma^{-1} B^T R] Omega at one point.
inline Mat pre_residual(const TransversePoint& p, const Mat& R, const Mat& dR, const SolverConfig& cfg) {
  const Mat s_mat = p.b_perp * cfg.Gamma.llt().solve(p.b_perp.transpose());
  const Mat inner = dR * p.rho + p.a_perp.transpose() * R + R * p.a_perp + cfg.Q + cfg.kappa * R - R * s_mat * R;
  return p.omega.transpose() * inner * p.omega;
}

inline Mat pre_residual(const TransverseLinearization& tv, const GainSchedule& gs, const SolverConfig& cfg,
                        double s) {
  return pre_residual(tv.at(s), gs.R(s), gs.dR(s), cfg);
}

/// Max Frobenius norm of the projected residual over a uniform grid; fills `profile` if given.
inline double max_residual(const TransverseLinearization& tv, const GainSchedule& gs, const SolverConfig& cfg,
                           int grid, std::vector<double>* profile = nullptr) {
  double worst = 0.0;
  if (profile) profile->assign(grid, 0.0);
  for (int i = 0; i < grid; ++i) {
    const double s = kTwoPi * i / grid;
    const double r = pre_residual(tv, gs, cfg, s).norm();
    if (profile) (*profile)[i] = r;
    worst = std::max(worst, r);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Floquet analysis

namespace detail {

inline double vector_angle(const Eigen::VectorXcd& v, const Vec& t) {
  const double nv = v.norm();
  const double nt = t.norm();
  if (nv == 0.0 || nt == 0.0) return M_PI / 2;
  const double c = std::min(1.0, std::abs(v.dot(t.cast<std::complex<double>>())) / (nv * nt));
  return std::acos(c);
}

/// Integrates dW/ds = A(s) W / rho(s) over one period with RK4.
template <typename ClosedMatrix>
Mat monodromy(const TransverseLinearization& tv, ClosedMatrix&& a_cl, int steps) {
  const int n = tv.state_dim();
  Mat w = Mat::Identity(n, n);
  const double h = kTwoPi / steps;
  auto rate = [&](double s, const Mat& x) -> Mat {
    const TransversePoint p = tv.at(s);
    return a_cl(p, s) * x / p.rho;
  };
  for (int k = 0; k < steps; ++k) {
    const double s = k * h;
    const Mat k1 = rate(s, w);
    const Mat k2 = rate(s + 0.5 * h, w + 0.5 * h * k1);
    const Mat k3 = rate(s + 0.5 * h, w + 0.5 * h * k2);
    const Mat k4 = rate(s + h, w + h * k3);
    w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!w.allFinite()) throw Error(ErrorKind::Numeric, "monodromy integration produced non-finite values");
  return w;
}

inline FloquetReport classify(const TransverseLinearization& tv, Mat w) {
  FloquetReport rep;
  rep.monodromy = std::move(w);
  Eigen::EigenSolver<Mat> right(rep.monodromy);
  Eigen::EigenSolver<Mat> left(Mat(rep.monodromy.transpose()));
  const Eigen::VectorXcd lam = right.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) rep.multipliers.push_back(lam(i));

  const TransversePoint p0 = tv.at(0.0);
  if (p0.dp.norm() > 0.0) {
    // DP(0) is a left eigenvector of the monodromy: the tangential coordinate
    // DP x evolves autonomously. Pick the left eigenvector best aligned with it.
    const Vec dpt = p0.dp.transpose();
    const Eigen::VectorXcd lam_left = left.eigenvalues();
    Eigen::Index best_left = 0;
    double best_angle = 10.0;
    for (Eigen::Index i = 0; i < lam_left.size(); ++i) {
      const double a = vector_angle(left.eigenvectors().col(i), dpt);
      if (a < best_angle) {
        best_angle = a;
        best_left = i;
      }
    }
    rep.tangent_left_angle = best_angle;
    Eigen::Index idx = 0;
    double gap = 1e300;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      const double d = std::abs(lam(i) - lam_left(best_left));
      if (d < gap) {
        gap = d;
        idx = i;
      }
    }
    rep.tangent_index = static_cast<int>(idx);
    rep.tangent_angle = vector_angle(right.eigenvectors().col(idx), p0.tangent);
  }
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (i != rep.tangent_index) rep.transverse.push_back(lam(i));
  return rep;
}

}  // namespace detail

/// Closed-loop multipliers for dx/dt = (A_perp - B_perp Gamma^{-1} B_perp^T R) x over one period.
inline FloquetReport floquet_multipliers(const TransverseLinearization& tv, const GainSchedule& gs,
                                         int steps = 4096) {
  auto a_cl = [&](const TransversePoint& p, double s) -> Mat { return p.a_perp + p.b_perp * gs.K(p, s); };
  return detail::classify(tv, detail::monodromy(tv, a_cl, steps));
}

/// Multipliers of A_perp alone (v = 0).
inline FloquetReport open_loop_multipliers(const TransverseLinearization& tv, int steps = 4096) {
  auto a_ol = [](const TransversePoint& p, double) -> Mat { return p.a_perp; };
  return detail::classify(tv, detail::monodromy(tv, a_ol, steps));
}

// ---------------------------------------------------------------------------
// Solver

namespace detail {

/// Orthonormal basis of ker(dp); identity when dp vanishes.
inline Mat kernel_basis(const Eigen::RowVectorXd& dp) {
  const auto n = dp.size();
  if (dp.norm() == 0.0) return Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(Mat(dp), Eigen::ComputeFullV);
  return svd.matrixV().rightCols(n - 1);
}

/// Orthogonal projector onto ker(dp).
inline Mat kernel_projector(const Eigen::RowVectorXd& dp) {
  const auto n = dp.size();
  const double nn = dp.squaredNorm();
  if (nn == 0.0) return Mat::Identity(n, n);
  return Mat::Identity(n, n) - dp.transpose() * dp / nn;
}

/// Periodic solution of the standard differential Riccati equation for the
/// modified matrix A~ = A_perp Omega + (DP A_perp x_s' - lambda) x_s' DP, whose
/// tangential mode decays at rate lambda. After sandwiching by Omega it solves the
/// projected equation, so it is a consistent starting point. Returns samples of R on
/// `samples` uniform points, replaced by Omega^T R Omega so that R x_s' = 0. That gauge
/// only involves smooth quantities; the orthogonal projector onto ker DP carries
/// 1/|DP| and would put slowly decaying harmonics into R.
inline std::vector<Mat> periodic_sweep(const TransverseLinearization& tv, const SolverConfig& cfg, int samples) {
  const int n = tv.state_dim();
  const double lambda = cfg.tangent_decay > 0.0 ? cfg.tangent_decay : 1.0 + cfg.kappa;
  const Mat gamma_inv = cfg.Gamma.inverse();
  int steps = std::max(cfg.sweep_steps, samples);
  steps = ((steps + samples - 1) / samples) * samples;
  const int stride = steps / samples;
  const double h = kTwoPi / steps;

  auto rate = [&](double s, const Mat& r) -> Mat {
    const TransversePoint p = tv.at(s);
    Mat a = p.a_perp;
    if (p.dp.norm() > 0.0) {
      const double c = (p.dp * p.a_perp * p.tangent)(0, 0) - lambda;
      a = p.a_perp * p.omega + c * p.tangent * p.dp;
    }
    const Mat sm = p.b_perp * gamma_inv * p.b_perp.transpose();
    const Mat rhs = a.transpose() * r + r * a + cfg.Q + cfg.kappa * r - r * sm * r;
    return -rhs / p.rho;  // dR/ds
  };

  Mat r = Mat::Zero(n, n);
  std::vector<Mat> stored(samples, Mat::Zero(n, n));
  bool converged = false;
  for (int sweep = 0; sweep < cfg.max_sweeps && !converged; ++sweep) {
    const Mat start = r;
    for (int k = steps; k > 0; --k) {
      const double s = k * h;
      const Mat k1 = rate(s, r);
      const Mat k2 = rate(s - 0.5 * h, r - 0.5 * h * k1);
      const Mat k3 = rate(s - 0.5 * h, r - 0.5 * h * k2);
      const Mat k4 = rate(s - h, r - h * k3);
      r -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      r = 0.5 * (r + r.transpose()).eval();
      if ((k - 1) % stride == 0) stored[(k - 1) / stride] = r;
    }
    if (!r.allFinite()) throw Error(ErrorKind::NoCertificate, "periodic Riccati sweep diverged");
    converged = (r - start).norm() <= cfg.sweep_tol * (1.0 + r.norm());
  }
  if (!converged)
    throw Error(ErrorKind::NoCertificate,
                "periodic Riccati sweep did not settle; the transverse pair may not be stabilizable");
  for (int i = 0; i < samples; ++i) {
    const Mat om = tv.at(kTwoPi * i / samples).omega;
    stored[i] = om.transpose() * stored[i] * om;
  }
  return stored;
}

struct CollocationNode {
  double s = 0.0;
  TransversePoint p;
  Mat S;       ///< B Gamma^{-1} B^T
  Mat kernel;  ///< orthonormal basis of ker DP
  Vec phi;     ///< basis values
  Vec dphi;    ///< basis derivatives
};

/// Nonlinear least squares over the Fourier coefficients with Levenberg-Marquardt.
class CollocationProblem {
 public:
  CollocationProblem(const TransverseLinearization& tv, const SolverConfig& cfg)
      : cfg_(cfg), n_(tv.state_dim()), entries_(symmetric_entries(n_)) {
    basis_.order = cfg.fourier_order;
    const int m = cfg.nodes();
    const Mat gamma_inv = cfg.Gamma.inverse();
    nodes_.resize(m);
    for (int i = 0; i < m; ++i) {
      auto& nd = nodes_[i];
      nd.s = kTwoPi * i / m;
      nd.p = tv.at(nd.s);
      nd.S = nd.p.b_perp * gamma_inv * nd.p.b_perp.transpose();
      nd.kernel = kernel_basis(nd.p.dp);
      nd.phi.resize(basis_.size());
      nd.dphi.resize(basis_.size());
      basis_.eval(nd.s, nd.phi, &nd.dphi);
    }
  }

  int unknowns() const { return static_cast<int>(entries_.size()) * basis_.size(); }
  int rows_per_node() const { return static_cast<int>(entries_.size()) + n_ + 1; }
  int rows() const { return rows_per_node() * static_cast<int>(nodes_.size()); }

  Mat assemble(const Vec& e) const {
    Mat r(n_, n_);
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      r(entries_[k].first, entries_[k].second) = e(k);
      r(entries_[k].second, entries_[k].first) = e(k);
    }
    return r;
  }

  Mat coefficients_matrix(const Vec& p) const {
    return Eigen::Map<const Mat>(p.data(), basis_.size(), static_cast<Eigen::Index>(entries_.size())).transpose();
  }
  Vec pack(const Mat& coef) const {
    Mat t = coef.transpose();
    return Eigen::Map<const Vec>(t.data(), t.size());
  }

  /// Residual vector and optionally the Jacobian. Also reports the max nodal Frobenius residual.
  Vec evaluate(const Vec& p, Mat* jac, double* nodal_max) const {
    const Mat coef = coefficients_matrix(p);
    const int ne = static_cast<int>(entries_.size());
    const int nb = basis_.size();
    const int rpn = rows_per_node();
    Vec res = Vec::Zero(rows());
    if (jac) jac->setZero(rows(), unknowns());
    double worst = 0.0;
    std::vector<Mat> unit(ne);
    for (int e = 0; e < ne; ++e) {
      unit[e] = Mat::Zero(n_, n_);
      unit[e](entries_[e].first, entries_[e].second) = 1.0;
      unit[e](entries_[e].second, entries_[e].first) = 1.0;
    }
    for (std::size_t m = 0; m < nodes_.size(); ++m) {
      const auto& nd = nodes_[m];
      const Mat R = assemble(coef * nd.phi);
      const Mat dR = assemble(coef * nd.dphi);
      const Mat& om = nd.p.omega;
      const Mat acl = nd.p.a_perp - nd.S * R;
      const Mat inner = dR * nd.p.rho + nd.p.a_perp.transpose() * R + R * nd.p.a_perp + cfg_.Q +
                        cfg_.kappa * R - R * nd.S * R;
      const Mat E = om.transpose() * inner * om;
      worst = std::max(worst, E.norm());
      const int base = static_cast<int>(m) * rpn;
      for (int e = 0; e < ne; ++e) {
        const auto [i, j] = entries_[e];
        res(base + e) = (i == j ? 1.0 : M_SQRT2) * E(i, j);
      }
      const Vec rt_gauge = R * nd.p.tangent;
      for (int i = 0; i < n_; ++i) res(base + ne + i) = cfg_.gauge_weight * rt_gauge(i);

      // Eigenvalue floor on the transverse block.
      const Mat rt = nd.kernel.transpose() * R * nd.kernel;
      Eigen::SelfAdjointEigenSolver<Mat> eig(rt);
      const double lmin = eig.eigenvalues()(0);
      const bool psd_active = lmin < cfg_.psd_margin;
      if (psd_active) res(base + ne + n_) = cfg_.psd_weight * (cfg_.psd_margin - lmin);

      if (!jac) continue;
      const Vec vmin = nd.kernel * eig.eigenvectors().col(0);
      for (int e = 0; e < ne; ++e) {
        const Mat& U = unit[e];
        const Mat g0 = om.transpose() * (acl.transpose() * U + U * acl + cfg_.kappa * U) * om;
        const Mat g1 = nd.p.rho * om.transpose() * U * om;
        Vec v0(ne), v1(ne);
        for (int f = 0; f < ne; ++f) {
          const auto [i, j] = entries_[f];
          const double w = i == j ? 1.0 : M_SQRT2;
          v0(f) = w * g0(i, j);
          v1(f) = w * g1(i, j);
        }
        const Vec kd = cfg_.gauge_weight * (U * nd.p.tangent);
        const double pd = psd_active ? -cfg_.psd_weight * vmin.dot(U * vmin) : 0.0;
        for (int k = 0; k < nb; ++k) {
          const int col = e * nb + k;
          jac->block(base, col, ne, 1) = v0 * nd.phi(k) + v1 * nd.dphi(k);
          jac->block(base + ne, col, n_, 1) = kd * nd.phi(k);
          (*jac)(base + ne + n_, col) = pd * nd.phi(k);
        }
      }
    }
    if (nodal_max) *nodal_max = worst;
    return res;
  }

  const TrigBasis& basis() const { return basis_; }

 private:
  const SolverConfig& cfg_;
  int n_;
  std::vector<std::pair<int, int>> entries_;
  TrigBasis basis_;
  std::vector<CollocationNode> nodes_;
};

}  // namespace detail

/// Outcome of a solve before the certificate checks turn it into an error.
struct SolveReport {
  GainSchedule schedule;
  bool residual_ok = false;
  bool psd_ok = false;
  bool floquet_ok = false;
  double min_eigenvalue = 0.0;
  ErrorKind failure = ErrorKind::Numeric;
  std::string message;

  bool ok() const { return residual_ok && psd_ok && floquet_ok; }
};

inline SolveReport solve_report(std::shared_ptr<const TransverseLinearization> tv, SolverConfig cfg) {
  const TransverseLinearization& lin = *tv;
  cfg.resolve(lin.state_dim(), lin.input_dim());
  const int n = lin.state_dim();
  const auto entries = symmetric_entries(n);
  TrigBasis basis{cfg.fourier_order};

  // Initial coefficients from the periodic sweep.
  int samples = 1024;
  while (samples < 4 * basis.size()) samples *= 2;
  const std::vector<Mat> sweep = detail::periodic_sweep(lin, cfg, samples);
  Mat coef(static_cast<Eigen::Index>(entries.size()), basis.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    Vec f(samples);
    for (int i = 0; i < samples; ++i) f(i) = sweep[i](entries[e].first, entries[e].second);
    coef.row(static_cast<Eigen::Index>(e)) = basis.fit(f).transpose();
  }

  detail::CollocationProblem prob(lin, cfg);
  Vec p = prob.pack(coef);
  Mat jac;
  double nodal = 0.0;
  Vec r = prob.evaluate(p, &jac, &nodal);
  double cost = 0.5 * r.squaredNorm();
  double mu = -1.0;
  double nu = 2.0;
  int it = 0;
  for (; it < cfg.max_outer_iterations; ++it) {
    if (nodal <= 1e-3 * cfg.residual_tol) break;
    const Mat jtj = jac.transpose() * jac;
    const Vec g = jac.transpose() * r;
    if (mu < 0.0) mu = 1e-8 * jtj.diagonal().maxCoeff();
    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Mat lhs = jtj;
      lhs.diagonal().array() += mu;
      const Vec step = -lhs.ldlt().solve(g);
      const Vec p_new = p + step;
      double nodal_new = 0.0;
      const Vec r_new = prob.evaluate(p_new, nullptr, &nodal_new);
      const double cost_new = 0.5 * r_new.squaredNorm();
      const double predicted = -(g.dot(step) + 0.5 * step.dot(jtj * step));
      const double gain = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
      if (std::isfinite(cost_new) && cost_new < cost) {
        accepted = true;
        const double rel = (cost - cost_new) / std::max(cost, 1e-300);
        p = p_new;
        cost = cost_new;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * gain - 1.0, 3));
        nu = 2.0;
        r = prob.evaluate(p, &jac, &nodal);
        if (rel < 1e-12) it = cfg.max_outer_iterations;  // stagnation
      } else {
        mu *= nu;
        nu *= 2.0;
      }
    }
    if (!accepted) break;
  }

  SolveReport rep;
  rep.schedule = GainSchedule(tv, prob.coefficients_matrix(p), cfg.Gamma);
  GainSchedule& gs = rep.schedule;
  gs.iterations = std::min(it, cfg.max_outer_iterations);
  gs.nodal_residual = nodal;
  gs.achieved_residual = max_residual(lin, gs, cfg, cfg.verification_grid, &gs.residual_profile);
  rep.residual_ok = gs.achieved_residual <= cfg.residual_tol;

  double lmin = 1e300;
  for (int i = 0; i < 1024; ++i) {
    const Mat R = gs.R(kTwoPi * i / 1024);
    lmin = std::min(lmin, Eigen::SelfAdjointEigenSolver<Mat>(R).eigenvalues()(0));
  }
  rep.min_eigenvalue = lmin;
  rep.psd_ok = lmin >= -1e-6;

  gs.floquet = floquet_multipliers(lin, gs, cfg.floquet_steps);
  rep.floquet_ok = gs.floquet.transverse_stable();

  char buf[256];
  if (!rep.residual_ok) {
    rep.failure = ErrorKind::NoCertificate;
    std::snprintf(buf, sizeof buf, "projected Riccati residual %.3e exceeds tolerance %.3e", gs.achieved_residual,
                  cfg.residual_tol);
  } else if (!rep.psd_ok) {
    rep.failure = ErrorKind::InfeasiblePsd;
    std::snprintf(buf, sizeof buf, "R(s) has eigenvalue %.3e below -1e-6", lmin);
  } else if (!rep.floquet_ok) {
    rep.failure = ErrorKind::VerificationFailed;
    std::snprintf(buf, sizeof buf, "closed loop has a transverse multiplier of modulus %.6f",
                  gs.floquet.transverse_radius());
  } else {
    buf[0] = '\0';
  }
  rep.message = buf;
  return rep;
}

/// Solves the projected periodic Riccati equation and certifies the result.
inline GainSchedule solve(std::shared_ptr<const TransverseLinearization> tv, const SolverConfig& cfg) {
  SolveReport rep = solve_report(std::move(tv), cfg);
  if (!rep.ok()) {
    if (rep.failure == ErrorKind::NoCertificate)
      throw ConvergenceError(rep.failure, rep.message, rep.schedule.achieved_residual);
    throw Error(rep.failure, rep.message);
  }
  return std::move(rep.schedule);
}

// ---------------------------------------------------------------------------
// Lyapunov decrease

struct LyapunovReport {
  int samples = 0;
  double max_vdot = 0.0;            ///< largest closed-form V-dot (should be negative)
  double max_relative_error = 0.0;  ///< closed form vs finite differences along the flow
  double min_bound_margin = 0.0;    ///< min of (-lambda_min(Q) - V-dot) over samples
  bool decreasing() const { return max_vdot < 0.0; }
};

/// Compares V-dot = d^T(-Q - kappa R - R S R)d with a central difference of V = d^T R d
/// along the linear closed-loop flow, for random s and unit transverse d (DP d = 0).
inline LyapunovReport lyapunov_decrease_check(const TransverseLinearization& tv, const GainSchedule& gs,
                                              SolverConfig cfg, int samples, std::uint64_t seed = 1) {
  cfg.resolve(tv.state_dim(), tv.input_dim());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, kTwoPi);
  std::normal_distribution<double> gauss;
  const double qmin = Eigen::SelfAdjointEigenSolver<Mat>(cfg.Q).eigenvalues()(0);
  const int n = tv.state_dim();
  LyapunovReport rep;
  rep.samples = samples;
  rep.max_vdot = -1e300;
  rep.min_bound_margin = 1e300;

  auto flow = [&](double s, const Vec& d) -> Vec {
    const TransversePoint p = tv.at(s);
    return (p.a_perp + p.b_perp * gs.K(p, s)) * d;
  };
  for (int k = 0; k < samples; ++k) {
    const double s0 = unif(rng);
    const TransversePoint p = tv.at(s0);
    Vec d(n);
    for (int i = 0; i < n; ++i) d(i) = gauss(rng);
    d = detail::kernel_projector(p.dp) * d;
    d.normalize();

    const Mat R = gs.R(s0);
    const Mat S = p.b_perp * gs.gamma_inverse() * p.b_perp.transpose();
    const double vdot = d.dot((-cfg.Q - cfg.kappa * R - R * S * R) * d);

    // V(t) = d(t)^T R(s(t)) d(t) with ds/dt = rho(s) and dd/dt = A_cl d; RK4 in t.
    const double h = 1e-4;
    auto advance = [&](double dt) {
      double s = s0;
      Vec x = d;
      const int sub = 4;
      const double step = dt / sub;
      for (int j = 0; j < sub; ++j) {
        const double r1 = tv.at(s).rho;
        const Vec k1 = flow(s, x);
        const double r2 = tv.at(s + 0.5 * step * r1).rho;
        const Vec k2 = flow(s + 0.5 * step * r1, x + 0.5 * step * k1);
        const double r3 = tv.at(s + 0.5 * step * r2).rho;
        const Vec k3 = flow(s + 0.5 * step * r2, x + 0.5 * step * k2);
        const double r4 = tv.at(s + step * r3).rho;
        const Vec k4 = flow(s + step * r3, x + step * k3);
        s += step / 6.0 * (r1 + 2 * r2 + 2 * r3 + r4);
        x += step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
      return x.dot(gs.R(s) * x);
    };
    const double fd = (advance(h) - advance(-h)) / (2.0 * h);
    rep.max_vdot = std::max(rep.max_vdot, vdot);
    rep.max_relative_error = std::max(rep.max_relative_error, std::abs(fd - vdot) / std::abs(vdot));
    rep.min_bound_margin = std::min(rep.min_bound_margin, -qmin - vdot);
  }
  if (!rep.decreasing())
    throw Error(ErrorKind::DecreaseViolated, "Lyapunov derivative is non-negative on a transverse sample");
  return rep;
}

}  // namespace orbistab
