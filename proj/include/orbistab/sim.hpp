#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "orbistab/errors.hpp"
#include "orbistab/riccati.hpp"

namespace orbistab {

// ---------------------------------------------------------------------------
// Measurement noise
//
// Draw k of channel c (k counts control steps, c counts state channels) uses the
// counter i = k * channels + c. Two uniforms come from SplitMix64 applied to
// seed + (2i + 1) * 0x9E3779B97F4A7C15 and seed + (2i + 2) * 0x9E3779B97F4A7C15,
// taking the top 53 bits as u in (0, 1]; Box-Muller with the cosine branch gives
// the standard normal, which is then scaled by std[c]. Everything is integer
// arithmetic plus log/sqrt/cos, so a seed reproduces the same stream anywhere.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(seed + counter * 0x9E3779B97F4A7C15ULL);
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

inline double noise_draw(std::uint64_t seed, std::uint64_t index) {
  const double u1 = detail::counter_uniform(seed, 2 * index + 1);
  const double u2 = detail::counter_uniform(seed, 2 * index + 2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

/// Noise vector for control step k.
inline Vec noise_sample(std::uint64_t seed, const Vec& std_dev, std::uint64_t k) {
  const auto n = static_cast<std::uint64_t>(std_dev.size());
  Vec out(std_dev.size());
  for (std::uint64_t c = 0; c < n; ++c)
    out(static_cast<Eigen::Index>(c)) = std_dev(static_cast<Eigen::Index>(c)) == 0.0
                                            ? 0.0
                                            : std_dev(static_cast<Eigen::Index>(c)) * noise_draw(seed, k * n + c);
  return out;
}

inline std::vector<Vec> noise_stream(std::uint64_t seed, const Vec& std_dev, std::size_t count) {
  std::vector<Vec> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(noise_sample(seed, std_dev, k));
  return out;
}

// ---------------------------------------------------------------------------

enum class Integrator { Rk4, Rk45 };
enum class ControllerMode { ClosedLoop, OpenLoopReplay, None };

inline const char* to_string(Integrator i) { return i == Integrator::Rk4 ? "rk4" : "rk45"; }
inline const char* to_string(ControllerMode m) {
  switch (m) {
    case ControllerMode::ClosedLoop: return "closed_loop";
    case ControllerMode::OpenLoopReplay: return "open_loop";
    case ControllerMode::None: return "none";
  }
  return "unknown";
}

struct SimConfig {
  Vec initial_state;
  double duration = 20.0;
  double step = 1e-3;
  double sample_interval = 1e-2;
  Integrator integrator = Integrator::Rk4;
  Vec noise_std;  ///< empty means no noise; one entry broadcasts to all channels
  std::uint64_t rng_seed = 1;
  ControllerMode controller = ControllerMode::ClosedLoop;
  FeedforwardChoice feedforward = FeedforwardChoice::Mixed;
  double convergence_threshold = 0.01;
  double blowup_limit = 1e6;

  void validate(int n) const {
    if (initial_state.size() != n) throw Error(ErrorKind::Config, "simulation.initial_state has the wrong size");
    if (!initial_state.allFinite()) throw Error(ErrorKind::Config, "simulation.initial_state must be finite");
    if (!(step > 0.0) || !std::isfinite(step)) throw Error(ErrorKind::Config, "simulation.step must be positive");
    if (!(duration > 0.0) || !std::isfinite(duration))
      throw Error(ErrorKind::Config, "simulation.duration must be positive");
    if (!(sample_interval >= step)) throw Error(ErrorKind::Config, "simulation.sample_interval must be >= step");
    const double ratio = sample_interval / step;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
      throw Error(ErrorKind::Config, "simulation.sample_interval must be a multiple of step");
    const double count = duration / sample_interval;
    if (std::abs(count - std::round(count)) > 1e-9 * count)
      throw Error(ErrorKind::Config, "simulation.duration must be a multiple of sample_interval");
    if (noise_std.size() != 0 && noise_std.size() != 1 && noise_std.size() != n)
      throw Error(ErrorKind::Config, "simulation.noise_std must have 1 or 2*n_q entries");
    if (noise_std.size() && (noise_std.array() < 0.0).any())
      throw Error(ErrorKind::Config, "simulation.noise_std must be non-negative");
  }

  Vec noise_vector(int n) const {
    if (noise_std.size() == 0) return Vec::Zero(n);
    if (noise_std.size() == 1) return Vec::Constant(n, noise_std(0));
    return noise_std;
  }
};

struct TraceRecord {
  double t = 0.0;
  Vec x;           ///< true state
  Vec x_measured;
  double s = 0.0;  ///< projection of the true state
  Vec x_perp;
  Vec u;
  Vec v;
  double V = 0.0;
  double norm_x_perp = 0.0;
};

struct SimulationTrace {
  std::vector<TraceRecord> records;
  std::optional<double> convergence_time;
  double period = 0.0;
  bool complete = false;

  double max_norm_x_perp() const {
    double m = 0.0;
    for (const auto& r : records) m = std::max(m, r.norm_x_perp);
    return m;
  }
};

/// Projection lost or state left the tube; carries the trace up to the failure.
class EscapedTubeError : public Error {
 public:
  EscapedTubeError(const std::string& what, SimulationTrace partial)
      : Error(ErrorKind::EscapedTube, what), partial_(std::move(partial)) {}
  const SimulationTrace& partial() const noexcept { return partial_; }

 private:
  SimulationTrace partial_;
};

class BlowupError : public Error {
 public:
  BlowupError(const std::string& what, SimulationTrace partial)
      : Error(ErrorKind::NumericBlowup, what), partial_(std::move(partial)) {}
  const SimulationTrace& partial() const noexcept { return partial_; }

 private:
  SimulationTrace partial_;
};

/// First sampled t from which ||x_perp|| stays below the threshold until the end of
/// the trace, provided at least one orbit period of samples confirms it.
inline std::optional<double> convergence_time(const std::vector<TraceRecord>& records, double threshold,
                                              double period) {
  if (records.empty()) return std::nullopt;
  std::size_t first = records.size();
  for (std::size_t i = records.size(); i-- > 0;) {
    if (records[i].norm_x_perp >= threshold) break;
    first = i;
  }
  if (first == records.size()) return std::nullopt;
  if (records.back().t - records[first].t < period) return std::nullopt;
  return records[first].t;
}

namespace detail {

class ClosedLoop {
 public:
  ClosedLoop(const MechanicalSystem& sys, const OrbitParameterization& orbit, const ProjectionOperator& op,
             const GainSchedule* gs, const SimConfig& cfg)
      : sys_(sys), orbit_(orbit), op_(op), gs_(gs), cfg_(cfg) {}

  struct Control {
    Vec u;
    Vec v;
    double s = 0.0;
  };

  /// Control for the measured state; `hint` is the last known phase.
  Control control(const Vec& xm, double nominal_s) {
    Control c;
    switch (cfg_.controller) {
      case ControllerMode::ClosedLoop: {
        const auto proj = op_.project(xm, hint_);
        hint_ = proj.s;
        c.s = proj.s;
        c.v = gs_->K(proj.s) * proj.x_perp;
        c.u = feedforward_input(sys_, orbit_, cfg_.feedforward, xm, proj.s) + c.v;
        break;
      }
      case ControllerMode::OpenLoopReplay:
        c.s = nominal_s;
        c.v = Vec::Zero(sys_.n_u);
        c.u = nominal_input(sys_, orbit_, nominal_s);
        break;
      case ControllerMode::None:
        c.s = nominal_s;
        c.v = Vec::Zero(sys_.n_u);
        c.u = Vec::Zero(sys_.n_u);
        break;
    }
    return c;
  }

  /// Augmented rate: state plus the nominal phase (used by the replay mode).
  Vec rate(const Vec& z, const Vec& noise) {
    const int n = 2 * sys_.n_q;
    const Vec x = z.head(n);
    const Control c = control(x + noise, z(n));
    Vec dz(n + 1);
    dz.head(n) = forward_dynamics(sys_, x, c.u);
    dz(n) = orbit_.rho(z(n));
    return dz;
  }

  std::optional<double> hint_;

 private:
  const MechanicalSystem& sys_;
  const OrbitParameterization& orbit_;
  const ProjectionOperator& op_;
  const GainSchedule* gs_;
  const SimConfig& cfg_;
};

}  // namespace detail

/// Integrates the true state under the selected controller. Noise is added to the
/// measured state only and held constant over each integration step.
inline SimulationTrace simulate(const MechanicalSystem& sys, const OrbitParameterization& orbit,
                                const ProjectionOperator& op, const GainSchedule* gs, const SimConfig& cfg) {
  const int n = 2 * sys.n_q;
  cfg.validate(n);
  if (cfg.controller == ControllerMode::ClosedLoop && gs == nullptr)
    throw Error(ErrorKind::Config, "closed-loop simulation needs a gain schedule");

  const Vec noise_std = cfg.noise_vector(n);
  const long steps_per_sample = std::lround(cfg.sample_interval / cfg.step);
  const long samples = std::lround(cfg.duration / cfg.sample_interval);

  SimulationTrace trace;
  trace.period = orbit_period(orbit);
  detail::ClosedLoop loop(sys, orbit, op, gs, cfg);
  std::optional<double> record_hint;

  Vec z(n + 1);
  z.head(n) = cfg.initial_state;
  try {
    z(n) = op.project(cfg.initial_state).s;
  } catch (const Error& e) {
    throw EscapedTubeError(std::string("initial state cannot be projected onto the orbit: ") + e.what(), trace);
  }

  auto record = [&](double t, const Vec& noise) {
    TraceRecord r;
    r.t = t;
    r.x = z.head(n);
    r.x_measured = r.x + noise;
    const auto c = loop.control(r.x_measured, z(n));
    r.u = c.u;
    r.v = c.v;
    const auto proj = op.project(r.x, record_hint ? record_hint : std::optional<double>(c.s));
    record_hint = proj.s;
    r.s = proj.s;
    r.x_perp = proj.x_perp;
    r.norm_x_perp = proj.x_perp.norm();
    r.V = gs ? proj.x_perp.dot(gs->R(proj.s) * proj.x_perp) : 0.0;
    trace.records.push_back(std::move(r));
  };

  namespace ode = boost::numeric::odeint;
  using State = std::vector<double>;
  auto dopri = ode::make_controlled(1e-10, 1e-8, ode::runge_kutta_dopri5<State>());

  const double h = cfg.step;
  std::uint64_t k = 0;
  try {
    for (long i = 0; i <= samples; ++i) {
      const double t = static_cast<double>(i) * cfg.sample_interval;
      record(t, noise_sample(cfg.rng_seed, noise_std, k));
      if (i == samples) break;
      for (long j = 0; j < steps_per_sample; ++j, ++k) {
        const Vec noise = noise_sample(cfg.rng_seed, noise_std, k);
        const double t0 = static_cast<double>(k) * h;
        if (cfg.integrator == Integrator::Rk4) {
          const Vec k1 = loop.rate(z, noise);
          const Vec k2 = loop.rate(z + 0.5 * h * k1, noise);
          const Vec k3 = loop.rate(z + 0.5 * h * k2, noise);
          const Vec k4 = loop.rate(z + h * k3, noise);
          z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        } else {
          State st(z.data(), z.data() + z.size());
          auto rhs = [&](const State& x, State& dx, double) {
            const Vec dz = loop.rate(Eigen::Map<const Vec>(x.data(), n + 1), noise);
            dx.assign(dz.data(), dz.data() + dz.size());
          };
          ode::integrate_adaptive(dopri, rhs, st, t0, t0 + h, h);
          z = Eigen::Map<const Vec>(st.data(), n + 1);
        }
        if (!z.allFinite() || z.head(n).cwiseAbs().maxCoeff() > cfg.blowup_limit)
          throw BlowupError("state became non-finite or exceeded the blow-up limit", trace);
      }
    }
  } catch (const ConvergenceError& e) {
    throw EscapedTubeError(std::string("state left the projection tube: ") + e.what(), trace);
  }
  trace.complete = true;
  trace.convergence_time = convergence_time(trace.records, cfg.convergence_threshold, trace.period);
  return trace;
}

}  // namespace orbistab
