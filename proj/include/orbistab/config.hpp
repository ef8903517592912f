#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "orbistab/io.hpp"
#include "orbistab/riccati.hpp"
#include "orbistab/sim.hpp"

namespace orbistab {

using json = nlohmann::json;

/// Everything a CLI run needs, parsed from one JSON document. All fields have
/// defaults; `effective()` returns the fully populated document that is hashed.
struct RunConfig {
  double g = 9.81;

  std::string orbit_template = "cosine_phase";
  double a2 = 0.1129;
  double cart_gain = 1.5;
  int orbit_grid = 2048;

  ProjectionVariant projection = ProjectionVariant::ImplicitPhase;
  ProjectionOperator::Options projection_options;
  Vec projection_weight;  ///< diagonal of V for min-distance; empty means identity

  FeedforwardChoice feedforward = FeedforwardChoice::Mixed;
  int linearization_grid = 512;

  SolverConfig riccati;
  SimConfig simulation;

  json effective() const;
  std::string hash() const { return io::hex64(io::fnv1a64(effective().dump())); }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw Error(ErrorKind::Config, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw Error(ErrorKind::Config, "unknown key '" + where + "." + it.key() + "'");
}

inline double finite_number(const json& v, const std::string& name) {
  if (!v.is_number()) throw Error(ErrorKind::Config, name + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorKind::Config, name + " must be finite");
  return d;
}

inline int integer(const json& v, const std::string& name) {
  if (!v.is_number_integer()) throw Error(ErrorKind::Config, name + " must be an integer");
  return v.get<int>();
}

inline Vec vector(const json& v, const std::string& name) {
  if (v.is_number()) return Vec::Constant(1, finite_number(v, name));
  if (!v.is_array()) throw Error(ErrorKind::Config, name + " must be a number or an array");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = finite_number(v[i], name);
  return out;
}

/// Square matrix from a nested array, a flat array (diagonal) or a scalar (times identity).
inline Mat matrix(const json& v, int n, const std::string& name) {
  if (v.is_number()) return finite_number(v, name) * Mat::Identity(n, n);
  if (!v.is_array() || v.size() != static_cast<std::size_t>(n))
    throw Error(ErrorKind::Config, name + " must be a scalar, a length-" + std::to_string(n) + " diagonal or an " +
                                       std::to_string(n) + "x" + std::to_string(n) + " matrix");
  if (v[0].is_number()) return vector(v, name).asDiagonal();
  Mat out(n, n);
  for (int i = 0; i < n; ++i) {
    if (!v[i].is_array() || v[i].size() != static_cast<std::size_t>(n))
      throw Error(ErrorKind::Config, name + " has a malformed row");
    for (int j = 0; j < n; ++j) out(i, j) = finite_number(v[i][j], name);
  }
  return out;
}

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace detail

inline RunConfig parse_config(const json& doc) {
  using namespace detail;
  reject_unknown(doc, "config",
                 {"spec_version", "system", "orbit", "projection", "linearization", "riccati", "simulation"});
  if (!doc.contains("spec_version")) throw Error(ErrorKind::Config, "config.spec_version is required");
  if (!doc["spec_version"].is_number_integer() || doc["spec_version"].get<int>() != 1)
    throw Error(ErrorKind::Config, "config.spec_version must be 1");

  RunConfig cfg;
  const int n = 4;  // cart-pendulum state dimension
  const int m = 1;

  if (doc.contains("system")) {
    const json& s = doc["system"];
    reject_unknown(s, "system", {"name", "g"});
    if (s.contains("name") && s["name"] != "cart_pendulum")
      throw Error(ErrorKind::Config, "system.name must be \"cart_pendulum\"");
    if (s.contains("g")) cfg.g = finite_number(s["g"], "system.g");
  }

  if (doc.contains("orbit")) {
    const json& o = doc["orbit"];
    reject_unknown(o, "orbit", {"template", "a2", "cart_gain", "grid"});
    if (o.contains("template") && o["template"] != "cosine_phase")
      throw Error(ErrorKind::Config, "orbit.template must be \"cosine_phase\"");
    if (o.contains("a2")) cfg.a2 = finite_number(o["a2"], "orbit.a2");
    if (o.contains("cart_gain")) cfg.cart_gain = finite_number(o["cart_gain"], "orbit.cart_gain");
    if (o.contains("grid")) cfg.orbit_grid = integer(o["grid"], "orbit.grid");
    if (cfg.orbit_grid < 16) throw Error(ErrorKind::Config, "orbit.grid must be at least 16");
  }

  if (doc.contains("projection")) {
    const json& p = doc["projection"];
    reject_unknown(p, "projection", {"variant", "max_iter", "tol", "weight"});
    if (p.contains("variant")) {
      const std::string v = p["variant"].is_string() ? p["variant"].get<std::string>() : "";
      if (v == "implicit_phase") cfg.projection = ProjectionVariant::ImplicitPhase;
      else if (v == "min_distance") cfg.projection = ProjectionVariant::MinDistance;
      else throw Error(ErrorKind::Config, "projection.variant must be \"implicit_phase\" or \"min_distance\"");
    }
    if (p.contains("max_iter")) cfg.projection_options.max_iter = integer(p["max_iter"], "projection.max_iter");
    if (p.contains("tol")) cfg.projection_options.tol = finite_number(p["tol"], "projection.tol");
    if (p.contains("weight")) {
      cfg.projection_weight = vector(p["weight"], "projection.weight");
      if (cfg.projection_weight.size() != n || (cfg.projection_weight.array() <= 0.0).any())
        throw Error(ErrorKind::Config, "projection.weight must be 4 positive diagonal entries");
    }
    if (cfg.projection_options.max_iter < 1 || !(cfg.projection_options.tol > 0.0))
      throw Error(ErrorKind::Config, "projection.max_iter and projection.tol must be positive");
  }

  if (doc.contains("linearization")) {
    const json& l = doc["linearization"];
    reject_unknown(l, "linearization", {"feedforward", "grid"});
    if (l.contains("feedforward")) {
      const std::string f = l["feedforward"].is_string() ? l["feedforward"].get<std::string>() : "";
      if (f == "on_orbit") cfg.feedforward = FeedforwardChoice::OnOrbit;
      else if (f == "mixed") cfg.feedforward = FeedforwardChoice::Mixed;
      else if (f == "full") cfg.feedforward = FeedforwardChoice::Full;
      else throw Error(ErrorKind::Config, "linearization.feedforward must be on_orbit, mixed or full");
    }
    if (l.contains("grid")) cfg.linearization_grid = integer(l["grid"], "linearization.grid");
    if (cfg.linearization_grid < 16) throw Error(ErrorKind::Config, "linearization.grid must be at least 16");
  }
  cfg.simulation.feedforward = cfg.feedforward;

  if (doc.contains("riccati")) {
    const json& r = doc["riccati"];
    reject_unknown(r, "riccati",
                   {"Q", "Gamma", "kappa", "fourier_order", "collocation_points", "psd_margin", "residual_tol",
                    "max_outer_iterations"});
    SolverConfig& rc = cfg.riccati;
    if (r.contains("Q")) rc.Q = matrix(r["Q"], n, "riccati.Q");
    if (r.contains("Gamma")) rc.Gamma = matrix(r["Gamma"], m, "riccati.Gamma");
    if (r.contains("kappa")) rc.kappa = finite_number(r["kappa"], "riccati.kappa");
    if (r.contains("fourier_order")) rc.fourier_order = integer(r["fourier_order"], "riccati.fourier_order");
    if (r.contains("collocation_points"))
      rc.collocation_points = integer(r["collocation_points"], "riccati.collocation_points");
    if (r.contains("psd_margin")) rc.psd_margin = finite_number(r["psd_margin"], "riccati.psd_margin");
    if (r.contains("residual_tol")) rc.residual_tol = finite_number(r["residual_tol"], "riccati.residual_tol");
    if (r.contains("max_outer_iterations"))
      rc.max_outer_iterations = integer(r["max_outer_iterations"], "riccati.max_outer_iterations");
  }
  cfg.riccati.resolve(n, m);

  SimConfig& sc = cfg.simulation;
  sc.initial_state = Vec(n);
  sc.initial_state << 0.1, 0.4, -0.1, -0.2;
  sc.noise_std = Vec::Constant(1, 1e-3);
  sc.rng_seed = 1;
  if (doc.contains("simulation")) {
    const json& s = doc["simulation"];
    reject_unknown(s, "simulation",
                   {"initial_state", "duration", "step", "sample_interval", "integrator", "noise_std", "seed",
                    "controller", "convergence_threshold"});
    if (s.contains("initial_state")) sc.initial_state = vector(s["initial_state"], "simulation.initial_state");
    if (s.contains("duration")) sc.duration = finite_number(s["duration"], "simulation.duration");
    if (s.contains("step")) sc.step = finite_number(s["step"], "simulation.step");
    if (s.contains("sample_interval"))
      sc.sample_interval = finite_number(s["sample_interval"], "simulation.sample_interval");
    if (s.contains("integrator")) {
      if (s["integrator"] == "rk4") sc.integrator = Integrator::Rk4;
      else if (s["integrator"] == "rk45") sc.integrator = Integrator::Rk45;
      else throw Error(ErrorKind::Config, "simulation.integrator must be \"rk4\" or \"rk45\"");
    }
    if (s.contains("noise_std")) sc.noise_std = vector(s["noise_std"], "simulation.noise_std");
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned() && !(s["seed"].is_number_integer() && s["seed"].get<long long>() >= 0))
        throw Error(ErrorKind::Config, "simulation.seed must be a non-negative integer");
      sc.rng_seed = s["seed"].get<std::uint64_t>();
    }
    if (s.contains("controller")) {
      if (s["controller"] == "closed_loop") sc.controller = ControllerMode::ClosedLoop;
      else if (s["controller"] == "open_loop") sc.controller = ControllerMode::OpenLoopReplay;
      else if (s["controller"] == "none") sc.controller = ControllerMode::None;
      else throw Error(ErrorKind::Config, "simulation.controller must be closed_loop, open_loop or none");
    }
    if (s.contains("convergence_threshold"))
      sc.convergence_threshold = finite_number(s["convergence_threshold"], "simulation.convergence_threshold");
  }
  sc.validate(n);
  return cfg;
}

inline json RunConfig::effective() const {
  json j;
  j["spec_version"] = 1;
  j["system"] = {{"name", "cart_pendulum"}, {"g", g}};
  j["orbit"] = {{"template", orbit_template}, {"a2", a2}, {"cart_gain", cart_gain}, {"grid", orbit_grid}};
  j["projection"] = {{"variant", to_string(projection)},
                     {"max_iter", projection_options.max_iter},
                     {"tol", projection_options.tol}};
  if (projection_weight.size()) j["projection"]["weight"] = detail::to_json(projection_weight);
  j["linearization"] = {{"feedforward", to_string(feedforward)}, {"grid", linearization_grid}};
  j["riccati"] = {{"Q", detail::to_json(riccati.Q)},
                  {"Gamma", detail::to_json(riccati.Gamma)},
                  {"kappa", riccati.kappa},
                  {"fourier_order", riccati.fourier_order},
                  {"collocation_points", riccati.nodes()},
                  {"psd_margin", riccati.psd_margin},
                  {"residual_tol", riccati.residual_tol},
                  {"max_outer_iterations", riccati.max_outer_iterations}};
  j["simulation"] = {{"initial_state", detail::to_json(simulation.initial_state)},
                     {"duration", simulation.duration},
                     {"step", simulation.step},
                     {"sample_interval", simulation.sample_interval},
                     {"integrator", to_string(simulation.integrator)},
                     {"noise_std", detail::to_json(simulation.noise_std)},
                     {"seed", simulation.rng_seed},
                     {"controller", to_string(simulation.controller)},
                     {"convergence_threshold", simulation.convergence_threshold}};
  return j;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::Config, "config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Pipeline construction from a config

struct Pipeline {
  MechanicalSystem sys;
  std::shared_ptr<OrbitParameterization> orbit;
  std::optional<ProjectionOperator> op;
  std::shared_ptr<TransverseLinearization> tv;
};

inline Pipeline build_orbit(const RunConfig& cfg) {
  Pipeline p;
  p.sys = cart_pendulum(cfg.g);
  p.orbit = std::make_shared<OrbitParameterization>(
      plan_orbit(p.sys, cosine_phase_template(cfg.a2, cfg.cart_gain), cfg.orbit_grid));
  return p;
}

inline void build_projection(const RunConfig& cfg, Pipeline& p) {
  if (cfg.projection == ProjectionVariant::ImplicitPhase) {
    p.op = ProjectionOperator::implicit_phase(p.orbit, cfg.projection_options);
  } else {
    ProjectionOperator::WeightMap w;
    if (cfg.projection_weight.size()) {
      const Mat v = cfg.projection_weight.asDiagonal();
      w = [v](double) { return v; };
    }
    p.op = ProjectionOperator::min_distance(p.orbit, cfg.projection_options, w);
  }
}

inline void build_linearization(const RunConfig& cfg, Pipeline& p) {
  p.tv = std::make_shared<TransverseLinearization>(
      build_linearization(p.sys, *p.orbit, *p.op, cfg.feedforward, cfg.linearization_grid));
}

inline Pipeline build_pipeline(const RunConfig& cfg) {
  Pipeline p = build_orbit(cfg);
  build_projection(cfg, p);
  build_linearization(cfg, p);
  return p;
}

}  // namespace orbistab
