#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "robinshape/error.hpp"
#include "robinshape/harness/profiles.hpp"
#include "robinshape/map_laplace.hpp"
#include "robinshape/mala.hpp"

namespace robinshape::harness {

using json = nlohmann::ordered_json;

struct MeshResolution {
  int nx = 0;
  int ny = 0;
  bool operator==(const MeshResolution&) const = default;
};

struct PriorConfig {
  int p = 7;
  double sigma_alpha2 = 0.01;
  double s_alpha = -1.0;
  double delta_beta2 = 50.0;
  double l = 10.0;
  bool operator==(const PriorConfig&) const = default;
};

struct NoiseConfig {
  double percent = 1.0;
  std::string range = "global";  // or "per_load"
  bool operator==(const NoiseConfig&) const = default;
};

struct SensorConfig {
  int count = 32;
  std::string placement = "midpoint";  // or "explicit"
  std::vector<double> positions;
  bool operator==(const SensorConfig&) const = default;
};

struct MalaConfig {
  std::int64_t burn_in = 10000;
  std::int64_t check_interval = 5000;
  std::int64_t max_samples = 400000;
  int chains = 1;
  bool adapt_after_burn_in = true;
  double stopping_threshold = 0.1;
  double confidence = 0.98;
  double initial_tau = 0.0;  // 0 picks the dimension-based default
  double target_accept = 0.574;
  double step_exponent = 0.6;
  double covariance_exponent = 1.0;
  double covariance_offset = 100.0;
  int refresh_interval = 100;
  bool operator==(const MalaConfig&) const = default;
};

struct GaussNewtonConfig {
  int max_iterations = 100;
  double gradient_reduction = 1e5;
  double absolute_gradient = 1e-10;
  double c1 = 1e-4;
  double c2 = 0.9;
  bool curvature_check = false;
  double backtrack = 0.5;
  int max_backtracks = 40;
  bool operator==(const GaussNewtonConfig&) const = default;
};

struct ExperimentConfig {
  double L = 1.0;
  double H = 0.05;
  int loads = 8;
  SensorConfig sensors;
  MeshResolution data_mesh{229, 10};
  MeshResolution inversion_mesh{77, 7};
  TruthSpec truth = default_truth("example1");
  PriorConfig prior;
  NoiseConfig noise;
  GaussNewtonConfig gauss_newton;
  MalaConfig mala;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  [[nodiscard]] std::vector<double> sensor_positions() const {
    if (sensors.placement == "explicit") return sensors.positions;
    return default_sensors(sensors.count, L);
  }

  [[nodiscard]] GaussNewtonOptions gn_options() const {
    GaussNewtonOptions o;
    o.max_iterations = gauss_newton.max_iterations;
    o.gradient_reduction = gauss_newton.gradient_reduction;
    o.absolute_gradient = gauss_newton.absolute_gradient;
    o.c1 = gauss_newton.c1;
    o.c2 = gauss_newton.c2;
    o.curvature_check = gauss_newton.curvature_check;
    o.backtrack = gauss_newton.backtrack;
    o.max_backtracks = gauss_newton.max_backtracks;
    return o;
  }

  [[nodiscard]] MalaSchedule mala_schedule() const {
    MalaSchedule s;
    s.burn_in = mala.burn_in;
    s.check_interval = mala.check_interval;
    s.max_samples = mala.max_samples;
    s.adapt_after_burn_in = mala.adapt_after_burn_in;
    s.stopping_threshold = mala.stopping_threshold;
    s.confidence = mala.confidence;
    return s;
  }

  [[nodiscard]] AdaptSettings adapt_settings() const {
    AdaptSettings a;
    a.target_accept = mala.target_accept;
    a.step_exponent = mala.step_exponent;
    a.covariance_exponent = mala.covariance_exponent;
    a.covariance_offset = mala.covariance_offset;
    a.refresh_interval = mala.refresh_interval;
    return a;
  }
};

/// Throws ConfigError with the first violated constraint.
inline void validate(const ExperimentConfig& c) {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(c.L > 0.0 && c.H > 0.0, "geometry: L and H must be positive");
  need(c.loads >= 1, "loads must be at least 1");
  need(c.sensors.placement == "midpoint" || c.sensors.placement == "explicit",
       "sensors.placement must be 'midpoint' or 'explicit'");
  if (c.sensors.placement == "midpoint") {
    need(c.sensors.count >= 1, "sensors.count must be at least 1");
  } else {
    need(!c.sensors.positions.empty(), "sensors.positions must be given for explicit placement");
    for (double x : c.sensors.positions) need(x >= 0.0 && x <= c.L, "sensor position outside [0, L]");
  }
  for (const MeshResolution* m : {&c.data_mesh, &c.inversion_mesh}) {
    need(m->nx >= 1 && m->ny >= 1, "mesh resolutions must be at least 1");
  }
  const auto nodes = [](const MeshResolution& m) { return static_cast<double>(m.nx + 1) * (m.ny + 1); };
  need(nodes(c.data_mesh) >= 3.0 * nodes(c.inversion_mesh),
       "data mesh must have at least 3x the nodes of the inversion mesh");
  need(c.prior.p >= 0, "prior.p must be non-negative");
  need(c.prior.sigma_alpha2 > 0.0, "prior.sigma_alpha2 must be positive");
  need(c.prior.delta_beta2 > 0.0 && c.prior.l > 0.0, "prior.delta_beta2 and prior.l must be positive");
  need(c.noise.percent > 0.0, "noise.percent must be positive");
  need(c.noise.range == "global" || c.noise.range == "per_load", "noise.range must be 'global' or 'per_load'");
  need(c.gauss_newton.max_iterations >= 0 && c.gauss_newton.gradient_reduction > 1.0,
       "gauss_newton settings out of range");
  need(c.gauss_newton.c1 > 0.0 && c.gauss_newton.c1 < c.gauss_newton.c2 && c.gauss_newton.c2 < 1.0,
       "gauss_newton requires 0 < c1 < c2 < 1");
  need(c.gauss_newton.backtrack > 0.0 && c.gauss_newton.backtrack < 1.0, "gauss_newton.backtrack must be in (0, 1)");
  need(c.mala.burn_in >= 0 && c.mala.check_interval >= 1 && c.mala.max_samples >= 1, "mala schedule out of range");
  need(c.mala.chains >= 1, "mala.chains must be at least 1");
  need(c.mala.stopping_threshold > 0.0, "mala.stopping_threshold must be positive");
  need(c.mala.confidence > 0.0 && c.mala.confidence < 1.0, "mala.confidence must be in (0, 1)");
  need(c.mala.initial_tau >= 0.0, "mala.initial_tau must be non-negative");
  need(c.mala.target_accept > 0.0 && c.mala.target_accept < 1.0, "mala.target_accept must be in (0, 1)");
  need(c.mala.step_exponent > 0.5 && c.mala.step_exponent <= 1.0, "mala.step_exponent must be in (0.5, 1]");
  need(c.mala.covariance_exponent > 0.5 && c.mala.covariance_exponent <= 1.0,
       "mala.covariance_exponent must be in (0.5, 1]");
  need(c.mala.covariance_offset >= 0.0 && c.mala.refresh_interval >= 1, "mala adaptation settings out of range");
  try {
    (void)truth_profiles(c.truth, c.L);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("truth: ") + e.what());
  }
}

namespace detail {

/// Reads members of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  [[nodiscard]] const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  [[nodiscard]] std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + path_ + "." + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json to_json(const ProfileTerm& t) {
  return {{"kind", t.kind},     {"amplitude", t.amplitude}, {"center", t.center}, {"width", t.width},
          {"edge", t.edge},     {"frequency", t.frequency}, {"phase", t.phase},   {"k_min", t.k_min},
          {"k_max", t.k_max},   {"seed", t.seed}};
}

inline ProfileTerm term_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  ProfileTerm t;
  r.get("kind", t.kind);
  r.get("amplitude", t.amplitude);
  r.get("center", t.center);
  r.get("width", t.width);
  r.get("edge", t.edge);
  r.get("frequency", t.frequency);
  r.get("phase", t.phase);
  r.get("k_min", t.k_min);
  r.get("k_max", t.k_max);
  r.get("seed", t.seed);
  r.finish();
  return t;
}

inline json to_json(const ProfileSpec& p) {
  json j;
  j["base"] = p.base;
  j["terms"] = json::array();
  for (const ProfileTerm& t : p.terms) j["terms"].push_back(to_json(t));
  return j;
}

inline ProfileSpec profile_from_json(const json& j, const std::string& path, ProfileSpec p) {
  ObjectReader r(j, path);
  r.get("base", p.base);
  if (const json* terms = r.child("terms")) {
    if (!terms->is_array()) throw ConfigError(path + ".terms: expected an array");
    p.terms.clear();
    for (std::size_t i = 0; i < terms->size(); ++i) {
      p.terms.push_back(term_from_json((*terms)[i], path + ".terms[" + std::to_string(i) + "]"));
    }
  }
  r.finish();
  return p;
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["geometry"] = {{"L", c.L}, {"H", c.H}};
  j["loads"] = c.loads;
  j["sensors"] = {{"count", c.sensors.count}, {"placement", c.sensors.placement}, {"positions", c.sensors.positions}};
  j["mesh"] = {{"data", {{"nx", c.data_mesh.nx}, {"ny", c.data_mesh.ny}}},
               {"inversion", {{"nx", c.inversion_mesh.nx}, {"ny", c.inversion_mesh.ny}}}};
  j["truth"] = {{"name", c.truth.name},
                {"boundary", detail::to_json(c.truth.boundary)},
                {"robin", detail::to_json(c.truth.robin)}};
  j["prior"] = {{"p", c.prior.p},
                {"sigma_alpha2", c.prior.sigma_alpha2},
                {"s_alpha", c.prior.s_alpha},
                {"delta_beta2", c.prior.delta_beta2},
                {"l", c.prior.l}};
  j["noise"] = {{"percent", c.noise.percent}, {"range", c.noise.range}};
  const GaussNewtonConfig& g = c.gauss_newton;
  j["gauss_newton"] = {{"max_iterations", g.max_iterations}, {"gradient_reduction", g.gradient_reduction},
                       {"absolute_gradient", g.absolute_gradient}, {"c1", g.c1}, {"c2", g.c2},
                       {"curvature_check", g.curvature_check}, {"backtrack", g.backtrack},
                       {"max_backtracks", g.max_backtracks}};
  const MalaConfig& m = c.mala;
  j["mala"] = {{"burn_in", m.burn_in}, {"check_interval", m.check_interval}, {"max_samples", m.max_samples},
               {"chains", m.chains}, {"adapt_after_burn_in", m.adapt_after_burn_in},
               {"stopping_threshold", m.stopping_threshold}, {"confidence", m.confidence},
               {"initial_tau", m.initial_tau}, {"target_accept", m.target_accept},
               {"step_exponent", m.step_exponent}, {"covariance_exponent", m.covariance_exponent},
               {"covariance_offset", m.covariance_offset}, {"refresh_interval", m.refresh_interval}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

/// Missing keys keep their defaults; the truth defaults follow truth.name.
inline ExperimentConfig config_from_json(const json& j) {
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader r(j, "config");
  if (const json* g = r.child("geometry")) {
    ObjectReader gr(*g, "config.geometry");
    gr.get("L", c.L);
    gr.get("H", c.H);
    gr.finish();
  }
  r.get("loads", c.loads);
  if (const json* s = r.child("sensors")) {
    ObjectReader sr(*s, "config.sensors");
    sr.get("count", c.sensors.count);
    sr.get("placement", c.sensors.placement);
    sr.get("positions", c.sensors.positions);
    sr.finish();
  }
  if (const json* m = r.child("mesh")) {
    ObjectReader mr(*m, "config.mesh");
    for (auto [key, res] : {std::pair{"data", &c.data_mesh}, std::pair{"inversion", &c.inversion_mesh}}) {
      if (const json* x = mr.child(key)) {
        ObjectReader xr(*x, mr.path(key));
        xr.get("nx", res->nx);
        xr.get("ny", res->ny);
        xr.finish();
      }
    }
    mr.finish();
  }
  if (const json* t = r.child("truth")) {
    ObjectReader tr(*t, "config.truth");
    std::string name = c.truth.name;
    tr.get("name", name);
    try {
      c.truth = default_truth(name);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config.truth.name: ") + e.what());
    }
    if (const json* b = tr.child("boundary")) c.truth.boundary = detail::profile_from_json(*b, tr.path("boundary"), c.truth.boundary);
    if (const json* b = tr.child("robin")) c.truth.robin = detail::profile_from_json(*b, tr.path("robin"), c.truth.robin);
    tr.finish();
  }
  if (const json* p = r.child("prior")) {
    ObjectReader pr(*p, "config.prior");
    pr.get("p", c.prior.p);
    pr.get("sigma_alpha2", c.prior.sigma_alpha2);
    pr.get("s_alpha", c.prior.s_alpha);
    pr.get("delta_beta2", c.prior.delta_beta2);
    pr.get("l", c.prior.l);
    pr.finish();
  }
  if (const json* n = r.child("noise")) {
    ObjectReader nr(*n, "config.noise");
    nr.get("percent", c.noise.percent);
    nr.get("range", c.noise.range);
    nr.finish();
  }
  if (const json* g = r.child("gauss_newton")) {
    ObjectReader gr(*g, "config.gauss_newton");
    GaussNewtonConfig& o = c.gauss_newton;
    gr.get("max_iterations", o.max_iterations);
    gr.get("gradient_reduction", o.gradient_reduction);
    gr.get("absolute_gradient", o.absolute_gradient);
    gr.get("c1", o.c1);
    gr.get("c2", o.c2);
    gr.get("curvature_check", o.curvature_check);
    gr.get("backtrack", o.backtrack);
    gr.get("max_backtracks", o.max_backtracks);
    gr.finish();
  }
  if (const json* m = r.child("mala")) {
    ObjectReader mr(*m, "config.mala");
    MalaConfig& o = c.mala;
    mr.get("burn_in", o.burn_in);
    mr.get("check_interval", o.check_interval);
    mr.get("max_samples", o.max_samples);
    mr.get("chains", o.chains);
    mr.get("adapt_after_burn_in", o.adapt_after_burn_in);
    mr.get("stopping_threshold", o.stopping_threshold);
    mr.get("confidence", o.confidence);
    mr.get("initial_tau", o.initial_tau);
    mr.get("target_accept", o.target_accept);
    mr.get("step_exponent", o.step_exponent);
    mr.get("covariance_exponent", o.covariance_exponent);
    mr.get("covariance_offset", o.covariance_offset);
    mr.get("refresh_interval", o.refresh_interval);
    mr.finish();
  }
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.finish();
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Default configuration of the named example (1, 2 or 3).
inline ExperimentConfig example_config(int example) {
  if (example < 1 || example > 3) throw ConfigError("example must be 1, 2 or 3");
  ExperimentConfig c;
  c.truth = default_truth("example" + std::to_string(example));
  c.seed = static_cast<std::uint64_t>(1000 + example);
  c.output_dir = "out/example" + std::to_string(example);
  return c;
}

}  // namespace robinshape::harness
