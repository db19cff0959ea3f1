#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "robinshape/diagnostics.hpp"
#include "robinshape/error.hpp"
#include "robinshape/fem.hpp"
#include "robinshape/harness/config.hpp"
#include "robinshape/harness/io.hpp"
#include "robinshape/harness/profiles.hpp"
#include "robinshape/inverse_problem.hpp"
#include "robinshape/mala.hpp"
#include "robinshape/map_laplace.hpp"
#include "robinshape/mesh.hpp"
#include "robinshape/priors.hpp"

namespace robinshape::harness {

using Logger = std::function<void(const std::string&)>;

inline void log_line(const Logger& log, const std::string& line) {
  if (log) log(line);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Synthetic data

struct MeshInfo {
  std::string role;
  double L = 1.0, H = 0.05;
  int nx = 0, ny = 0;
  std::size_t nodes = 0;
  std::size_t trace_nodes = 0;
  bool operator==(const MeshInfo&) const = default;
};

struct SyntheticDataset {
  Eigen::VectorXd y;            // noisy, load-major
  Eigen::VectorXd y_noiseless;
  double noise_std = 0.0;       // global delta_e
  std::vector<double> noise_std_per_load;  // filled when noise.range == per_load
  double noise_percent = 1.0;
  std::vector<double> sensors;
  int n_loads = 0;
  std::uint64_t seed = 0;
  MeshInfo mesh;                // always the data-generation mesh
  TruthSpec truth;
  std::vector<double> trace_s;  // fine trace abscissae
  std::vector<double> f_true;   // truth samples at trace_s
  std::vector<double> beta_true;
};

inline SlabMesh build_mesh(const ExperimentConfig& c, const MeshResolution& r) {
  return build_slab_mesh(c.L, c.H, r.nx, r.ny);
}

/// Forward-solves the truth on the data mesh and adds Gaussian noise with
/// std delta_e = percent/100 * range of the noiseless data.
inline SyntheticDataset generate_data(const ExperimentConfig& config) {
  validate(config);
  const SlabMesh mesh = build_mesh(config, config.data_mesh);
  const TraceMesh trace = trace_of_top(mesh);
  const TruthProfiles truth = truth_profiles(config.truth, config.L);
  const TruthShape shape(truth.boundary, config.H);

  SyntheticDataset ds;
  ds.truth = config.truth;
  ds.seed = config.seed;
  ds.n_loads = config.loads;
  ds.sensors = config.sensor_positions();
  ds.noise_percent = config.noise.percent;
  ds.mesh = {"data-generation", config.L, config.H, config.data_mesh.nx, config.data_mesh.ny,
             mesh.num_nodes(), trace.size()};
  Eigen::VectorXd beta(static_cast<Eigen::Index>(trace.size()));
  for (std::size_t k = 0; k < trace.size(); ++k) {
    beta[static_cast<Eigen::Index>(k)] = truth.robin(trace.s[k]);
    ds.trace_s.push_back(trace.s[k]);
    ds.f_true.push_back(truth.boundary(trace.s[k]));
    ds.beta_true.push_back(beta[static_cast<Eigen::Index>(k)]);
  }

  const AssembledSystem system = assemble(mesh, shape, beta);
  const ForwardState state = solve_all(system, config.loads);
  ds.y_noiseless = observe(state, ds.sensors).y;

  const auto q = static_cast<Eigen::Index>(ds.sensors.size());
  const double frac = config.noise.percent / 100.0;
  ds.noise_std = frac * (ds.y_noiseless.maxCoeff() - ds.y_noiseless.minCoeff());
  Eigen::VectorXd sd = Eigen::VectorXd::Constant(ds.y_noiseless.size(), ds.noise_std);
  if (config.noise.range == "per_load") {
    for (int k = 0; k < config.loads; ++k) {
      const auto seg = ds.y_noiseless.segment(k * q, q);
      const double s = frac * (seg.maxCoeff() - seg.minCoeff());
      ds.noise_std_per_load.push_back(s);
      sd.segment(k * q, q).setConstant(s);
    }
  }
  if (!(ds.noise_std > 0.0)) throw SolverError("noiseless data has zero range; cannot set the noise level");
  std::mt19937_64 rng(config.seed);
  ds.y = ds.y_noiseless + sd.cwiseProduct(standard_normal(ds.y_noiseless.size(), rng));
  return ds;
}

inline json dataset_header(const SyntheticDataset& ds) {
  json h;
  h["format"] = "robinshape-dataset-1";
  h["seed"] = ds.seed;
  h["noise_std"] = ds.noise_std;
  h["noise_std_per_load"] = ds.noise_std_per_load;
  h["noise_percent"] = ds.noise_percent;
  h["n_loads"] = ds.n_loads;
  h["sensors"] = ds.sensors;
  h["mesh"] = {{"role", ds.mesh.role}, {"L", ds.mesh.L}, {"H", ds.mesh.H}, {"nx", ds.mesh.nx},
               {"ny", ds.mesh.ny}, {"nodes", ds.mesh.nodes}, {"trace_nodes", ds.mesh.trace_nodes}};
  h["truth"] = {{"name", ds.truth.name},
                {"boundary", detail::to_json(ds.truth.boundary)},
                {"robin", detail::to_json(ds.truth.robin)},
                {"trace_s", ds.trace_s},
                {"f", ds.f_true},
                {"beta", ds.beta_true}};
  return h;
}

/// '#' + one-line JSON header, then CSV rows load,sensor_x1,y,y_noiseless.
inline std::string dataset_text(const SyntheticDataset& ds) {
  std::string out = "#" + dataset_header(ds).dump() + "\n";
  out += "load,sensor_x1,y,y_noiseless\n";
  const auto q = static_cast<Eigen::Index>(ds.sensors.size());
  for (int k = 0; k < ds.n_loads; ++k) {
    for (Eigen::Index i = 0; i < q; ++i) {
      const Eigen::Index r = k * q + i;
      out += std::to_string(k + 1) + "," + format_double(ds.sensors[static_cast<std::size_t>(i)]) + "," +
             format_double(ds.y[r]) + "," + format_double(ds.y_noiseless[r]) + "\n";
    }
  }
  return out;
}

inline void write_dataset(const fs::path& path, const SyntheticDataset& ds) { write_atomic(path, dataset_text(ds)); }

inline SyntheticDataset parse_dataset(const std::string& text) {
  const auto nl = text.find('\n');
  if (text.empty() || text[0] != '#' || nl == std::string::npos) throw IoError("dataset has no JSON header line");
  json h;
  try {
    h = json::parse(text.substr(1, nl - 1));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("dataset header is not valid JSON: ") + e.what());
  }
  SyntheticDataset ds;
  try {
    if (h.at("format").get<std::string>() != "robinshape-dataset-1") throw IoError("unknown dataset format");
    ds.seed = h.at("seed").get<std::uint64_t>();
    ds.noise_std = h.at("noise_std").get<double>();
    ds.noise_std_per_load = h.at("noise_std_per_load").get<std::vector<double>>();
    ds.noise_percent = h.at("noise_percent").get<double>();
    ds.n_loads = h.at("n_loads").get<int>();
    ds.sensors = h.at("sensors").get<std::vector<double>>();
    const json& m = h.at("mesh");
    ds.mesh = {m.at("role").get<std::string>(),   m.at("L").get<double>(),
               m.at("H").get<double>(),           m.at("nx").get<int>(),
               m.at("ny").get<int>(),             m.at("nodes").get<std::size_t>(),
               m.at("trace_nodes").get<std::size_t>()};
    const json& t = h.at("truth");
    ds.truth.name = t.at("name").get<std::string>();
    ds.truth.boundary = detail::profile_from_json(t.at("boundary"), "truth.boundary", {});
    ds.truth.robin = detail::profile_from_json(t.at("robin"), "truth.robin", {});
    ds.trace_s = t.at("trace_s").get<std::vector<double>>();
    ds.f_true = t.at("f").get<std::vector<double>>();
    ds.beta_true = t.at("beta").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset header: ") + e.what());
  }
  const CsvTable table = parse_csv(text.substr(nl + 1));
  const std::size_t n = static_cast<std::size_t>(ds.n_loads) * ds.sensors.size();
  if (table.rows.size() != n) throw IoError("dataset row count does not match loads x sensors");
  const std::size_t cy = table.column("y"), cn = table.column("y_noiseless");
  ds.y.resize(static_cast<Eigen::Index>(n));
  ds.y_noiseless.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    ds.y[static_cast<Eigen::Index>(r)] = table.rows[r][cy];
    ds.y_noiseless[static_cast<Eigen::Index>(r)] = table.rows[r][cn];
  }
  return ds;
}

inline SyntheticDataset read_dataset(const fs::path& path) { return parse_dataset(read_file(path)); }

// ---------------------------------------------------------------------------
// Inversion setup

/// Builds the inversion-mesh posterior for `dataset`. The data mesh is never
/// used here.
inline std::shared_ptr<const InverseProblem> make_inverse_problem(const ExperimentConfig& config,
                                                                  const SyntheticDataset& dataset) {
  validate(config);
  if (dataset.n_loads != config.loads) throw ConfigError("dataset load count does not match the config");
  if (dataset.sensors != config.sensor_positions()) throw ConfigError("dataset sensors do not match the config");
  InverseProblem::Setup s;
  s.mesh = build_mesh(config, config.inversion_mesh);
  const TraceMesh trace = trace_of_top(s.mesh);
  s.p = config.prior.p;
  s.alpha_prior = build_alpha_prior(config.prior.p, config.prior.sigma_alpha2, config.prior.s_alpha);
  s.beta_prior = build_beta_prior(trace, config.prior.delta_beta2, config.prior.l);
  s.sensors = dataset.sensors;
  s.n_loads = dataset.n_loads;
  s.data = dataset.y;
  s.noise_std = dataset.noise_std;
  if (config.noise.range == "per_load") s.noise_std_per_load = dataset.noise_std_per_load;
  return std::make_shared<const InverseProblem>(std::move(s));
}

/// Fourier basis values at the trace nodes, rows = nodes.
inline Eigen::MatrixXd trace_basis(const InverseProblem& problem) {
  const FourierShape probe = FourierShape::flat(problem.p(), problem.mesh().L, problem.mesh().H);
  const TraceMesh& tr = problem.trace();
  Eigen::MatrixXd B(static_cast<Eigen::Index>(tr.size()), problem.n_alpha());
  Eigen::VectorXd b(problem.n_alpha()), s(problem.n_alpha());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    probe.basis_all(tr.s[k], b, s);
    B.row(static_cast<Eigen::Index>(k)) = b.transpose();
  }
  return B;
}

inline std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// MAP + Laplace

struct MapResult {
  Eigen::VectorXd map;
  GaussNewtonReport gn;
  LaplaceApproximation laplace;
  double wall_time = 0.0;
};

inline MapResult compute_map(const InverseProblem& problem, const GaussNewtonOptions& opts,
                             std::optional<Eigen::VectorXd> start = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  MapResult r;
  auto [m, report] = gauss_newton(problem, start ? *start : problem.prior_mean(), opts);
  r.map = std::move(m);
  r.gn = std::move(report);
  r.laplace = laplace(problem, r.map);
  r.wall_time = seconds_since(t0);
  return r;
}

inline const std::array<double, 3>& sigma_levels() {
  static const std::array<double, 3> k{1.0, 2.0, 3.0};
  return k;
}

/// Laplace envelopes: MAP +- k sigma for the boundary f and for beta, plus
/// truth interpolated at the inversion trace nodes.
inline CsvTable laplace_envelopes(const InverseProblem& problem, const MapResult& r, const SyntheticDataset& ds) {
  const Eigen::MatrixXd B = trace_basis(problem);
  const Eigen::Index na = problem.n_alpha();
  const Eigen::MatrixXd cov_a = r.laplace.covariance.topLeftCorner(na, na);
  const Eigen::VectorXd f_map = (B * problem.alpha_of(r.map)).array() + 1.0;
  const Eigen::VectorXd f_sd = (B * cov_a).cwiseProduct(B).rowwise().sum().cwiseSqrt();
  const Eigen::VectorXd beta_map = problem.beta_of(r.map);
  const Eigen::VectorXd beta_sd = r.laplace.marginal_std().tail(problem.n_beta());
  const TruthProfiles truth = truth_profiles(ds.truth, problem.mesh().L);

  CsvTable t;
  t.header = {"s", "f_true", "f_map"};
  for (double k : sigma_levels()) {
    t.header.push_back("f_lo" + std::to_string(static_cast<int>(k)));
    t.header.push_back("f_hi" + std::to_string(static_cast<int>(k)));
  }
  t.header.insert(t.header.end(), {"beta_true", "beta_map"});
  for (double k : sigma_levels()) {
    t.header.push_back("beta_lo" + std::to_string(static_cast<int>(k)));
    t.header.push_back("beta_hi" + std::to_string(static_cast<int>(k)));
  }
  const TraceMesh& tr = problem.trace();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    std::vector<double> row{tr.s[i], truth.boundary(tr.s[i]), f_map[j]};
    for (double k : sigma_levels()) {
      row.push_back(f_map[j] - k * f_sd[j]);
      row.push_back(f_map[j] + k * f_sd[j]);
    }
    row.push_back(truth.robin(tr.s[i]));
    row.push_back(beta_map[j]);
    for (double k : sigma_levels()) {
      row.push_back(beta_map[j] - k * beta_sd[j]);
      row.push_back(beta_map[j] + k * beta_sd[j]);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline json map_report(const InverseProblem& problem, const MapResult& r) {
  json j;
  j["converged"] = r.gn.converged;
  j["termination"] = r.gn.termination;
  j["iterations"] = r.gn.iterations;
  j["rejected_trials"] = r.gn.rejected_trials;
  j["gradient_norms"] = r.gn.gradient_norms;
  j["values"] = r.gn.values;
  j["step_sizes"] = r.gn.step_sizes;
  j["gradient_reduction"] = r.gn.gradient_norms.front() / r.gn.gradient_norms.back();
  j["n_alpha"] = problem.n_alpha();
  j["n_beta"] = problem.n_beta();
  j["parameter_names"] = parameter_names(problem.n_alpha(), problem.n_beta());
  j["map"] = to_json(r.map);
  j["marginal_std"] = to_json(r.laplace.marginal_std());
  j["covariance"] = to_json(r.laplace.covariance);
  j["trace_s"] = problem.trace().s;
  j["wall_time_s"] = r.wall_time;
  return j;
}

/// Restores the MAP and Laplace approximation from a report.
inline MapResult map_from_report(const json& j) {
  MapResult r;
  try {
    r.map = vector_from_json(j.at("map"));
    r.gn.converged = j.at("converged").get<bool>();
    r.gn.termination = j.at("termination").get<std::string>();
    r.gn.iterations = j.at("iterations").get<int>();
    r.gn.gradient_norms = j.at("gradient_norms").get<std::vector<double>>();
    r.gn.values = j.at("values").get<std::vector<double>>();
    r.gn.step_sizes = j.at("step_sizes").get<std::vector<double>>();
    r.laplace.mean = r.map;
    r.laplace.covariance = matrix_from_json(j.at("covariance"));
    r.wall_time = j.at("wall_time_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed MAP report: ") + e.what());
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(r.laplace.covariance);
  if (llt.info() != Eigen::Success || r.laplace.covariance.rows() != r.map.size()) {
    throw IoError("MAP report covariance is not SPD");
  }
  r.laplace.covariance_factor = llt.matrixL();
  r.laplace.hessian = llt.solve(Eigen::MatrixXd::Identity(r.map.size(), r.map.size()));
  return r;
}

/// Runs GN + Laplace and writes map_report.json and laplace_envelopes.csv.
inline MapResult run_map(const ExperimentConfig& config, const SyntheticDataset& dataset, const fs::path& out_dir,
                         const Logger& log = {}) {
  const auto problem = make_inverse_problem(config, dataset);
  log_line(log, "map: " + std::to_string(problem->size()) + " parameters, inversion mesh " +
                    std::to_string(problem->mesh().num_nodes()) + " nodes");
  MapResult r = compute_map(*problem, config.gn_options());
  log_line(log, "map: " + r.gn.termination + " after " + std::to_string(r.gn.iterations) + " iterations");
  write_json(out_dir / "map_report.json", map_report(*problem, r));
  write_atomic(out_dir / "laplace_envelopes.csv", laplace_envelopes(*problem, r, dataset).str());
  return r;
}

// ---------------------------------------------------------------------------
// MCMC

struct ChainsResult {
  std::vector<ChainOutput> chains;
  std::optional<Eigen::VectorXd> rhat;
  double wall_time = 0.0;
  [[nodiscard]] bool converged() const {
    for (const auto& c : chains)
      if (!c.converged) return false;
    return !chains.empty();
  }
};

struct ChainRunOptions {
  int chains = 1;
  std::uint64_t seed = 1;
  double initial_tau = 0.0;
  std::optional<AdaptState> adapt_from;  // warm start, replaces A_init and tau
  fs::path out_dir;                      // empty: no files
  Eigen::Index n_alpha = 0;              // for chain file headers
};

inline std::mt19937_64 chain_rng(std::uint64_t seed, int chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu,
                    static_cast<std::uint32_t>(chain)};
  return std::mt19937_64(seq);
}

/// Runs independent chains concurrently. Chain 0 starts at m0; the others
/// start at m0 + L xi with L the factor of A_init (first admissible draw).
template <LangevinTarget Target>
ChainsResult run_chains(const Target& target, const Eigen::VectorXd& m0, const Eigen::MatrixXd& A_init,
                        const MalaSchedule& schedule, const AdaptSettings& settings, const ChainRunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = m0.size();
  const double tau = opt.initial_tau > 0.0 ? opt.initial_tau : default_initial_tau(n);
  ChainsResult out;
  out.chains.resize(static_cast<std::size_t>(opt.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(opt.chains));

  const auto work = [&](int c) {
    try {
      auto rng = chain_rng(opt.seed, c);
      AdaptState adapt = opt.adapt_from ? *opt.adapt_from : AdaptState::init(A_init, m0, tau, settings);
      Eigen::VectorXd start = m0;
      if (c > 0) {
        const Eigen::LLT<Eigen::MatrixXd> llt(adapt.A);
        for (int attempt = 0; attempt < 100; ++attempt) {
          Eigen::VectorXd trial = m0 + llt.matrixL() * standard_normal(n, rng);
          if (target.evaluate(trial)) {
            start = std::move(trial);
            break;
          }
        }
      }
      std::unique_ptr<ChainWriter> writer;
      RecordCallback cb;
      if (!opt.out_dir.empty()) {
        writer = std::make_unique<ChainWriter>(opt.out_dir / ("chain_" + std::to_string(c) + ".csv"), opt.n_alpha,
                                               n - opt.n_alpha);
        cb = [&writer](const Eigen::VectorXd& m, double v, bool a) { writer->write(m, v, a); };
      }
      ChainOutput res = run_chain(start, std::move(adapt), target, schedule, rng, cb);
      if (writer) {
        writer->commit();
        write_json(opt.out_dir / ("adapt_" + std::to_string(c) + ".json"), to_json(res.final_adapt));
      }
      out.chains[static_cast<std::size_t>(c)] = std::move(res);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  if (opt.chains == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int c = 0; c < opt.chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (opt.chains >= 2) {
    Eigen::Index len = out.chains.front().samples.rows();
    for (const auto& c : out.chains) len = std::min(len, c.samples.rows());
    if (len >= 2) {
      std::vector<SampleMatrix> trimmed;
      for (const auto& c : out.chains) trimmed.emplace_back(c.samples.topRows(len));
      out.rhat = gelman_rubin(trimmed);
    }
  }
  out.wall_time = seconds_since(t0);
  return out;
}

/// Lower/upper tail probabilities of the 68-95-99.7 credible regions.
inline const std::array<std::pair<double, double>, 3>& credible_levels() {
  static const std::array<std::pair<double, double>, 3> q{
      {{0.158655253931457, 0.841344746068543}, {0.0227501319481792, 0.977249868051821},
       {0.00134989803163009, 0.99865010196837}}};
  return q;
}

struct McmcEnvelopes {
  Eigen::VectorXd f_cm, beta_cm;
  std::array<Eigen::VectorXd, 3> f_lo, f_hi, beta_lo, beta_hi;
};

inline McmcEnvelopes mcmc_envelopes(const InverseProblem& problem, const SampleMatrix& samples) {
  const Eigen::Index na = problem.n_alpha();
  const Eigen::MatrixXd B = trace_basis(problem);
  const Eigen::MatrixXd f = ((samples.leftCols(na) * B.transpose()).array() + 1.0).matrix();
  const Eigen::MatrixXd beta = samples.rightCols(problem.n_beta());
  McmcEnvelopes e;
  e.f_cm = f.colwise().mean().transpose();
  e.beta_cm = beta.colwise().mean().transpose();
  for (std::size_t k = 0; k < 3; ++k) {
    e.f_lo[k] = column_quantile(f, credible_levels()[k].first);
    e.f_hi[k] = column_quantile(f, credible_levels()[k].second);
    e.beta_lo[k] = column_quantile(beta, credible_levels()[k].first);
    e.beta_hi[k] = column_quantile(beta, credible_levels()[k].second);
  }
  return e;
}

inline CsvTable mcmc_envelope_table(const InverseProblem& problem, const McmcEnvelopes& e, const SyntheticDataset& ds) {
  const TruthProfiles truth = truth_profiles(ds.truth, problem.mesh().L);
  CsvTable t;
  t.header = {"s", "f_true", "f_cm", "f_lo68", "f_hi68", "f_lo95", "f_hi95", "f_lo997", "f_hi997",
              "beta_true", "beta_cm", "beta_lo68", "beta_hi68", "beta_lo95", "beta_hi95", "beta_lo997", "beta_hi997"};
  const TraceMesh& tr = problem.trace();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    std::vector<double> row{tr.s[i], truth.boundary(tr.s[i]), e.f_cm[j]};
    for (std::size_t k = 0; k < 3; ++k) row.insert(row.end(), {e.f_lo[k][j], e.f_hi[k][j]});
    row.insert(row.end(), {truth.robin(tr.s[i]), e.beta_cm[j]});
    for (std::size_t k = 0; k < 3; ++k) row.insert(row.end(), {e.beta_lo[k][j], e.beta_hi[k][j]});
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline json chain_summary(const ChainOutput& c) {
  json j;
  j["converged"] = c.converged;
  j["recorded_steps"] = c.samples.rows();
  j["total_steps"] = c.total_steps;
  j["burn_in"] = c.burn_in;
  j["stopping_checks"] = c.stopping_checks;
  j["post_burn_in_acceptance"] = c.post_burn_in_acceptance;
  j["rejected_invalid"] = c.rejected_invalid;
  j["rejected_nonfinite"] = c.rejected_nonfinite;
  j["regularization_events"] = c.final_adapt.regularization_events;
  j["final_tau"] = c.final_adapt.tau();
  j["acceptance_trace"] = c.acceptance_trace;
  j["tau_trace"] = c.tau_trace;
  j["cm"] = to_json(c.mean());
  if (c.mcse_ready) {
    j["mcse"] = to_json(c.mcse);
    j["halfwidth"] = to_json(c.halfwidth);
    j["posterior_std"] = to_json(c.posterior_std);
    j["halfwidth_ratio"] = to_json(c.halfwidth_ratio);
    j["max_halfwidth_ratio"] = c.halfwidth_ratio.maxCoeff();
  }
  return j;
}

struct McmcResult {
  ChainsResult chains;
  McmcEnvelopes envelopes;
};

/// Samples the posterior from the MAP with the Laplace covariance as the
/// initial proposal; writes chain_<c>.csv, adapt_<c>.json,
/// mcmc_summary.json and mcmc_envelopes.csv.
inline McmcResult run_mcmc(const ExperimentConfig& config, const SyntheticDataset& dataset, const MapResult& map,
                           const fs::path& out_dir, std::optional<AdaptState> adapt_from = std::nullopt,
                           const Logger& log = {}) {
  const auto problem = make_inverse_problem(config, dataset);
  if (map.map.size() != problem->size()) throw ConfigError("MAP report does not match the inversion problem size");
  ChainRunOptions opt;
  opt.chains = config.mala.chains;
  opt.seed = config.seed;
  opt.initial_tau = config.mala.initial_tau;
  opt.adapt_from = std::move(adapt_from);
  opt.out_dir = out_dir;
  opt.n_alpha = problem->n_alpha();
  log_line(log, "sample: " + std::to_string(opt.chains) + " chain(s), burn-in " +
                    std::to_string(config.mala.burn_in) + ", check every " + std::to_string(config.mala.check_interval));
  McmcResult r;
  r.chains = run_chains(*problem, map.map, map.laplace.covariance, config.mala_schedule(), config.adapt_settings(), opt);

  Eigen::Index rows = 0;
  for (const auto& c : r.chains.chains) rows += c.samples.rows();
  SampleMatrix pooled(rows, problem->size());
  Eigen::Index at = 0;
  for (const auto& c : r.chains.chains) {
    pooled.middleRows(at, c.samples.rows()) = c.samples;
    at += c.samples.rows();
  }
  r.envelopes = mcmc_envelopes(*problem, pooled);

  json s;
  s["converged"] = r.chains.converged();
  s["verdict"] = r.chains.converged() ? "converged" : "not converged (sample cap reached)";
  s["wall_time_s"] = r.chains.wall_time;
  s["parameter_names"] = parameter_names(problem->n_alpha(), problem->n_beta());
  s["cm"] = to_json(Eigen::VectorXd(pooled.colwise().mean().transpose()));
  s["chains"] = json::array();
  for (const auto& c : r.chains.chains) s["chains"].push_back(chain_summary(c));
  if (r.chains.rhat) {
    s["gelman_rubin"] = to_json(*r.chains.rhat);
    s["max_rhat"] = r.chains.rhat->maxCoeff();
  }
  json env;
  env["trace_s"] = problem->trace().s;
  env["f_cm"] = to_json(r.envelopes.f_cm);
  env["beta_cm"] = to_json(r.envelopes.beta_cm);
  const std::array<const char*, 3> names{"68", "95", "99.7"};
  for (std::size_t k = 0; k < 3; ++k) {
    env[std::string("f_") + names[k]] = {{"lo", to_json(r.envelopes.f_lo[k])}, {"hi", to_json(r.envelopes.f_hi[k])}};
    env[std::string("beta_") + names[k]] = {{"lo", to_json(r.envelopes.beta_lo[k])},
                                            {"hi", to_json(r.envelopes.beta_hi[k])}};
  }
  s["envelopes"] = env;
  write_json(out_dir / "mcmc_summary.json", s);
  write_atomic(out_dir / "mcmc_envelopes.csv", mcmc_envelope_table(*problem, r.envelopes, dataset).str());
  for (std::size_t c = 0; c < r.chains.chains.size(); ++c) {
    const auto& ch = r.chains.chains[c];
    log_line(log, "sample: chain " + std::to_string(c) + (ch.converged ? " converged" : " hit the sample cap") +
                      " after " + std::to_string(ch.samples.rows()) + " recorded steps, acceptance " +
                      std::to_string(ch.post_burn_in_acceptance));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct DiagnosticsOptions {
  double disagreement_threshold = 0.25;  // in Laplace sigmas
};

struct Diagnostics {
  double f_coverage = 0.0;     // fraction of trace nodes with truth inside the 99.7% region
  double beta_coverage = 0.0;
  Eigen::VectorXd beta_skewness;
  Eigen::VectorXd beta_disagreement;  // max envelope offset / Laplace sigma
  std::vector<int> disagreeing;       // beta node indices
  int negative_among_disagreeing = 0;
  bool majority_negative = false;
};

/// Compares Laplace and MCMC envelopes and checks the truth against the
/// 99.7% credible region.
inline Diagnostics diagnose(const InverseProblem& problem, const MapResult& map, const SampleMatrix& samples,
                            const SyntheticDataset& ds, const DiagnosticsOptions& opt = {}) {
  const McmcEnvelopes e = mcmc_envelopes(problem, samples);
  const TruthProfiles truth = truth_profiles(ds.truth, problem.mesh().L);
  const TraceMesh& tr = problem.trace();
  Diagnostics d;
  int f_in = 0, b_in = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    const double ft = truth.boundary(tr.s[i]);
    const double bt = truth.robin(tr.s[i]);
    if (ft >= e.f_lo[2][j] && ft <= e.f_hi[2][j]) ++f_in;
    if (bt >= e.beta_lo[2][j] && bt <= e.beta_hi[2][j]) ++b_in;
  }
  d.f_coverage = static_cast<double>(f_in) / static_cast<double>(tr.size());
  d.beta_coverage = static_cast<double>(b_in) / static_cast<double>(tr.size());

  const SampleMatrix beta = samples.rightCols(problem.n_beta());
  d.beta_skewness = sample_skewness(beta);
  const Eigen::VectorXd b_map = problem.beta_of(map.map);
  const Eigen::VectorXd b_sd = map.laplace.covariance.diagonal().tail(problem.n_beta()).cwiseSqrt();
  d.beta_disagreement.resize(problem.n_beta());
  for (Eigen::Index j = 0; j < problem.n_beta(); ++j) {
    double worst = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double s = sigma_levels()[k];
      worst = std::max(worst, std::abs(e.beta_lo[k][j] - (b_map[j] - s * b_sd[j])));
      worst = std::max(worst, std::abs(e.beta_hi[k][j] - (b_map[j] + s * b_sd[j])));
    }
    d.beta_disagreement[j] = worst / b_sd[j];
    if (d.beta_disagreement[j] > opt.disagreement_threshold) {
      d.disagreeing.push_back(static_cast<int>(j));
      if (d.beta_skewness[j] < 0.0) ++d.negative_among_disagreeing;
    }
  }
  d.majority_negative = !d.disagreeing.empty() &&
                        2 * d.negative_among_disagreeing > static_cast<int>(d.disagreeing.size());
  return d;
}

inline json diagnostics_report(const Diagnostics& d, const std::optional<Eigen::VectorXd>& rhat,
                               const DiagnosticsOptions& opt) {
  json j;
  j["truth_in_997_region"] = {{"boundary_fraction", d.f_coverage}, {"robin_fraction", d.beta_coverage}};
  j["disagreement_threshold_sigma"] = opt.disagreement_threshold;
  j["beta_skewness"] = to_json(d.beta_skewness);
  j["beta_envelope_disagreement"] = to_json(d.beta_disagreement);
  j["disagreeing_beta_nodes"] = d.disagreeing;
  j["negative_skew_among_disagreeing"] = d.negative_among_disagreeing;
  j["majority_negative_skew"] = d.majority_negative;
  if (rhat) {
    j["gelman_rubin"] = to_json(*rhat);
    j["max_rhat"] = rhat->maxCoeff();
  }
  return j;
}

}  // namespace robinshape::harness
