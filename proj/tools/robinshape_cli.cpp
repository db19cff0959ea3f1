// Command line front end: generate-data, map, sample, diagnose,
// reproduce-example.

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "robinshape/harness/pipeline.hpp"

namespace {

using namespace robinshape;
using namespace robinshape::harness;

enum ExitCode { kOk = 0, kInvalidConfig = 1, kNumerical = 2, kNotConverged = 3 };

void say(const std::string& line) { std::cerr << line << '\n'; }

struct Common {
  std::string config_path;
  int example = 0;
  std::string out_dir;

  [[nodiscard]] ExperimentConfig config() const {
    ExperimentConfig c = !config_path.empty() ? load_config(config_path)
                         : example > 0        ? example_config(example)
                                              : ExperimentConfig{};
    if (!out_dir.empty()) c.output_dir = out_dir;
    return c;
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "experiment config (JSON)");
  app->add_option("-e,--example", c.example, "use the built-in config of example 1, 2 or 3")->check(CLI::Range(1, 3));
  app->add_option("-o,--out", c.out_dir, "output directory (overrides the config)");
}

fs::path dataset_path(const ExperimentConfig& c, const std::string& given) {
  return given.empty() ? fs::path(c.output_dir) / "dataset.csv" : fs::path(given);
}

fs::path map_path(const ExperimentConfig& c, const std::string& given) {
  return given.empty() ? fs::path(c.output_dir) / "map_report.json" : fs::path(given);
}

int cmd_generate(const ExperimentConfig& c) {
  const SyntheticDataset ds = generate_data(c);
  const fs::path out(c.output_dir);
  write_dataset(out / "dataset.csv", ds);
  write_json(out / "config.json", to_json(c));
  say("generate-data: " + std::to_string(ds.y.size()) + " measurements on the " + std::to_string(ds.mesh.nodes) +
      "-node data mesh, delta_e = " + format_double(ds.noise_std));
  return kOk;
}

int cmd_map(const ExperimentConfig& c, const std::string& data) {
  const SyntheticDataset ds = read_dataset(dataset_path(c, data));
  const MapResult r = run_map(c, ds, c.output_dir, say);
  return r.gn.converged ? kOk : kNotConverged;
}

int cmd_sample(const ExperimentConfig& c, const std::string& data, const std::string& map,
               const std::string& adapt_from) {
  const SyntheticDataset ds = read_dataset(dataset_path(c, data));
  const MapResult m = map_from_report(read_json(map_path(c, map)));
  std::optional<AdaptState> warm;
  if (!adapt_from.empty()) warm = adapt_state_from_json(read_json(adapt_from));
  const McmcResult r = run_mcmc(c, ds, m, c.output_dir, warm, say);
  return r.chains.converged() ? kOk : kNotConverged;
}

int cmd_diagnose(const ExperimentConfig& c, const std::string& data, const std::string& map,
                 std::vector<std::string> chains, double threshold) {
  const SyntheticDataset ds = read_dataset(dataset_path(c, data));
  const MapResult m = map_from_report(read_json(map_path(c, map)));
  const auto problem = make_inverse_problem(c, ds);
  if (chains.empty()) {
    for (int k = 0; fs::exists(fs::path(c.output_dir) / ("chain_" + std::to_string(k) + ".csv")); ++k) {
      chains.push_back((fs::path(c.output_dir) / ("chain_" + std::to_string(k) + ".csv")).string());
    }
  }
  if (chains.empty()) throw IoError("no chain files found");
  std::vector<SampleMatrix> loaded;
  Eigen::Index rows = 0;
  for (const auto& p : chains) {
    loaded.push_back(read_chain(p, problem->size()));
    rows += loaded.back().rows();
  }
  SampleMatrix pooled(rows, problem->size());
  Eigen::Index at = 0;
  for (const auto& s : loaded) {
    pooled.middleRows(at, s.rows()) = s;
    at += s.rows();
  }
  std::optional<Eigen::VectorXd> rhat;
  if (loaded.size() >= 2) {
    Eigen::Index len = loaded.front().rows();
    for (const auto& s : loaded) len = std::min(len, s.rows());
    std::vector<SampleMatrix> trimmed;
    for (const auto& s : loaded) trimmed.emplace_back(s.topRows(len));
    rhat = gelman_rubin(trimmed);
  }
  DiagnosticsOptions opt;
  opt.disagreement_threshold = threshold;
  const Diagnostics d = diagnose(*problem, m, pooled, ds, opt);
  write_json(fs::path(c.output_dir) / "diagnostics.json", diagnostics_report(d, rhat, opt));
  say("diagnose: truth inside 99.7% region at " + format_double(100.0 * d.f_coverage) + "% (boundary), " +
      format_double(100.0 * d.beta_coverage) + "% (Robin) of trace nodes; " +
      std::to_string(d.negative_among_disagreeing) + " of " + std::to_string(d.disagreeing.size()) +
      " disagreeing Robin nodes negatively skewed");
  return kOk;
}

int cmd_reproduce(ExperimentConfig c) {
  say("reproduce-example: writing to " + c.output_dir);
  int rc = cmd_generate(c);
  if (rc != kOk) return rc;
  const int map_rc = cmd_map(c, "");
  if (map_rc == kNotConverged) say("reproduce-example: Gauss-Newton did not converge; continuing from the last iterate");
  const int sample_rc = cmd_sample(c, "", "", "");
  cmd_diagnose(c, "", "", {}, DiagnosticsOptions{}.disagreement_threshold);
  return sample_rc != kOk ? sample_rc : map_rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary shape and Robin coefficient estimation on a corroded slab"};
  app.require_subcommand(1);

  Common gen_opts, map_opts, sample_opts, diag_opts, repro_opts;
  std::string data, map, adapt_from;
  std::vector<std::string> chain_files;
  double threshold = DiagnosticsOptions{}.disagreement_threshold;
  int example = 1;
  std::optional<std::int64_t> max_samples;
  std::optional<int> chains;

  auto* gen = app.add_subcommand("generate-data", "forward-solve the truth on the data mesh and add noise");
  add_common(gen, gen_opts);

  auto* mp = app.add_subcommand("map", "Gauss-Newton MAP estimate and Laplace approximation");
  add_common(mp, map_opts);
  mp->add_option("-d,--data", data, "dataset file (default <out>/dataset.csv)");

  auto* sm = app.add_subcommand("sample", "MALA sampling of the posterior");
  add_common(sm, sample_opts);
  sm->add_option("-d,--data", data, "dataset file (default <out>/dataset.csv)");
  sm->add_option("-m,--map", map, "MAP report (default <out>/map_report.json)");
  sm->add_option("--adapt-from", adapt_from, "adaptation snapshot to resume from");
  sm->add_option("--chains", chains, "number of concurrent chains");
  sm->add_option("--max-samples", max_samples, "recorded-sample cap per chain");

  auto* dg = app.add_subcommand("diagnose", "envelope coverage, skewness and Gelman-Rubin from chain files");
  add_common(dg, diag_opts);
  dg->add_option("-d,--data", data, "dataset file (default <out>/dataset.csv)");
  dg->add_option("-m,--map", map, "MAP report (default <out>/map_report.json)");
  dg->add_option("--chain", chain_files, "chain CSV files (default <out>/chain_*.csv)");
  dg->add_option("--disagreement", threshold, "Laplace/MCMC envelope offset, in Laplace sigmas, counted as disagreement");

  auto* rp = app.add_subcommand("reproduce-example", "run the full pipeline for example 1, 2 or 3");
  rp->add_option("example", example, "example number")->required()->check(CLI::Range(1, 3));
  rp->add_option("-c,--config", repro_opts.config_path, "config overriding the built-in one");
  rp->add_option("-o,--out", repro_opts.out_dir, "output directory");
  rp->add_option("--chains", chains, "number of concurrent chains");
  rp->add_option("--max-samples", max_samples, "recorded-sample cap per chain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalidConfig;
  }

  try {
    const auto tune = [&](ExperimentConfig c) {
      if (chains) c.mala.chains = *chains;
      if (max_samples) c.mala.max_samples = *max_samples;
      validate(c);
      return c;
    };
    if (*gen) return cmd_generate(gen_opts.config());
    if (*mp) return cmd_map(map_opts.config(), data);
    if (*sm) return cmd_sample(tune(sample_opts.config()), data, map, adapt_from);
    if (*dg) return cmd_diagnose(diag_opts.config(), data, map, chain_files, threshold);
    if (*rp) {
      repro_opts.example = example;
      return cmd_reproduce(tune(repro_opts.config()));
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const SolverError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const InvalidShape& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const InvalidMesh& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kOk;
}
