// scalemix: simulate | fit | resume | diagnose | coverage | predict
//
// Every command writes into a run directory guarded by a lock file and finishes with a
// manifest. Results go to files; stdout gets one JSON summary, stderr one JSON error record.

#include <array>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "scalemix/diagnostics.hpp"
#include "scalemix/error.hpp"
#include "scalemix/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace scalemix;

namespace {

// Relative data paths in a config resolve against the config's own directory.
std::string resolve(const std::string& path, const std::string& config_path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(config_path).parent_path() / path).lexically_normal().string();
}

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create " + dir + ": " + ec.message());
}

// Loads a fit directory: its frozen config, its data and a sampler positioned at the checkpoint.
struct FitRun {
  RunConfig config;
  Dataset data;
  ModelSpec model;
  ChainConfig chain;
};

FitRun open_fit(const std::string& dir) {
  FitRun f;
  f.config = load_config(dir + "/config.txt");
  f.data = read_station_csv(dir + "/data.csv").to_dataset();
  f.model = f.config.model_spec();
  f.chain = f.config.chain_config();
  f.chain.checkpoint_path = dir + "/chain.ckpt";
  return f;
}

void write_ledger(const std::string& path, const std::vector<ProposalSlot>& slots) {
  std::string s = "slot,log_scale,attempts,accepts,invalid,rate\n";
  for (const auto& p : slots) {
    const double rate = p.attempts > 0 ? static_cast<double>(p.accepts) / static_cast<double>(p.attempts) : NAN;
    s += p.name + ',' + std::to_string(p.log_scale) + ',' + std::to_string(p.attempts) + ',' +
         std::to_string(p.accepts) + ',' + std::to_string(p.invalid) + ',' + std::to_string(rate) + '\n';
  }
  write_text_file(path, s);
}

json finish_fit(const std::string& dir, Sampler& s, const RunConfig& c, const std::string& command) {
  const ChainOutput& out = s.run();
  s.save_checkpoint(dir + "/chain.ckpt");
  out.write_csv(dir + "/trace.csv");
  write_ledger(dir + "/acceptance.csv", out.ledger);

  json means;
  for (const auto& name : out.names) {
    const auto d = out.draws(name);
    if (d.empty()) continue;
    double m = 0.0;
    for (double v : d) m += v;
    means[name] = m / static_cast<double>(d.size());
  }
  write_manifest(dir, c, command);
  return {{"command", command},       {"dir", dir},
          {"iterations", s.iteration()}, {"records", out.records()},
          {"trace_hash", out.hash()}, {"posterior_mean", means}};
}

json cmd_simulate(const std::string& config_path, const std::string& dir) {
  RunConfig c = load_config(config_path);
  prepare_dir(dir);
  DirectoryLock lock(dir);
  const ProcessSpec spec = build_scenario(c.scenario, c.sites, c.replicates, c.sim_seed);
  const SimulatedDataset sim = simulate_field(spec);
  write_station_csv(dir + "/data.csv", StationTable::from_dataset(Dataset::from_simulation(sim)));
  write_truth(dir + "/truth.txt", spec);
  c.data = "data.csv";
  write_text_file(dir + "/config.txt", serialize_config(c));
  write_manifest(dir, c, "simulate");
  return {{"command", "simulate"}, {"dir", dir}, {"sites", c.sites}, {"replicates", c.replicates}};
}

json cmd_fit(const std::string& config_path, std::string data_path, const std::string& dir) {
  RunConfig c = load_config(config_path);
  if (data_path.empty()) data_path = resolve(c.data, config_path);
  require(!data_path.empty(), ErrorKind::validation, "no data: pass --data or set data in the config");
  const StationTable table = read_station_csv(data_path);
  prepare_dir(dir);
  DirectoryLock lock(dir);
  require(!fs::exists(dir + "/chain.ckpt"), ErrorKind::validation, dir + " already holds a chain; use resume");
  write_station_csv(dir + "/data.csv", table);
  c.data = "data.csv";
  if (!c.holdout.empty()) c.holdout = fs::absolute(resolve(c.holdout, config_path)).string();
  write_text_file(dir + "/config.txt", serialize_config(c));

  FitRun f = open_fit(dir);
  Sampler s(f.data, f.model, f.config.prior, f.chain, default_initial_state(f.data, f.model));
  return finish_fit(dir, s, f.config, "fit");
}

json cmd_resume(const std::string& dir) {
  DirectoryLock lock(dir);
  FitRun f = open_fit(dir);
  Sampler s(f.data, f.model, f.config.prior, f.chain, default_initial_state(f.data, f.model));
  s.load_checkpoint(f.chain.checkpoint_path);
  const long long from = s.iteration();
  json j = finish_fit(dir, s, f.config, "resume");
  j["resumed_from"] = from;
  return j;
}

json cmd_diagnose(const std::string& dir) {
  DirectoryLock lock(dir);
  const RunConfig c = load_config(dir + "/config.txt");
  const Dataset d = read_station_csv(dir + "/data.csv").to_dataset();
  WindowGrid grid;
  grid.xmin = grid.ymin = c.domain_lo;
  grid.xmax = grid.ymax = c.domain_hi;
  grid.nx = c.window_nx;
  grid.ny = c.window_ny;
  const double tol = c.window_h_tol * c.window_h;

  const auto rank = moving_window_chi(rank_scores(d.Y), d.site_points(), grid, c.window_h, tol, c.u_grid);
  write_window_csv(dir + "/window_rank.csv", rank);
  json j{{"command", "diagnose"}, {"dir", dir}, {"windows", grid.nx * grid.ny}};

  // With a fitted chain the margins come from posterior means of the regression coefficients.
  if (fs::exists(dir + "/chain.ckpt")) {
    FitRun f = open_fit(dir);
    Sampler s(f.data, f.model, f.config.prior, f.chain, default_initial_state(f.data, f.model));
    s.load_checkpoint(f.chain.checkpoint_path);
    const ChainOutput& out = s.output();
    MarginalRegression reg = MarginalRegression::from_spec(f.model.design, d.covariates, d.time);
    std::array<Vector*, 4> coef{&reg.mu0, &reg.mu1, &reg.logsigma, &reg.xi};
    for (Block b : all_blocks) {
      Vector& v = *coef[static_cast<int>(b)];
      v = s.state().block(b);
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto draws = out.draws(std::string(block_name(b)) + "_" + std::to_string(i));
        if (draws.empty()) continue;
        double m = 0.0;
        for (double x : draws) m += x;
        v[i] = m / static_cast<double>(draws.size());
      }
    }
    const auto model = moving_window_chi(model_scores(d.Y, reg), d.site_points(), grid, c.window_h, tol, c.u_grid);
    write_window_csv(dir + "/window_model.csv", model);
    j["model_scores"] = true;
  }
  write_manifest(dir, c, "diagnose");
  return j;
}

json cmd_coverage(const std::string& config_path, const std::string& dir) {
  RunConfig c = load_config(config_path);
  prepare_dir(dir);
  DirectoryLock lock(dir);
  write_text_file(dir + "/config.txt", serialize_config(c));
  ChainConfig chain = c.chain_config();
  chain.checkpoint_every = 0;
  const auto scenario = [&](int i) {
    return build_scenario(c.scenario, c.sites, c.replicates, c.sim_seed + static_cast<std::uint64_t>(i));
  };
  const CoverageTable table =
      coverage_study(scenario, c.datasets, c.ci_levels, mcmc_fitter(chain, c.prior, true, c.update_xi));
  table.write_csv(dir + "/coverage.csv");
  write_manifest(dir, c, "coverage");
  json rows = json::array();
  for (const auto& r : table.rows)
    if (r.parameter == "phi" || r.parameter == "rho" || r.parameter == "mu" || r.parameter == "sigma")
      rows.push_back({{"parameter", r.parameter}, {"level", r.level}, {"coverage", r.coverage},
                      {"band", {r.band_lower, r.band_upper}}});
  return {{"command", "coverage"}, {"dir", dir}, {"datasets", table.datasets}, {"failed", table.failed}, {"rows", rows}};
}

json cmd_predict(const std::string& dir, std::string holdout_path, int max_draws) {
  DirectoryLock lock(dir);
  FitRun f = open_fit(dir);
  if (holdout_path.empty()) holdout_path = f.config.holdout;
  require(!holdout_path.empty(), ErrorKind::validation, "no holdout: pass --holdout or set holdout in the config");
  const Dataset h = read_station_csv(holdout_path).to_dataset();

  // Holdout replicates align with training replicates by year.
  HoldoutData hold;
  hold.covariates = h.covariates;
  hold.Y = Matrix::Constant(h.sites(), f.data.replicates(), NAN);
  std::map<int, Eigen::Index> col;
  for (std::size_t t = 0; t < f.data.years.size(); ++t) col[f.data.years[t]] = static_cast<Eigen::Index>(t);
  for (std::size_t t = 0; t < h.years.size(); ++t) {
    const auto it = col.find(h.years[t]);
    if (it == col.end()) continue;
    hold.Y.col(it->second) = h.Y.col(static_cast<Eigen::Index>(t));
  }

  Sampler s(f.data, f.model, f.config.prior, f.chain, default_initial_state(f.data, f.model));
  s.load_checkpoint(f.chain.checkpoint_path);
  const PredictiveResult r = predictive_loglik(f.data, hold, f.model, s.output(), max_draws);

  // log_score is the log of the posterior-mean density, the usual predictive score.
  std::string csv = "station_id,mean_loglik,log_score\n";
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.loglik.rows(); ++i) {
    const double m = r.loglik.row(i).mean();
    const double top = r.loglik.row(i).maxCoeff();
    const double score =
        std::isfinite(top) ? top + std::log((r.loglik.row(i).array() - top).exp().mean()) : top;
    total += score;
    csv += h.station_ids[static_cast<std::size_t>(i)] + ',' + std::to_string(m) + ',' + std::to_string(score) + '\n';
  }
  write_text_file(dir + "/predictive.csv", csv);
  write_manifest(dir, f.config, "predict");
  return {{"command", "predict"}, {"dir", dir}, {"stations", r.loglik.rows()}, {"draws", r.loglik.cols()},
          {"log_score", total}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial scale-mixture extremes: simulate, fit and check"};
  app.require_subcommand(1);

  std::string config, data, out, dir, holdout;
  int max_draws = 200;

  auto* sim = app.add_subcommand("simulate", "Draw a synthetic dataset with its truth sidecar");
  sim->add_option("--config", config, "Run configuration")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out, "Output run directory")->required();

  auto* fit = app.add_subcommand("fit", "Run the sampler, checkpointing as it goes");
  fit->add_option("--config", config, "Run configuration")->required()->check(CLI::ExistingFile);
  fit->add_option("--data", data, "Station CSV; defaults to the config's data entry");
  fit->add_option("--out", out, "Output run directory")->required();

  auto* resume = app.add_subcommand("resume", "Continue an interrupted fit from its checkpoint");
  resume->add_option("--dir", dir, "Fit directory")->required()->check(CLI::ExistingDirectory);

  auto* diag = app.add_subcommand("diagnose", "Moving-window chi on rank and fitted-margin scores");
  diag->add_option("--dir", dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* cov = app.add_subcommand("coverage", "Credible-interval coverage over simulated datasets");
  cov->add_option("--config", config, "Run configuration")->required()->check(CLI::ExistingFile);
  cov->add_option("--out", out, "Output directory")->required();

  auto* pred = app.add_subcommand("predict", "Conditional log-likelihood of held-out stations");
  pred->add_option("--dir", dir, "Fit directory (run with store_S = true)")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--holdout", holdout, "Holdout station CSV; defaults to the config's holdout entry");
  pred->add_option("--max-draws", max_draws, "Posterior draws used")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    json result;
    if (*sim) result = cmd_simulate(config, out);
    else if (*fit) result = cmd_fit(config, data, out);
    else if (*resume) result = cmd_resume(dir);
    else if (*diag) result = cmd_diagnose(dir);
    else if (*cov) result = cmd_coverage(config, out);
    else if (*pred) result = cmd_predict(dir, holdout, max_draws);
    std::cout << result.dump() << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }
}
