#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scalemix/inference.hpp"
#include "scalemix/simulator.hpp"

namespace scalemix {

// ---- run configuration -------------------------------------------------

// "k25r4b4m": 25 knots, Wendland radius 4, Gaussian bandwidth 4, margins fixed.
// "hw-stationary": one knot, infinite radius and bandwidth.
struct ModelName {
  int knots = 1;
  double radius = 4.0;
  double bandwidth = 4.0;
  bool fix_margins = false;

  static ModelName parse(const std::string& name);
  std::string str() const;
};

struct RunConfig {
  std::string name;  // empty when the fields stand on their own
  int knots = 9;
  int rho_knots = 0;  // 0 means the same as knots
  double radius = 4.0;
  int exponent = 2;
  double bandwidth_phi = 4.0;
  double bandwidth_rho = 4.0;
  bool fix_margins = false;
  bool update_xi = true;
  double domain_lo = 0.0;
  double domain_hi = 10.0;
  double gamma = 0.5;
  double nu = 0.5;
  DesignSpec design;
  PriorSpec prior;

  long long iterations = 2000;
  long long burn_in = 1000;
  int thin = 1;
  int batch = 50;
  long long checkpoint_every = 500;
  std::uint64_t seed = 1;
  bool store_S = false;

  // simulate
  int scenario = 1;
  int sites = 100;
  int replicates = 32;
  std::uint64_t sim_seed = 2024;

  // diagnose
  std::vector<double> u_grid{0.9, 0.95, 0.99};
  double window_h = 1.0;
  double window_h_tol = 0.15;  // fraction of window_h
  int window_nx = 3;
  int window_ny = 3;
  long long harness_draws = 1'000'000;

  // coverage
  int datasets = 25;
  std::vector<double> ci_levels{0.5, 0.8, 0.95};

  std::string data;
  std::string holdout;

  double effective_range_phi() const;
  double effective_range_rho() const;
  ModelSpec model_spec() const;
  ChainConfig chain_config() const;
  std::uint64_t digest() const;  // FNV-1a of the serialised text
  void validate() const;
};

// key = value lines; '#' starts a comment. Unknown keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& c);

// ---- station tables ----------------------------------------------------

struct StationRow {
  std::string station_id;
  double lon = 0.0, lat = 0.0, elev = 0.0;
  int year = 0;
  double value = NAN;  // NaN when missing
};

struct IngestReport {
  int stations_kept = 0;
  int stations_dropped = 0;
  int years_masked = 0;
  std::vector<int> missing_histogram;  // stations per tenth of missing fraction
  std::vector<std::string> dropped;
};

struct StationTable {
  std::vector<StationRow> rows;
  IngestReport report;

  // Stations in order of first appearance, years ascending; absent rows are missing.
  Dataset to_dataset() const;
  static StationTable from_dataset(const Dataset& d);
};

// Header is exactly station_id,lon,lat,elev,year,value; an empty value is missing.
StationTable read_station_csv(const std::string& path);
StationTable parse_station_csv(const std::string& text);
void write_station_csv(const std::string& path, const StationTable& t);
std::string format_station_csv(const StationTable& t);

// Daily records: station_id,lon,lat,elev,year,day,value. A season maximum is kept when
// at least season_fraction of its days are observed. A station's overall observed fraction
// decides its split: >= train_fraction trains, (holdout_lower, train_fraction) holds out.
struct CompletenessRule {
  int season_days = 92;
  double season_fraction = 2.0 / 3.0;
  double train_fraction = 0.9;
  double holdout_lower = 0.85;
};

struct DailySplit {
  StationTable train;
  StationTable holdout;
};

DailySplit ingest_daily(const std::string& path, const CompletenessRule& rule);
DailySplit ingest_daily_text(const std::string& text, const CompletenessRule& rule);

// ---- run directories ---------------------------------------------------

// Truth sidecar: key = value text describing the generating ProcessSpec.
void write_truth(const std::string& path, const ProcessSpec& spec);
std::map<std::string, std::string> read_key_values(const std::string& path);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);
void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header = {});

// Lists every file in the directory with its FNV-1a digest.
void write_manifest(const std::string& dir, const RunConfig& c, const std::string& command);

// Exclusive writer lock on an output directory, released on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::string& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::string path_;
};

}  // namespace scalemix
