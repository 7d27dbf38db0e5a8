#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "scalemix/error.hpp"
#include "scalemix/io.hpp"
#include "scalemix/text.hpp"

namespace scalemix {

namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::io, "cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorKind::io, "cannot write " + path);
    f << text;
    require(f.good(), ErrorKind::io, "short write to " + path);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorKind::io, "cannot rename " + tmp + ": " + ec.message());
}

void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header) {
  std::string s;
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) s += (c ? "," : "") + header[c];
    s += '\n';
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) s += (c ? "," : "") + format_double(m(r, c));
    s += '\n';
  }
  write_text_file(path, s);
}

namespace {

const char* station_header = "station_id,lon,lat,elev,year,value";
const char* daily_header = "station_id,lon,lat,elev,year,day,value";

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(l);
  }
  return lines;
}

[[noreturn]] void fail_row(int row, const std::string& what) {
  throw Error(ErrorKind::ingestion, "row " + std::to_string(row) + ": " + what);
}

double field_double(const std::string& s, int row, const char* name, bool allow_empty) {
  if (trim(s).empty()) {
    if (allow_empty) return NAN;
    fail_row(row, std::string("empty ") + name);
  }
  try {
    const double v = parse_double(s);
    if (!std::isfinite(v)) fail_row(row, std::string("non-finite ") + name);
    return v;
  } catch (const Error&) {
    fail_row(row, std::string("bad ") + name + " '" + s + "'");
  }
}

int field_int(const std::string& s, int row, const char* name) {
  try {
    return static_cast<int>(parse_int(s));
  } catch (const Error&) {
    fail_row(row, std::string("bad ") + name + " '" + s + "'");
  }
}

struct StationInfo {
  double lon, lat, elev;
  int first_row;
};

void check_station(std::map<std::string, StationInfo>& seen, const StationRow& r, int row) {
  auto [it, fresh] = seen.emplace(r.station_id, StationInfo{r.lon, r.lat, r.elev, row});
  if (!fresh && (it->second.lon != r.lon || it->second.lat != r.lat || it->second.elev != r.elev))
    fail_row(row, "station '" + r.station_id + "' changes coordinates (first seen on row " +
                      std::to_string(it->second.first_row) + ")");
}

}  // namespace

StationTable parse_station_csv(const std::string& text) {
  const auto lines = csv_lines(text);
  require(!lines.empty() && lines[0] == station_header, ErrorKind::ingestion,
          std::string("row 1: header must be exactly ") + station_header);
  StationTable t;
  std::map<std::pair<std::string, int>, int> keys;
  std::map<std::string, StationInfo> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int row = static_cast<int>(i) + 1;
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 6) fail_row(row, "expected 6 fields, found " + std::to_string(f.size()));
    StationRow r;
    r.station_id = std::string(trim(f[0]));
    if (r.station_id.empty()) fail_row(row, "empty station_id");
    r.lon = field_double(f[1], row, "lon", false);
    r.lat = field_double(f[2], row, "lat", false);
    r.elev = field_double(f[3], row, "elev", false);
    r.year = field_int(f[4], row, "year");
    r.value = field_double(f[5], row, "value", true);
    auto [it, fresh] = keys.emplace(std::make_pair(r.station_id, r.year), row);
    if (!fresh)
      fail_row(row, "duplicate (station_id, year) = (" + r.station_id + ", " + std::to_string(r.year) +
                        "), first on row " + std::to_string(it->second));
    check_station(seen, r, row);
    t.rows.push_back(r);
  }
  t.report.stations_kept = static_cast<int>(seen.size());
  return t;
}

StationTable read_station_csv(const std::string& path) { return parse_station_csv(read_text_file(path)); }

std::string format_station_csv(const StationTable& t) {
  std::string s = std::string(station_header) + "\n";
  for (const auto& r : t.rows) {
    s += r.station_id + ',' + format_double(r.lon) + ',' + format_double(r.lat) + ',' + format_double(r.elev) + ',' +
         std::to_string(r.year) + ',';
    if (!std::isnan(r.value)) s += format_double(r.value);
    s += '\n';
  }
  return s;
}

void write_station_csv(const std::string& path, const StationTable& t) { write_text_file(path, format_station_csv(t)); }

Dataset StationTable::to_dataset() const {
  require(!rows.empty(), ErrorKind::ingestion, "station table is empty");
  std::vector<std::string> ids;
  std::map<std::string, int> index;
  std::set<int> years;
  for (const auto& r : rows) {
    if (index.emplace(r.station_id, static_cast<int>(ids.size())).second) ids.push_back(r.station_id);
    years.insert(r.year);
  }
  const std::vector<int> yv(years.begin(), years.end());
  Dataset d;
  d.station_ids = ids;
  d.years = yv;
  d.Y = Matrix::Constant(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(yv.size()), NAN);
  d.covariates.sites.resize(ids.size());
  d.covariates.elev.resize(ids.size());
  for (const auto& r : rows) {
    const int j = index[r.station_id];
    const auto t = std::lower_bound(yv.begin(), yv.end(), r.year) - yv.begin();
    d.Y(j, t) = r.value;
    d.covariates.sites[static_cast<std::size_t>(j)] = {r.lon, r.lat};
    d.covariates.elev[static_cast<std::size_t>(j)] = r.elev;
  }
  d.time.resize(static_cast<Eigen::Index>(yv.size()));
  for (std::size_t t = 0; t < yv.size(); ++t) d.time[static_cast<Eigen::Index>(t)] = yv[t] - yv.front();
  return d;
}

StationTable StationTable::from_dataset(const Dataset& d) {
  StationTable t;
  for (Eigen::Index j = 0; j < d.sites(); ++j) {
    const std::string id = j < static_cast<Eigen::Index>(d.station_ids.size()) ? d.station_ids[j]
                                                                               : "S" + std::to_string(j + 1);
    for (Eigen::Index s = 0; s < d.replicates(); ++s) {
      StationRow r;
      r.station_id = id;
      r.lon = d.covariates.sites[j].x;
      r.lat = d.covariates.sites[j].y;
      r.elev = j < static_cast<Eigen::Index>(d.covariates.elev.size()) ? d.covariates.elev[j] : 0.0;
      r.year = s < static_cast<Eigen::Index>(d.years.size()) ? d.years[s] : static_cast<int>(s + 1);
      r.value = d.Y(j, s);
      t.rows.push_back(r);
    }
  }
  t.report.stations_kept = static_cast<int>(d.sites());
  return t;
}

DailySplit ingest_daily_text(const std::string& text, const CompletenessRule& rule) {
  require(rule.season_days >= 1 && rule.season_fraction > 0.0 && rule.season_fraction <= 1.0 &&
              rule.holdout_lower < rule.train_fraction && rule.train_fraction <= 1.0,
          ErrorKind::parameter, "bad completeness rule");
  const auto lines = csv_lines(text);
  require(!lines.empty() && lines[0] == daily_header, ErrorKind::ingestion,
          std::string("row 1: header must be exactly ") + daily_header);

  struct Season {
    int observed = 0;
    double max = -INFINITY;
  };
  std::vector<std::string> order;
  std::map<std::string, StationInfo> seen;
  std::map<std::string, std::map<int, Season>> seasons;
  std::map<std::tuple<std::string, int, int>, int> keys;
  std::set<int> years;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int row = static_cast<int>(i) + 1;
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 7) fail_row(row, "expected 7 fields, found " + std::to_string(f.size()));
    StationRow r;
    r.station_id = std::string(trim(f[0]));
    if (r.station_id.empty()) fail_row(row, "empty station_id");
    r.lon = field_double(f[1], row, "lon", false);
    r.lat = field_double(f[2], row, "lat", false);
    r.elev = field_double(f[3], row, "elev", false);
    r.year = field_int(f[4], row, "year");
    const int day = field_int(f[5], row, "day");
    if (day < 1 || day > rule.season_days)
      fail_row(row, "day " + std::to_string(day) + " outside 1.." + std::to_string(rule.season_days));
    r.value = field_double(f[6], row, "value", true);
    auto [it, fresh] = keys.emplace(std::make_tuple(r.station_id, r.year, day), row);
    if (!fresh) fail_row(row, "duplicate (station_id, year, day), first on row " + std::to_string(it->second));
    if (!seen.count(r.station_id)) order.push_back(r.station_id);
    check_station(seen, r, row);
    years.insert(r.year);
    Season& s = seasons[r.station_id][r.year];
    if (!std::isnan(r.value)) {
      ++s.observed;
      s.max = std::max(s.max, r.value);
    }
  }

  DailySplit out;
  IngestReport rep;
  rep.missing_histogram.assign(10, 0);
  const double possible = static_cast<double>(years.size()) * rule.season_days;
  for (const auto& id : order) {
    const StationInfo& info = seen[id];
    long long observed = 0;
    for (const auto& [y, s] : seasons[id]) observed += s.observed;
    const double frac = static_cast<double>(observed) / possible;
    rep.missing_histogram[std::min(9, static_cast<int>(std::floor((1.0 - frac) * 10.0)))]++;
    StationTable* dest = nullptr;
    if (frac >= rule.train_fraction) dest = &out.train;
    else if (frac > rule.holdout_lower) dest = &out.holdout;
    if (!dest) {
      ++rep.stations_dropped;
      rep.dropped.push_back(id);
      continue;
    }
    ++rep.stations_kept;
    for (int y : years) {
      StationRow r{id, info.lon, info.lat, info.elev, y, NAN};
      auto it = seasons[id].find(y);
      if (it != seasons[id].end() && it->second.observed >= rule.season_fraction * rule.season_days)
        r.value = it->second.max;
      else
        ++rep.years_masked;
      dest->rows.push_back(r);
    }
  }
  out.train.report = rep;
  out.holdout.report = rep;
  return out;
}

DailySplit ingest_daily(const std::string& path, const CompletenessRule& rule) {
  return ingest_daily_text(read_text_file(path), rule);
}

void write_truth(const std::string& path, const ProcessSpec& spec) {
  auto list = [](const Vector& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
    return s;
  };
  auto points = [](const KnotGrid& g) {
    std::string s;
    for (std::size_t i = 0; i < g.size(); ++i)
      s += (i ? " " : "") + format_double(g.knots[i].x) + ":" + format_double(g.knots[i].y);
    return s;
  };
  std::string s;
  s += "sites = " + std::to_string(spec.sites.size()) + "\n";
  s += "replicates = " + std::to_string(spec.T) + "\n";
  s += "seed = " + std::to_string(spec.seed) + "\n";
  s += "knots = " + points(spec.knots) + "\n";
  s += "rho_knots = " + points(spec.range_knots()) + "\n";
  s += "radius = " + format_double(spec.kernel.radius) + "\n";
  s += "exponent = " + std::to_string(spec.kernel.exponent) + "\n";
  s += "bandwidth_phi = " + format_double(spec.kernel.bandwidth_phi) + "\n";
  s += "bandwidth_rho = " + format_double(spec.kernel.bandwidth_rho) + "\n";
  s += "nu = " + format_double(spec.nu) + "\n";
  s += "gamma = " + list(spec.gamma) + "\n";
  s += "phi = " + list(spec.phi_knots) + "\n";
  s += "rho = " + list(spec.rho_knots_values) + "\n";
  s += "mu0 = " + list(spec.margins.mu0) + "\n";
  s += "mu1 = " + list(spec.margins.mu1) + "\n";
  s += "logsigma = " + list(spec.margins.logsigma) + "\n";
  s += "xi = " + list(spec.margins.xi) + "\n";
  write_text_file(path, s);
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::map<std::string, std::string> out;
  std::istringstream is(read_text_file(path));
  int lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    require(eq != std::string_view::npos, ErrorKind::validation,
            path + " line " + std::to_string(lineno) + ": expected key = value");
    out[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
  }
  return out;
}

void write_manifest(const std::string& dir, const RunConfig& c, const std::string& command) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string n = e.path().filename().string();
    if (n == "manifest.txt" || n == ".lock") continue;
    names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  std::string s = "format = 1\ncommand = " + command + "\nconfig_digest = " + hex64(c.digest()) +
                  "\nseed = " + std::to_string(c.seed) + "\n";
  for (const auto& n : names) {
    const std::string body = read_text_file((fs::path(dir) / n).string());
    s += "file = " + n + " " + hex64(fnv1a(body)) + " " + std::to_string(body.size()) + "\n";
  }
  write_text_file((fs::path(dir) / "manifest.txt").string(), s);
}

DirectoryLock::DirectoryLock(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create " + dir + ": " + ec.message());
  path_ = (fs::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const std::string why = errno == EEXIST ? "another writer holds " + path_ : std::strerror(errno);
    path_.clear();
    throw Error(ErrorKind::io, "cannot lock " + dir + ": " + why);
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  if (!path_.empty()) ::unlink(path_.c_str());
}

}  // namespace scalemix
