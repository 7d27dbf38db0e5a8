#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <regex>
#include <set>
#include <sstream>

#include "scalemix/error.hpp"
#include "scalemix/io.hpp"
#include "scalemix/text.hpp"

namespace scalemix {

ModelName ModelName::parse(const std::string& name) {
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "hw-stationary" || lower == "h-w stationary") return {1, infinite_radius, infinite_radius, false};
  static const std::regex re(R"(k([0-9]+)r([0-9]+(?:\.[0-9]+)?)b([0-9]+(?:\.[0-9]+)?)(m?))");
  std::smatch m;
  require(std::regex_match(name, m, re), ErrorKind::validation,
          "model name '" + name + "' is not of the form k<knots>r<radius>b<bandwidth>[m]");
  ModelName n;
  n.knots = static_cast<int>(parse_int(m[1].str()));
  n.radius = parse_double(m[2].str());
  n.bandwidth = parse_double(m[3].str());
  n.fix_margins = m[4].length() > 0;
  require(n.knots >= 1 && n.radius > 0.0 && n.bandwidth > 0.0, ErrorKind::validation,
          "model name '" + name + "' has a zero component");
  return n;
}

std::string ModelName::str() const {
  if (knots == 1 && std::isinf(radius) && std::isinf(bandwidth) && !fix_margins) return "hw-stationary";
  return "k" + std::to_string(knots) + "r" + format_double(radius) + "b" + format_double(bandwidth) +
         (fix_margins ? "m" : "");
}

double RunConfig::effective_range_phi() const { return gaussian_effective_range(bandwidth_phi); }
double RunConfig::effective_range_rho() const { return gaussian_effective_range(bandwidth_rho); }

ModelSpec RunConfig::model_spec() const {
  ModelSpec m;
  m.knots = KnotGrid::with_count(knots, domain_lo, domain_hi);
  if (rho_knots != 0 && rho_knots != knots) m.rho_knots = KnotGrid::with_count(rho_knots, domain_lo, domain_hi);
  m.kernel = KernelConfig{radius, exponent, bandwidth_phi, bandwidth_rho};
  m.gamma = Vector::Constant(static_cast<Eigen::Index>(m.knots.size()), gamma);
  m.nu = nu;
  m.design = design;
  m.fix_margins = fix_margins;
  m.update_xi = update_xi;
  return m;
}

ChainConfig RunConfig::chain_config() const {
  ChainConfig c;
  c.iterations = iterations;
  c.burn_in = burn_in;
  c.thin = thin;
  c.batch = batch;
  c.checkpoint_every = checkpoint_every;
  c.seed = seed;
  c.config_digest = digest();
  c.store_S = store_S;
  c.update_margins = !fix_margins;
  return c;
}

std::uint64_t RunConfig::digest() const { return fnv1a(serialize_config(*this)); }

void RunConfig::validate() const {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const char* msg) {
    if (!ok) bad.emplace_back(msg);
  };
  check(knots >= 1, "knots must be positive");
  check(rho_knots >= 0, "rho_knots must be nonnegative");
  check(radius > 0.0, "radius must be positive");
  check(exponent >= 2, "exponent must be at least 2");
  check(bandwidth_phi > 0.0 && bandwidth_rho > 0.0, "bandwidths must be positive");
  check(domain_hi > domain_lo, "domain must have positive width");
  check(gamma > 0.0, "gamma must be positive");
  check(nu > 0.0, "nu must be positive");
  check(iterations >= 1, "iterations must be positive");
  check(burn_in >= 0 && burn_in < iterations, "burn_in must lie in [0, iterations)");
  check(thin >= 1 && batch >= 1, "thin and batch must be positive");
  check(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
  check(scenario >= 1 && scenario <= 3, "scenario must be 1, 2 or 3");
  check(sites >= 1 && replicates >= 1, "sites and replicates must be positive");
  for (double u : u_grid) check(u > 0.0 && u < 1.0, "u_grid entries must lie in (0, 1)");
  for (double l : ci_levels) check(l > 0.0 && l < 1.0, "ci_levels entries must lie in (0, 1)");
  check(window_h > 0.0 && window_h_tol >= 0.0, "window distance must be positive");
  check(window_nx >= 1 && window_ny >= 1, "window grid must be nonempty");
  check(harness_draws >= 100'000, "harness_draws must be at least 1e5");
  check(datasets >= 1, "datasets must be positive");
  check(prior.phi_a > 0.0 && prior.phi_b > 0.0 && prior.rho_sd > 0.0 && prior.levy_gamma > 0.0 &&
            prior.coef_sd > 0.0,
        "prior settings must be positive");
  if (!bad.empty()) {
    std::string msg = "invalid run configuration:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw Error(ErrorKind::validation, msg);
  }
}

namespace {

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  return s;
}

std::string join_words(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
  return s;
}

// Lists separate on whitespace or commas.
std::vector<std::string> words(std::string s) {
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::vector<double> doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& w : words(s)) out.push_back(parse_double(w));
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(ErrorKind::validation, "not a boolean: '" + s + "'");
}

std::uint64_t parse_u64(const std::string& s) {
  const std::string_view t = trim(s);
  std::uint64_t v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  require(!t.empty() && r.ec == std::errc() && r.ptr == t.data() + t.size(), ErrorKind::validation,
          "not a seed in [0, 2^64): '" + s + "'");
  return v;
}

// One table drives both directions so the two cannot drift apart.
struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SCALEMIX_DOUBLE(k, m) \
  {k, [](const RunConfig& c) { return format_double(c.m); }, [](RunConfig& c, const std::string& v) { c.m = parse_double(v); }}
#define SCALEMIX_INT(k, m)                                                        \
  {k, [](const RunConfig& c) { return std::to_string(c.m); },                     \
   [](RunConfig& c, const std::string& v) { c.m = static_cast<decltype(c.m)>(parse_int(v)); }}
#define SCALEMIX_BOOL(k, m) \
  {k, [](const RunConfig& c) { return std::string(c.m ? "true" : "false"); }, [](RunConfig& c, const std::string& v) { c.m = parse_bool(v); }}
#define SCALEMIX_SEED(k, m) \
  {k, [](const RunConfig& c) { return std::to_string(c.m); }, [](RunConfig& c, const std::string& v) { c.m = parse_u64(v); }}
#define SCALEMIX_LIST(k, m) \
  {k, [](const RunConfig& c) { return join_doubles(c.m); }, [](RunConfig& c, const std::string& v) { c.m = doubles(v); }}
#define SCALEMIX_TERMS(k, m) \
  {k, [](const RunConfig& c) { return join_words(c.m); }, [](RunConfig& c, const std::string& v) { c.m = words(v); }}
#define SCALEMIX_TEXT(k, m) \
  {k, [](const RunConfig& c) { return c.m; }, [](RunConfig& c, const std::string& v) { c.m = v; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      SCALEMIX_TEXT("name", name),
      SCALEMIX_INT("knots", knots),
      SCALEMIX_INT("rho_knots", rho_knots),
      SCALEMIX_DOUBLE("radius", radius),
      SCALEMIX_INT("exponent", exponent),
      SCALEMIX_DOUBLE("bandwidth_phi", bandwidth_phi),
      SCALEMIX_DOUBLE("bandwidth_rho", bandwidth_rho),
      SCALEMIX_BOOL("fix_margins", fix_margins),
      SCALEMIX_BOOL("update_xi", update_xi),
      SCALEMIX_DOUBLE("domain_lo", domain_lo),
      SCALEMIX_DOUBLE("domain_hi", domain_hi),
      SCALEMIX_DOUBLE("gamma", gamma),
      SCALEMIX_DOUBLE("nu", nu),
      SCALEMIX_TERMS("design.mu0", design.mu0),
      SCALEMIX_TERMS("design.mu1", design.mu1),
      SCALEMIX_TERMS("design.logsigma", design.logsigma),
      SCALEMIX_TERMS("design.xi", design.xi),
      SCALEMIX_DOUBLE("prior.phi_a", prior.phi_a),
      SCALEMIX_DOUBLE("prior.phi_b", prior.phi_b),
      SCALEMIX_DOUBLE("prior.rho_sd", prior.rho_sd),
      SCALEMIX_DOUBLE("prior.levy_gamma", prior.levy_gamma),
      SCALEMIX_DOUBLE("prior.coef_sd", prior.coef_sd),
      SCALEMIX_INT("chain.iterations", iterations),
      SCALEMIX_INT("chain.burn_in", burn_in),
      SCALEMIX_INT("chain.thin", thin),
      SCALEMIX_INT("chain.batch", batch),
      SCALEMIX_INT("chain.checkpoint_every", checkpoint_every),
      SCALEMIX_SEED("chain.seed", seed),
      SCALEMIX_BOOL("chain.store_S", store_S),
      SCALEMIX_INT("simulate.scenario", scenario),
      SCALEMIX_INT("simulate.sites", sites),
      SCALEMIX_INT("simulate.replicates", replicates),
      SCALEMIX_SEED("simulate.seed", sim_seed),
      SCALEMIX_LIST("diagnose.u_grid", u_grid),
      SCALEMIX_DOUBLE("diagnose.window_h", window_h),
      SCALEMIX_DOUBLE("diagnose.window_h_tol", window_h_tol),
      SCALEMIX_INT("diagnose.window_nx", window_nx),
      SCALEMIX_INT("diagnose.window_ny", window_ny),
      SCALEMIX_INT("diagnose.harness_draws", harness_draws),
      SCALEMIX_INT("coverage.datasets", datasets),
      SCALEMIX_LIST("coverage.ci_levels", ci_levels),
      SCALEMIX_TEXT("data", data),
      SCALEMIX_TEXT("holdout", holdout),
  };
  return f;
}

#undef SCALEMIX_DOUBLE
#undef SCALEMIX_INT
#undef SCALEMIX_BOOL
#undef SCALEMIX_SEED
#undef SCALEMIX_LIST
#undef SCALEMIX_TERMS
#undef SCALEMIX_TEXT

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::set<std::string> given;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string_view::npos, ErrorKind::validation,
            "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return key == f.key; });
    require(it != fs.end(), ErrorKind::validation,
            "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    require(given.insert(key).second, ErrorKind::validation,
            "config line " + std::to_string(lineno) + ": key '" + key + "' repeated");
    try {
      it->set(c, value);
    } catch (const Error& e) {
      throw Error(ErrorKind::validation, "config line " + std::to_string(lineno) + ": " + e.what());
    }
  }

  if (!c.name.empty()) {
    const ModelName n = ModelName::parse(c.name);
    std::vector<std::string> mismatch;
    auto reconcile_int = [&](const char* key, int& field, int value) {
      if (given.count(key) && field != value)
        mismatch.push_back(std::string(key) + " = " + std::to_string(field) + " but the name says " +
                           std::to_string(value));
      field = value;
    };
    auto reconcile = [&](const char* key, double& field, double value) {
      if (given.count(key) && field != value)
        mismatch.push_back(std::string(key) + " = " + format_double(field) + " but the name says " +
                           format_double(value));
      field = value;
    };
    reconcile_int("knots", c.knots, n.knots);
    if (given.count("rho_knots") && c.rho_knots != 0 && c.rho_knots != n.knots)
      mismatch.push_back("rho_knots = " + std::to_string(c.rho_knots) + " but the name says " +
                         std::to_string(n.knots));
    reconcile("radius", c.radius, n.radius);
    reconcile("bandwidth_phi", c.bandwidth_phi, n.bandwidth);
    reconcile("bandwidth_rho", c.bandwidth_rho, n.bandwidth);
    if (given.count("fix_margins") && c.fix_margins != n.fix_margins)
      mismatch.push_back(std::string("fix_margins = ") + (c.fix_margins ? "true" : "false") + " but the name says " +
                         (n.fix_margins ? "true" : "false"));
    c.fix_margins = n.fix_margins;
    if (!mismatch.empty()) {
      std::string msg = "model name '" + c.name + "' disagrees with its fields:";
      for (const auto& m : mismatch) msg += "\n  " + m;
      throw Error(ErrorKind::validation, msg);
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(c) + "\n";
  return out;
}

}  // namespace scalemix
