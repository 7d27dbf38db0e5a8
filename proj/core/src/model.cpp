#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "scalemix/error.hpp"
#include "scalemix/inference.hpp"
#include "scalemix/simulator.hpp"
#include "scalemix/stable.hpp"
#include "scalemix/text.hpp"

namespace scalemix {

void Dataset::validate() const {
  require(Y.rows() == static_cast<Eigen::Index>(covariates.sites.size()), ErrorKind::validation,
          "observation rows differ from site count");
  require(Y.cols() >= 1, ErrorKind::validation, "dataset has no replicates");
  require(time.size() == Y.cols(), ErrorKind::validation, "time covariate length differs from replicate count");
  for (const auto& p : covariates.sites)
    require(std::isfinite(p.x) && std::isfinite(p.y), ErrorKind::validation, "non-finite site coordinate");
}

Dataset Dataset::from_simulation(const SimulatedDataset& sim) {
  Dataset d;
  d.covariates.sites = sim.truth.sites;
  d.covariates.elev = sim.truth.elev;
  d.Y = sim.Y;
  d.time = sim.truth.margins.time;
  if (d.time.size() != d.Y.cols()) d.time = Vector::Zero(d.Y.cols());
  for (std::size_t j = 0; j < sim.truth.sites.size(); ++j) d.station_ids.push_back("S" + std::to_string(j + 1));
  for (Eigen::Index t = 0; t < d.Y.cols(); ++t) d.years.push_back(static_cast<int>(t + 1));
  return d;
}

double PriorSpec::log_phi(double phi) const {
  if (!(phi > 0.0 && phi < 1.0)) return -INFINITY;
  return (phi_a - 1.0) * std::log(phi) + (phi_b - 1.0) * std::log1p(-phi) + std::lgamma(phi_a + phi_b) -
         std::lgamma(phi_a) - std::lgamma(phi_b);
}

double PriorSpec::log_rho(double rho) const {
  if (!(rho > 0.0)) return -INFINITY;
  return std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi * rho_sd * rho_sd) - rho * rho / (2.0 * rho_sd * rho_sd);
}

double PriorSpec::log_S(double s) const { return levy_log_density(s, levy_gamma); }

double PriorSpec::log_coef(double b) const {
  return -0.5 * std::log(2.0 * std::numbers::pi * coef_sd * coef_sd) - b * b / (2.0 * coef_sd * coef_sd);
}

void ModelSpec::validate() const {
  knots.validate();
  range_knots().validate();
  kernel.validate();
  require(gamma.size() == static_cast<Eigen::Index>(knots.size()), ErrorKind::validation,
          "gamma count differs from knot count");
  for (Eigen::Index k = 0; k < gamma.size(); ++k) require(gamma[k] > 0.0, ErrorKind::validation, "gamma must be positive");
  require(nu > 0.0, ErrorKind::validation, "nu must be positive");
}

void ChainConfig::validate() const {
  require(iterations >= 0 && burn_in >= 0, ErrorKind::validation, "iteration counts must be nonnegative");
  require(thin >= 1 && batch >= 1, ErrorKind::validation, "thin and batch must be positive");
  require(checkpoint_every >= 0, ErrorKind::validation, "checkpoint interval must be nonnegative");
  require(target_scalar > 0.0 && target_scalar < 1.0 && target_block > 0.0 && target_block < 1.0,
          ErrorKind::validation, "acceptance targets must lie in (0, 1)");
}

const char* block_name(Block b) {
  switch (b) {
    case Block::mu0: return "mu0";
    case Block::mu1: return "mu1";
    case Block::logsigma: return "logsigma";
    case Block::xi: return "xi";
  }
  return "?";
}

ModelState default_initial_state(const Dataset& data, const ModelSpec& model) {
  ModelState s;
  const auto K = static_cast<Eigen::Index>(model.knots.size());
  const auto Kr = static_cast<Eigen::Index>(model.range_knots().size());
  s.S = Matrix::Ones(K, data.replicates());
  s.phi = Vector::Constant(K, 0.5);
  s.rho = Vector::Constant(Kr, 1.0);
  const std::array<const std::vector<std::string>*, 4> terms{&model.design.mu0, &model.design.mu1,
                                                               &model.design.logsigma, &model.design.xi};
  for (int b = 0; b < 4; ++b) s.coef[b] = Vector::Zero(static_cast<Eigen::Index>(terms[b]->size()));

  double sum = 0.0, sum2 = 0.0, lo = INFINITY;
  long long n = 0;
  for (Eigen::Index j = 0; j < data.sites(); ++j)
    for (Eigen::Index t = 0; t < data.replicates(); ++t)
      if (data.observed(j, t)) {
        const double y = data.Y(j, t);
        sum += y;
        sum2 += y * y;
        lo = std::min(lo, y);
        ++n;
      }
  double mu = 0.0, sigma = 1.0, xi = 0.1;
  if (n >= 2) {
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(sum2 / n - mean * mean, 1e-12));
    sigma = sd * std::sqrt(6.0) / std::numbers::pi;
    mu = mean - 0.5772156649015329 * sigma;
    // keep the smallest observation inside the support
    while (xi > 1e-3 && !(1.0 + xi * (lo - mu) / sigma > 0.05)) xi *= 0.5;
  }
  auto set_intercept = [&](int b, double v) {
    const auto& tv = *terms[b];
    auto it = std::find(tv.begin(), tv.end(), "1");
    if (it != tv.end()) s.coef[b][it - tv.begin()] = v;
  };
  set_intercept(0, mu);
  set_intercept(2, std::log(sigma));
  set_intercept(3, xi);
  return s;
}

void ProposalSlot::count(bool accepted, bool bad) {
  ++attempts;
  ++batch_attempts;
  if (accepted) {
    ++accepts;
    ++batch_accepts;
  }
  if (bad) ++invalid;
}

int ChainOutput::column(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  require(it != names.end(), ErrorKind::validation, "no trace column '" + name + "'");
  return static_cast<int>(it - names.begin());
}

std::vector<double> ChainOutput::draws(const std::string& name) const {
  const auto c = static_cast<std::size_t>(column(name));
  std::vector<double> out;
  for (std::size_t r = 0; r < records(); ++r)
    if (iteration[r] > burn_in) out.push_back(at(r, c));
  return out;
}

void ChainOutput::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::io, "cannot write " + path);
  f << "iteration";
  for (const auto& n : names) f << ',' << n;
  f << ",log_post\n";
  for (std::size_t r = 0; r < records(); ++r) {
    f << iteration[r];
    for (std::size_t c = 0; c < names.size(); ++c) f << ',' << format_double(at(r, c));
    f << ',' << format_double(log_post[r]) << '\n';
  }
  require(static_cast<bool>(f), ErrorKind::io, "short write to " + path);
}

std::uint64_t ChainOutput::hash() const {
  std::uint64_t h = fnv1a_bytes(iteration.data(), iteration.size() * sizeof(long long));
  h = fnv1a_bytes(values.data(), values.size() * sizeof(double), h);
  return fnv1a_bytes(log_post.data(), log_post.size() * sizeof(double), h);
}

}  // namespace scalemix
