#include "scalemix/margins.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "scalemix/error.hpp"
#include "scalemix/stable.hpp"

namespace scalemix {

namespace {

constexpr double node_step = 0.15;
constexpr double node_margin = 38.0;
const double node_top = std::log(9.5);
const double node_weight = node_step * std::sqrt(2.0 / std::numbers::pi);

double tail_constant(const MixtureMarginal& m) {
  return 2.0 * stable_tail_constant(m.alpha) * std::pow(m.bar_gamma, m.alpha);
}

}  // namespace

void MixtureMarginal::validate() const {
  require(phi > 0.0 && std::isfinite(phi), ErrorKind::parameter, "phi must be positive");
  require(bar_gamma > 0.0 && std::isfinite(bar_gamma), ErrorKind::parameter, "bar_gamma must be positive");
  require(alpha == levy_alpha, ErrorKind::parameter, "closed-form margins need alpha = 1/2");
  require(delta == 0.0, ErrorKind::parameter, "closed-form margins need delta = 0");
}

MarginalIntegrator::MarginalIntegrator(const MixtureMarginal& m, double x_cover) : m_(m) {
  m_.validate();
  y_top_ = node_top;
  gamma_pow_ = std::pow(m_.bar_gamma, -m_.phi);
  if (!(x_cover > 0.0)) x_cover = std::min(initial_guess(1e-10, true), 1e300);
  const std::size_t n = nodes_needed(x_cover);
  g_.resize(n);
  e_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = y_top_ - static_cast<double>(i) * node_step;
    const double ey = std::exp(y);
    g_[i] = node_weight * std::exp(-0.5 * ey * ey) * ey;
    e_[i] = std::exp(2.0 * m_.phi * y) * gamma_pow_;
  }
}

std::size_t MarginalIntegrator::nodes_needed(double x) const {
  double ystar = 0.0;
  if (x > 0.0) ystar = std::min(0.0, 0.5 * std::log(m_.bar_gamma) - std::log(x) / (2.0 * m_.phi));
  const double span = y_top_ - (ystar - node_margin);
  return static_cast<std::size_t>(std::ceil(span / node_step)) + 1;
}

MarginalValues MarginalIntegrator::evaluate(double x) const {
  require(x >= 0.0 && std::isfinite(x), ErrorKind::domain, "marginal evaluated outside [0, inf)");
  const std::size_t n = nodes_needed(x);
  const std::size_t stored = std::min(n, g_.size());
  double s = 0.0, f = 0.0, d = 0.0;
  for (std::size_t i = 0; i < stored; ++i) {
    const double a = x * e_[i];
    const double inv = 1.0 / (1.0 + a);
    s += g_[i] * inv;
    f += g_[i] * a * inv;
    d += g_[i] * e_[i] * inv * inv;
  }
  for (std::size_t i = stored; i < n; ++i) {
    const double y = y_top_ - static_cast<double>(i) * node_step;
    const double ey = std::exp(y);
    const double g = node_weight * std::exp(-0.5 * ey * ey) * ey;
    const double e = std::exp(2.0 * m_.phi * y) * gamma_pow_;
    const double a = x * e;
    const double inv = 1.0 / (1.0 + a);
    s += g * inv;
    f += g * a * inv;
    d += g * e * inv * inv;
  }
  MarginalValues v;
  v.survival = std::min(s, 1.0);
  v.cdf = std::min(f, 1.0);
  v.density = d;
  if (!std::isfinite(s) || !std::isfinite(d)) throw Error(ErrorKind::numeric, "marginal quadrature produced non-finite value");
  return v;
}

double MarginalIntegrator::density_at_zero() const {
  return gamma_pow_ * std::pow(2.0, m_.phi) * std::tgamma(m_.phi + 0.5) / std::sqrt(std::numbers::pi);
}

double MarginalIntegrator::initial_guess(double level, bool upper) const {
  if (!upper) return level / density_at_zero();
  const double c = tail_constant(m_);
  if (m_.phi < m_.alpha) return levy_fractional_moment(m_.phi, m_) / level;
  if (m_.phi > m_.alpha) return std::pow(c / (1.0 - m_.alpha / m_.phi) / level, m_.phi / m_.alpha);
  return c * std::max(1.0, std::log(c / level)) / level;
}

double MarginalIntegrator::solve(double level, bool upper, double guess, MarginalValues* at) const {
  require(level > 0.0 && level < 1.0, ErrorKind::domain, "quantile level must lie in (0, 1)");
  if (!(guess > 0.0) || !std::isfinite(guess)) guess = initial_guess(level, upper);
  double u = std::log(std::clamp(guess, 1e-300, 1e300));
  double lo = -INFINITY, hi = INFINITY;
  const double target = std::log(level);
  for (int it = 0; it < 200; ++it) {
    const double x = std::exp(u);
    const MarginalValues v = evaluate(x);
    const double val = upper ? v.survival : v.cdf;
    const double h = std::log(val) - target;
    if (std::abs(h) <= 1e-12) {
      if (at) *at = v;
      return x;
    }
    // h > 0 means x is too small for the survival target and too large for the cdf target
    if ((h > 0.0) == upper)
      lo = u;
    else
      hi = u;
    const double slope = (upper ? -1.0 : 1.0) * x * v.density / val;
    double next = u - h / slope;
    // A flat density far from the root sends Newton off; walk instead while a side is open.
    if (!std::isfinite(hi)) next = std::min(next, u + 4.0);
    if (!std::isfinite(lo)) next = std::max(next, u - 4.0);
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      if (std::isfinite(lo) && std::isfinite(hi))
        next = 0.5 * (lo + hi);
      else if (std::isfinite(lo))
        next = lo + 4.0;
      else
        next = hi - 4.0;
    }
    if (std::abs(next - u) < 1e-15 * std::max(1.0, std::abs(u))) {
      if (at) *at = v;
      return x;
    }
    if (next > 700.0 || next < -700.0) throw Error(ErrorKind::numeric, "marginal quantile bracket left the double range");
    u = next;
  }
  throw Error(ErrorKind::numeric, "marginal quantile did not converge");
}

double MarginalIntegrator::upper_quantile(double q, double guess, MarginalValues* at) const {
  return solve(q, true, guess, at);
}

double MarginalIntegrator::lower_quantile(double p, double guess, MarginalValues* at) const {
  return solve(p, false, guess, at);
}

double MarginalIntegrator::quantile(double cdf, double survival, double guess, MarginalValues* at) const {
  if (survival < cdf) return upper_quantile(survival, guess, at);
  return lower_quantile(cdf, guess, at);
}

double x_survival(double x, const MixtureMarginal& m) {
  require(x >= 0.0, ErrorKind::domain, "x must be nonnegative");
  return MarginalIntegrator(m, std::max(x, 1.0)).survival(x);
}

double x_cdf(double x, const MixtureMarginal& m) {
  require(x >= 0.0, ErrorKind::domain, "x must be nonnegative");
  return MarginalIntegrator(m, std::max(x, 1.0)).evaluate(x).cdf;
}

double x_density(double x, const MixtureMarginal& m) {
  require(x >= 0.0, ErrorKind::domain, "x must be nonnegative");
  return MarginalIntegrator(m, std::max(x, 1.0)).density(x);
}

double x_quantile(double p, const MixtureMarginal& m) {
  require(p > 0.0 && p < 1.0, ErrorKind::domain, "quantile level must lie in (0, 1)");
  MarginalIntegrator integ(m);
  return integ.quantile(p, 1.0 - p);
}

double levy_fractional_moment(double phi, const MixtureMarginal& m) {
  require(phi > 0.0 && phi < m.alpha, ErrorKind::domain, "fractional moment is infinite for phi >= alpha");
  require(m.delta == 0.0, ErrorKind::domain, "fractional moment needs delta = 0");
  const double a = m.alpha;
  return std::pow(m.bar_gamma, phi) * std::pow(std::cos(std::numbers::pi * a / 2.0), -phi / a) *
         std::tgamma(1.0 - phi / a) / std::tgamma(1.0 - phi);
}

double marginal_tail_asymptote(double x, const MixtureMarginal& m) {
  require(x > 0.0, ErrorKind::domain, "asymptote needs x > 0");
  const double c = tail_constant(m);
  if (m.phi < m.alpha) return levy_fractional_moment(m.phi, m) / x;
  if (m.phi > m.alpha) {
    // E[g(Z)^a] = Gamma(1 + a) Gamma(1 - a) for the delta = 0 link; 1 / (1 - a) is the delta = 1 value.
    const double a = m.alpha / m.phi;
    return c * std::tgamma(1.0 + a) * std::tgamma(1.0 - a) * std::pow(x, -a);
  }
  return c * std::log(x) / x;
}

double link_g(double z, double delta) {
  if (z > 0.0) {
    const double sb = 0.5 * std::erfc(z / std::numbers::sqrt2);
    return delta + (1.0 - sb) / sb;
  }
  const double p = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return delta + p / (1.0 - p);
}

double link_g_inverse(double w, double delta) {
  require(w >= delta, ErrorKind::domain, "link inverse needs w >= delta");
  require(w > delta, ErrorKind::domain, "w = delta maps to z = -inf");
  require(std::isfinite(w), ErrorKind::domain, "w must be finite");
  const double v = w - delta;
  if (v > 1.0) return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 / (1.0 + v));
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * v / (1.0 + v));
}

double x_to_z(double x, double r, double phi) {
  require(r > 0.0, ErrorKind::domain, "scaling value must be positive");
  return link_g_inverse(x * std::pow(r, -phi));
}

double z_to_x(double z, double r, double phi) { return std::pow(r, phi) * link_g(z); }

CopulaPoint copula_Y_to_X(double y, const GEVParams& gev, const MarginalIntegrator& integ, double guess) {
  require(gev_in_support(y, gev), ErrorKind::domain, "observation outside GEV support");
  const double s = gev_survival(y, gev);
  const double c = gev_cdf(y, gev);
  CopulaPoint out;
  out.x = integ.quantile(c, s, guess, &out.at);
  return out;
}

double copula_X_to_Y(double x, const GEVParams& gev, const MarginalIntegrator& integ) {
  const MarginalValues v = integ.evaluate(x);
  if (v.survival < 0.5) return gev_upper_quantile(v.survival, gev);
  return gev_quantile(v.cdf, gev);
}

double log_jacobian(double y, double x, double z, double r, double phi, const GEVParams& gev, double fx) {
  const double lr = std::log(r);
  const double w = x * std::exp(-phi * lr);
  const double log_phi_z = -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
  return -log_phi_z - 2.0 * std::log1p(w) - phi * lr + gev_logpdf(y, gev) - std::log(fx);
}

double jacobian_diag(double y, double x, double z, double r, double phi, const GEVParams& gev,
                     const MixtureMarginal& m) {
  const double fx = x_density(x, m);
  require(fx > 0.0 && std::isfinite(fx), ErrorKind::numeric, "degenerate marginal density");
  return std::exp(log_jacobian(y, x, z, r, phi, gev, fx));
}

Matrix DesignSpec::build(const std::vector<std::string>& terms, const SiteCovariates& cov) const {
  const auto D = static_cast<Eigen::Index>(cov.sites.size());
  Matrix m(D, static_cast<Eigen::Index>(terms.size()));
  for (std::size_t c = 0; c < terms.size(); ++c) {
    const std::string& t = terms[c];
    for (Eigen::Index j = 0; j < D; ++j) {
      double v;
      if (t == "1")
        v = 1.0;
      else if (t == "x")
        v = cov.sites[j].x;
      else if (t == "y")
        v = cov.sites[j].y;
      else if (t == "elev") {
        require(cov.elev.size() == cov.sites.size(), ErrorKind::validation, "elevation column missing");
        v = cov.elev[j];
      } else
        throw Error(ErrorKind::validation, "unknown design term '" + t + "'");
      m(j, static_cast<Eigen::Index>(c)) = v;
    }
  }
  return m;
}

MarginalRegression MarginalRegression::from_spec(const DesignSpec& spec, const SiteCovariates& cov, const Vector& time) {
  MarginalRegression r;
  r.mu0_design = spec.build(spec.mu0, cov);
  r.mu1_design = spec.build(spec.mu1, cov);
  r.logsigma_design = spec.build(spec.logsigma, cov);
  r.xi_design = spec.build(spec.xi, cov);
  r.mu0 = Vector::Zero(r.mu0_design.cols());
  r.mu1 = Vector::Zero(r.mu1_design.cols());
  r.logsigma = Vector::Zero(r.logsigma_design.cols());
  r.xi = Vector::Zero(r.xi_design.cols());
  r.time = time;
  return r;
}

MarginalRegression MarginalRegression::constant(Eigen::Index sites, Eigen::Index times, const GEVParams& p) {
  p.validate();
  MarginalRegression r;
  r.mu0_design = Matrix::Ones(sites, 1);
  r.mu1_design = Matrix(sites, 0);
  r.logsigma_design = Matrix::Ones(sites, 1);
  r.xi_design = Matrix::Ones(sites, 1);
  r.mu0 = Vector::Constant(1, p.mu);
  r.mu1 = Vector(0);
  r.logsigma = Vector::Constant(1, std::log(p.sigma));
  r.xi = Vector::Constant(1, p.xi);
  r.time = Vector::Zero(times);
  return r;
}

Vector MarginalRegression::mu0_surface() const { return mu0_design * mu0; }
Vector MarginalRegression::mu1_surface() const {
  if (mu1_design.cols() == 0) return Vector::Zero(mu0_design.rows());
  return mu1_design * mu1;
}
Vector MarginalRegression::sigma_surface() const { return (logsigma_design * logsigma).array().exp(); }
Vector MarginalRegression::xi_surface() const { return xi_design * xi; }

GEVParams MarginalRegression::at(Eigen::Index site, Eigen::Index t) const {
  GEVParams p;
  p.mu = mu0_design.row(site).dot(mu0);
  if (mu1_design.cols() > 0) p.mu += mu1_design.row(site).dot(mu1) * time[t];
  p.sigma = std::exp(logsigma_design.row(site).dot(logsigma));
  p.xi = xi_design.row(site).dot(xi);
  return p;
}

void MarginalRegression::validate() const {
  const Eigen::Index D = mu0_design.rows();
  require(mu1_design.rows() == D && logsigma_design.rows() == D && xi_design.rows() == D, ErrorKind::validation,
          "marginal design matrices disagree on the site count");
  require(mu0.size() == mu0_design.cols() && mu1.size() == mu1_design.cols() &&
              logsigma.size() == logsigma_design.cols() && xi.size() == xi_design.cols(),
          ErrorKind::validation, "coefficient lengths differ from design columns");
  require(mu1_design.cols() == 0 || time.size() > 0, ErrorKind::validation, "time trend needs a time covariate");
}

}  // namespace scalemix
