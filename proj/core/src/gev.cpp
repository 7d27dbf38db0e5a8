#include "scalemix/gev.hpp"

#include <cmath>

#include "scalemix/error.hpp"

namespace scalemix {

void GEVParams::validate() const {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::parameter, "GEV scale must be positive");
  require(std::isfinite(mu) && std::isfinite(xi), ErrorKind::parameter, "GEV location and shape must be finite");
}

bool gev_in_support(double y, const GEVParams& p) {
  if (std::isnan(y)) return false;
  if (std::abs(p.xi) < gumbel_threshold) return std::isfinite(y);
  return 1.0 + p.xi * (y - p.mu) / p.sigma > 0.0;
}

double gev_log_t(double y, const GEVParams& p) {
  const double z = (y - p.mu) / p.sigma;
  if (std::abs(p.xi) < gumbel_threshold) return -z;
  const double a = p.xi * z;
  if (!(a > -1.0)) return p.xi > 0.0 ? INFINITY : -INFINITY;
  return -std::log1p(a) / p.xi;
}

double gev_cdf(double y, const GEVParams& p) {
  p.validate();
  return std::exp(-std::exp(gev_log_t(y, p)));
}

double gev_survival(double y, const GEVParams& p) {
  p.validate();
  return -std::expm1(-std::exp(gev_log_t(y, p)));
}

double gev_logpdf(double y, const GEVParams& p) {
  p.validate();
  if (!gev_in_support(y, p)) return -INFINITY;
  const double lt = gev_log_t(y, p);
  return -std::log(p.sigma) + (1.0 + p.xi) * lt - std::exp(lt);
}

double gev_pdf(double y, const GEVParams& p) { return std::exp(gev_logpdf(y, p)); }

namespace {
double from_log_t(double lt, const GEVParams& p) {
  if (std::abs(p.xi) < gumbel_threshold) return p.mu - p.sigma * lt;
  return p.mu + p.sigma * std::expm1(-p.xi * lt) / p.xi;
}
}  // namespace

double gev_quantile(double prob, const GEVParams& p) {
  p.validate();
  require(prob > 0.0 && prob < 1.0, ErrorKind::domain, "GEV quantile level must lie in (0, 1)");
  return from_log_t(std::log(-std::log(prob)), p);
}

double gev_upper_quantile(double q, const GEVParams& p) {
  p.validate();
  require(q > 0.0 && q < 1.0, ErrorKind::domain, "GEV exceedance level must lie in (0, 1)");
  return from_log_t(std::log(-std::log1p(-q)), p);
}

}  // namespace scalemix
