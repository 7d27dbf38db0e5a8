#include "scalemix/stable.hpp"

#include <cmath>
#include <numbers>

#include "scalemix/error.hpp"

namespace scalemix {

void StableParams::validate() const {
  require(alpha > 0.0 && alpha <= 2.0, ErrorKind::parameter, "stable alpha must lie in (0, 2]");
  require(std::abs(beta) <= 1.0, ErrorKind::parameter, "stable beta must lie in [-1, 1]");
  require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::parameter, "stable gamma must be positive");
  require(std::isfinite(delta), ErrorKind::parameter, "stable delta must be finite");
  require(alpha != 1.0, ErrorKind::parameter, "alpha = 1 is not supported");
}

double sample_stable(const StableParams& p, Rng& rng) {
  const double a = p.alpha;
  const double zeta = -p.beta * std::tan(std::numbers::pi * a / 2.0);
  const double xi = std::atan(-zeta) / a;
  const double u = std::numbers::pi * (uniform(rng) - 0.5);
  const double e = std_exponential(rng);
  const double x = std::pow(1.0 + zeta * zeta, 1.0 / (2.0 * a)) * std::sin(a * (u + xi)) /
                   std::pow(std::cos(u), 1.0 / a) *
                   std::pow(std::cos(u - a * (u + xi)) / e, (1.0 - a) / a);
  return p.gamma * x + p.delta;
}

std::vector<double> sample_stable(const StableParams& p, std::size_t n, Rng& rng) {
  p.validate();
  require(n >= 1, ErrorKind::parameter, "need at least one draw");
  std::vector<double> out(n);
  for (auto& v : out) v = sample_stable(p, rng);
  return out;
}

double sample_levy(double gamma, Rng& rng) {
  const double n = std_normal(rng);
  return gamma / (n * n);
}

double levy_log_density(double x, double gamma, double delta) {
  require(gamma > 0.0, ErrorKind::parameter, "levy gamma must be positive");
  const double s = x - delta;
  if (!(s > 0.0)) return -INFINITY;
  return 0.5 * std::log(gamma / (2.0 * std::numbers::pi)) - 1.5 * std::log(s) - gamma / (2.0 * s);
}

double levy_density(double x, double gamma, double delta) {
  return std::exp(levy_log_density(x, gamma, delta));
}

double levy_cdf(double x, double gamma, double delta) {
  require(gamma > 0.0, ErrorKind::parameter, "levy gamma must be positive");
  const double s = x - delta;
  if (!(s > 0.0)) return 0.0;
  if (std::isinf(s)) return 1.0;
  return std::erfc(std::sqrt(gamma / (2.0 * s)));
}

double levy_survival(double x, double gamma, double delta) {
  require(gamma > 0.0, ErrorKind::parameter, "levy gamma must be positive");
  const double s = x - delta;
  if (!(s > 0.0)) return 1.0;
  return std::erf(std::sqrt(gamma / (2.0 * s)));
}

double stable_tail_constant(double alpha) {
  return std::tgamma(alpha) * std::sin(alpha * std::numbers::pi / 2.0) / std::numbers::pi;
}

double stable_tail_asymptote(double x, const StableParams& p) {
  return std::pow(p.gamma, p.alpha) * (1.0 + p.beta) * stable_tail_constant(p.alpha) * std::pow(x, -p.alpha);
}

double mixture_scale(const std::vector<double>& weights, const std::vector<double>& gammas, double alpha) {
  require(weights.size() == gammas.size(), ErrorKind::parameter, "weights and gammas differ in length");
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    require(weights[k] >= 0.0, ErrorKind::parameter, "negative kernel weight");
    require(gammas[k] > 0.0, ErrorKind::parameter, "stable gamma must be positive");
    if (weights[k] > 0.0) acc += std::pow(weights[k] * gammas[k], alpha);
  }
  require(acc > 0.0, ErrorKind::degeneracy, "all mixture weights are zero");
  return std::pow(acc, 1.0 / alpha);
}

}  // namespace scalemix
