#pragma once

#include <cstddef>
#include <vector>

#include "scalemix/random.hpp"

namespace scalemix {

struct StableParams {
  double alpha = 0.5;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 0.0;

  void validate() const;
};

// Chambers-Mallows-Stuck, alpha != 1 only.
double sample_stable(const StableParams& p, Rng& rng);
std::vector<double> sample_stable(const StableParams& p, std::size_t n, Rng& rng);

// Levy law: Stable(1/2, 1, gamma, delta).
double sample_levy(double gamma, Rng& rng);
double levy_density(double x, double gamma, double delta = 0.0);
double levy_log_density(double x, double gamma, double delta = 0.0);
double levy_cdf(double x, double gamma, double delta = 0.0);
double levy_survival(double x, double gamma, double delta = 0.0);

// C_alpha = Gamma(alpha) sin(alpha pi / 2) / pi
double stable_tail_constant(double alpha);
// gamma^alpha (1 + beta) C_alpha x^-alpha
double stable_tail_asymptote(double x, const StableParams& p);

// {sum (w_k gamma_k)^alpha}^(1/alpha)
double mixture_scale(const std::vector<double>& weights, const std::vector<double>& gammas, double alpha);

}  // namespace scalemix
