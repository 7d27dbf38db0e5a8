#pragma once

namespace scalemix {

struct GEVParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;

  void validate() const;
};

constexpr double gumbel_threshold = 1e-8;

bool gev_in_support(double y, const GEVParams& p);
// t(y) = (1 + xi (y - mu)/sigma)^(-1/xi), or exp(-(y - mu)/sigma) near xi = 0.
double gev_log_t(double y, const GEVParams& p);
double gev_cdf(double y, const GEVParams& p);
double gev_survival(double y, const GEVParams& p);
double gev_pdf(double y, const GEVParams& p);
double gev_logpdf(double y, const GEVParams& p);
double gev_quantile(double prob, const GEVParams& p);
// y with gev_survival(y) = q; keeps precision for tiny q.
double gev_upper_quantile(double q, const GEVParams& p);

}  // namespace scalemix
