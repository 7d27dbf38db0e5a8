#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "scalemix/gev.hpp"
#include "scalemix/types.hpp"

namespace scalemix {

constexpr double levy_alpha = 0.5;

struct MixtureMarginal {
  double phi = 0.5;
  double bar_gamma = 1.0;
  double alpha = levy_alpha;
  double delta = 0.0;

  void validate() const;
};

struct MarginalValues {
  double survival = 1.0;
  double cdf = 0.0;
  double density = 0.0;
};

// Law of X = R^phi W with R ~ Levy(bar_gamma) and W standard Pareto, written as
// S(x) = E[1 / (1 + x A)], A = (N^2 / bar_gamma)^phi, N standard normal, and
// evaluated by a trapezoid rule in log|N|. The Gaussian factor of every node is
// independent of x, so one integrator serves all x at a site.
class MarginalIntegrator {
 public:
  MarginalIntegrator() = default;
  explicit MarginalIntegrator(const MixtureMarginal& m, double x_cover = 0.0);

  const MixtureMarginal& marginal() const { return m_; }
  MarginalValues evaluate(double x) const;
  double survival(double x) const { return evaluate(x).survival; }
  double density(double x) const { return evaluate(x).density; }
  double density_at_zero() const;

  // Newton in log x, started from `guess` when it is positive and finite.
  double upper_quantile(double q, double guess = NAN, MarginalValues* at = nullptr) const;
  double lower_quantile(double p, double guess = NAN, MarginalValues* at = nullptr) const;
  // Picks the better-conditioned tail; cdf + survival should be 1.
  double quantile(double cdf, double survival, double guess = NAN, MarginalValues* at = nullptr) const;

  std::size_t stored_nodes() const { return g_.size(); }

 private:
  std::size_t nodes_needed(double x) const;
  double initial_guess(double level, bool upper) const;
  double solve(double level, bool upper, double guess, MarginalValues* at) const;

  MixtureMarginal m_{};
  double y_top_ = 0.0;
  double gamma_pow_ = 1.0;  // bar_gamma^-phi
  std::vector<double> g_;
  std::vector<double> e_;
};

double x_survival(double x, const MixtureMarginal& m);
double x_cdf(double x, const MixtureMarginal& m);
double x_density(double x, const MixtureMarginal& m);
double x_quantile(double p, const MixtureMarginal& m);

double levy_fractional_moment(double phi, const MixtureMarginal& m);
double marginal_tail_asymptote(double x, const MixtureMarginal& m);

// w = delta + u / (1 - u), u = Phi(z)
double link_g(double z, double delta = 0.0);
double link_g_inverse(double w, double delta = 0.0);

double x_to_z(double x, double r, double phi);
double z_to_x(double z, double r, double phi);

struct CopulaPoint {
  double x = 0.0;
  MarginalValues at{};
};

CopulaPoint copula_Y_to_X(double y, const GEVParams& gev, const MarginalIntegrator& integ, double guess = NAN);
double copula_X_to_Y(double x, const GEVParams& gev, const MarginalIntegrator& integ);

// log |dz/dy| for the chain y -> x -> z.
double log_jacobian(double y, double x, double z, double r, double phi, const GEVParams& gev, double x_density);
double jacobian_diag(double y, double x, double z, double r, double phi, const GEVParams& gev,
                     const MixtureMarginal& m);

// Columns available to the marginal regressions.
struct SiteCovariates {
  Sites sites;
  std::vector<double> elev;
};

// Terms are "1", "x", "y" and "elev".
struct DesignSpec {
  std::vector<std::string> mu0{"1"};
  std::vector<std::string> mu1{};
  std::vector<std::string> logsigma{"1"};
  std::vector<std::string> xi{"1"};

  Matrix build(const std::vector<std::string>& terms, const SiteCovariates& cov) const;
};

// mu_t(s) = mu0(s) + mu1(s) time[t]; log sigma(s); xi(s).
struct MarginalRegression {
  Matrix mu0_design, mu1_design, logsigma_design, xi_design;
  Vector mu0, mu1, logsigma, xi;
  Vector time;

  static MarginalRegression from_spec(const DesignSpec& spec, const SiteCovariates& cov, const Vector& time);
  static MarginalRegression constant(Eigen::Index sites, Eigen::Index times, const GEVParams& p);

  Eigen::Index sites() const { return mu0_design.rows(); }
  Vector mu0_surface() const;
  Vector mu1_surface() const;
  Vector sigma_surface() const;
  Vector xi_surface() const;
  GEVParams at(Eigen::Index site, Eigen::Index t) const;
  void validate() const;
};

}  // namespace scalemix
