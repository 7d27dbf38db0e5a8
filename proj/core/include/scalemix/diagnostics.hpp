#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scalemix/inference.hpp"
#include "scalemix/simulator.hpp"

namespace scalemix {

struct PairSample {
  std::vector<double> ui, uj;  // uniform scores, one per replicate
  int site_i = -1, site_j = -1;
  double dist = NAN;
  bool shared_kernel = false;
};

struct ChiEstimate {
  double u = 0.0;
  double chi = NAN;
  double se = NAN;
  long long n_marginal = 0;
  long long n_joint = 0;
  bool missing = true;
};

// #{u_i > u, u_j > u} / #{u_i > u}; missing when nothing exceeds u.
std::vector<ChiEstimate> empirical_chi(const PairSample& s, const std::vector<double>& u_grid);

struct EtaEstimate {
  double u = 0.95;
  double eta = NAN;
  double se = NAN;
  long long n_exceed = 0;
  bool flagged = true;
};

// Mean excess of min(E_i, E_j), E = -log(1 - u), above its u-quantile.
EtaEstimate empirical_eta(const PairSample& s, double u = 0.95, long long min_exceed = 50);

enum class TailCase { a_i, a_ii, a_iii, b_i, b_ii, b_iii };
const char* case_label(TailCase c);

struct Interval {
  double lower = NAN;
  double upper = NAN;
  bool contains(double v, double slack = 0.0) const { return v >= lower - slack && v <= upper + slack; }
};

struct DependenceBounds {
  TailCase label = TailCase::b_ii;
  double chi = 0.0;  // only a.i has a nonzero limit; theoretical_chi supplies it
  double eta_lower = NAN;
  double eta_upper = NAN;
  bool independent = false;         // disjoint kernels and rho = 0
  bool boundary = false;            // inputs sit on a case boundary
  std::vector<Interval> adjacent;   // both neighbouring intervals when boundary is set
  Interval eta() const { return {eta_lower, eta_upper}; }
};

double eta_gaussian(double rho);
DependenceBounds eta_bounds(double phi_i, double phi_j, double alpha, double eta_W, double rho_ij, bool shared_kernel);

struct ChiValue {
  double value = 0.0;
  double se = 0.0;
  // sum_k E[min(v_ki U_i, v_kj U_j)]; equals value when the shared weights agree
  double single_jump = 0.0;
  TailCase label = TailCase::a_i;
};

// v_k = (w_k gamma_k)^alpha normalised per site; returns sum_k min(v_ki, v_kj).
double shared_weight_mass(const std::vector<double>& wi, const std::vector<double>& wj,
                          const std::vector<double>& gammas, double alpha);
// P(X > h, Y > k) for a standard bivariate normal pair with correlation rho.
double bivariate_normal_upper(double h, double k, double rho);

// E(W^a) for W = delta + g(Z); delta is 0 (the model's link) or 1 (standard Pareto).
double pareto_moment(double a, double delta);

// E[min(W_i^a_i / E W_i^a_i, W_j^a_j / E W_j^a_j)], a = alpha / phi, W = delta + g(Z),
// by quadrature of the joint exceedance probability over levels.
double min_ratio_expectation(double phi_i, double phi_j, double alpha, double rho, double delta = 0.0,
                             double scale_i = 1.0, double scale_j = 1.0);
double min_ratio_expectation_mc(double phi_i, double phi_j, double alpha, double rho, long long n, Rng& rng,
                                double delta = 0.0, double* se = nullptr);

ChiValue theoretical_chi(double phi_i, double phi_j, double alpha, const std::vector<double>& wi,
                         const std::vector<double>& wj, const std::vector<double>& gammas, double rho_ij,
                         double delta = 0.0);
ChiValue theoretical_chi_mc(double phi_i, double phi_j, double alpha, const std::vector<double>& wi,
                            const std::vector<double>& wj, const std::vector<double>& gammas, double rho_ij,
                            long long n, Rng& rng, double delta = 0.0);

// Per-site empirical ranks r / (n + 1); NaN stays NaN.
Matrix rank_scores(const Matrix& Y);
// GEV probability integral transform under fitted margins.
Matrix model_scores(const Matrix& Y, const MarginalRegression& margins);

struct WindowGrid {
  double xmin = 0.0, xmax = 10.0, ymin = 0.0, ymax = 10.0;
  int nx = 1, ny = 1;
  double half_width = 0.0;  // 0 means half the cell size
};

struct WindowChi {
  int window = 0;
  double cx = 0.0, cy = 0.0;
  double u = 0.0;
  double h = 0.0;
  double chi = NAN;
  double se = NAN;
  long long pairs = 0;
  long long n_marginal = 0;
  bool missing = true;
};

std::vector<WindowChi> moving_window_chi(const Matrix& scores, const Sites& sites, const WindowGrid& grid, double h,
                                         double h_tol, const std::vector<double>& u_grid, int min_pairs = 30);
void write_window_csv(const std::string& path, const std::vector<WindowChi>& rows);

// Quantiles of Binomial(n, p) / n at (1 - level) / 2 and (1 + level) / 2.
std::pair<double, double> binomial_band(long long n, double p, double level = 0.95);
std::pair<double, double> clopper_pearson(long long x, long long n, double level = 0.95);

struct FitDraws {
  std::map<std::string, std::vector<double>> draws;
  bool failed = false;
};
using Fitter = std::function<FitDraws(const SimulatedDataset& sim, int index)>;

struct CoverageRow {
  std::string parameter;  // a parameter or a family ("phi", "rho") pooled over knots
  double level = 0.95;
  long long covered = 0;
  long long total = 0;
  double coverage = NAN;
  double band_lower = NAN;
  double band_upper = NAN;
  double ci_lower = NAN;  // Clopper-Pearson interval for the coverage itself
  double ci_upper = NAN;
};

struct CoverageTable {
  std::vector<CoverageRow> rows;
  int datasets = 0;
  int failed = 0;
  const CoverageRow& row(const std::string& parameter, double level) const;
  void write_csv(const std::string& path) const;
};

// Names: mu, sigma, xi, phi_k, rho_k.
std::map<std::string, double> truth_values(const ProcessSpec& spec);
// Equi-tailed interval from draws.
Interval credible_interval(std::vector<double> draws, double level);

CoverageTable coverage_study(const std::function<ProcessSpec(int)>& scenario, int n_datasets,
                             const std::vector<double>& ci_levels, const Fitter& fit);

// Runs the sampler on the simulated data and maps the trace onto truth_values names.
Fitter mcmc_fitter(const ChainConfig& chain, const PriorSpec& prior, bool start_at_truth, bool update_xi = false);

struct HoldoutData {
  SiteCovariates covariates;
  Matrix Y;  // H x T, replicates aligned with the training data
};

struct PredictiveResult {
  Matrix loglik;  // sites x draws, summed over replicates
  std::vector<long long> draw_iterations;
};

// Needs a chain run with store_S. Training sites closer than 1e-9 to a holdout
// site are left out of that site's conditioning set.
PredictiveResult predictive_loglik(const Dataset& train, const HoldoutData& hold, const ModelSpec& model,
                                   const ChainOutput& chain, int max_draws = 200);
// Leave-one-out conditional log-likelihood of every training site, same draws.
PredictiveResult insample_loglik(const Dataset& train, const ModelSpec& model, const ChainOutput& chain,
                                 int max_draws = 200);

struct QQResult {
  std::vector<double> theoretical;
  std::vector<double> empirical;
  std::vector<double> lower;
  std::vector<double> upper;
};

// margin_draws[d][i] are the GEV parameters of observation i under posterior draw d.
QQResult qq_gumbel(const std::vector<double>& y, const std::vector<std::vector<GEVParams>>& margin_draws, int n_rep,
                   Rng& rng);

}  // namespace scalemix
