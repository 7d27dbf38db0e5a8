#pragma once

#include <cstdint>
#include <vector>

#include "scalemix/gp.hpp"
#include "scalemix/kernels.hpp"
#include "scalemix/margins.hpp"

namespace scalemix {

struct ProcessSpec {
  Sites sites;
  std::vector<double> elev;
  KnotGrid knots;      // S and phi
  KnotGrid rho_knots;  // empty means the same as knots
  KernelConfig kernel;
  Vector phi_knots;
  Vector rho_knots_values;
  Vector gamma;  // per knot, default 0.5
  double nu = 0.5;
  MarginalRegression margins;
  int T = 1;
  std::uint64_t seed = 1;

  const KnotGrid& range_knots() const { return rho_knots.knots.empty() ? knots : rho_knots; }
  void validate() const;
};

// Site-level quantities implied by the knot parameters.
struct ProcessSurfaces {
  WeightMatrix weights;
  Matrix phi_smoother;
  Matrix rho_smoother;
  Vector phi;
  Vector rho;
  Vector bar_gamma;
};

ProcessSurfaces compute_surfaces(const ProcessSpec& spec);
Vector bar_gamma_surface(const WeightMatrix& w, const Vector& gamma, double alpha = levy_alpha);

struct SimulatedDataset {
  Matrix Y, X, R, Z;  // D x T
  Matrix S;           // K x T
  ProcessSpec truth;
};

// Replicate t draws from stream (seed, t).
SimulatedDataset simulate_field(const ProcessSpec& spec);
SimulatedDataset simulate_field(const ProcessSpec& spec, Rng& rng);

// Uniform sites on [0, 10]^2, 3 x 3 knots, r = 4, h = 4, gamma = 0.5, nu = 0.5,
// GEV(0, 1, 0.2). Scenario 1: phi = 0.35; 2: phi ramps 0.3 -> 0.7;
// 3: checkerboard {0.35, 0.65}. rho is 0.6, a 0.2 -> 1.0 ramp, or {0.4, 0.8}.
ProcessSpec build_scenario(int id, int D = 500, int T = 64, std::uint64_t seed = 2024);

struct SitePair {
  int i = 0;
  int j = 0;
};

struct PairTailTable {
  SitePair pair;
  double dist = 0.0;
  double rho_ij = 0.0;
  bool shared_kernel = false;
  std::vector<double> u;
  std::vector<double> chi;
  std::vector<double> chi_se;
  std::vector<long long> marginal_count;
  std::vector<long long> joint_count;
  double eta_u = 0.99;
  double eta = NAN;
  double eta_se = NAN;
  long long eta_exceed = 0;
};

struct HarnessOptions {
  long long draws = 10'000'000;
  std::vector<double> u_grid{0.9, 0.99, 0.999, 0.9999};
  double eta_u = 0.99;
  double prefilter_survival = 0.2;  // candidates for the eta tail
  long long batch = 1'000'000;
  std::uint64_t seed = 7;
};

// Draws of (X_i, X_j) for one pair; the harness uses stream (seed, pair_index << 32 | batch).
struct PairModel {
  std::vector<double> wi, wj, gamma;  // active knots of the pair only
  double phi_i = 0.5, phi_j = 0.5;
  double rho_ij = 0.0;
  MixtureMarginal mi, mj;
};
PairModel pair_model(const ProcessSpec& spec, const ProcessSurfaces& surf, const SitePair& pair);
void pair_draw(const PairModel& pm, Rng& rng, double& xi, double& xj);

// Monte Carlo chi(u) and eta(u) for pairs of sites, with exact marginal
// thresholds and without storing the draws.
std::vector<PairTailTable> pairwise_tail_harness(const ProcessSpec& spec, const std::vector<SitePair>& pairs,
                                                 const HarnessOptions& opt);

}  // namespace scalemix
