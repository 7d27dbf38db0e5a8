#pragma once

#include <vector>

#include "scalemix/random.hpp"
#include "scalemix/types.hpp"

namespace scalemix {

// Matern correlation with unit range: 2^(1-nu)/Gamma(nu) d^nu K_nu(d).
double matern_correlation(double d, double nu);

struct CovarianceFactor {
  Matrix cov;
  Matrix lower;
  double log_det = 0.0;
  double jitter = 0.0;

  Eigen::Index dim() const { return cov.rows(); }
  // Solves L v = x.
  Vector whiten(const Vector& x) const;
};

// Cholesky with the 1e-10 .. 1e-6 jitter ladder.
CovarianceFactor factorize(Matrix cov);

Matrix nonstationary_matern(const Sites& sites, const Vector& rho, double nu);
CovarianceFactor build_covariance(const Sites& sites, const Vector& rho, double nu);

Matrix sample_gp(const CovarianceFactor& factor, int n_replicates, Rng& rng);
// One replicate per stream, so columns do not depend on how many are drawn together.
Vector sample_gp(const CovarianceFactor& factor, Rng& rng);

struct ConditionalGaussian {
  Vector mean;
  Matrix cov;
};

// Law of joint[target] given joint[observed] = values.
ConditionalGaussian conditional_gp(const Matrix& joint, const std::vector<int>& observed,
                                   const std::vector<int>& target, const Vector& values);

double gaussian_log_density(const CovarianceFactor& factor, const Vector& z);

}  // namespace scalemix
