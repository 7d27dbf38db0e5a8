#include "scalemix/gp.hpp"

#include <cmath>
#include <numbers>

#include "scalemix/error.hpp"

namespace scalemix {

double matern_correlation(double d, double nu) {
  require(d >= 0.0, ErrorKind::parameter, "negative distance");
  require(nu > 0.0, ErrorKind::parameter, "Matern smoothness must be positive");
  if (d == 0.0) return 1.0;
  if (nu == 0.5) return std::exp(-d);
  if (nu == 1.5) return (1.0 + d) * std::exp(-d);
  if (nu == 2.5) return (1.0 + d + d * d / 3.0) * std::exp(-d);
  if (d > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(d, nu) * std::cyl_bessel_k(nu, d);
}

Vector CovarianceFactor::whiten(const Vector& x) const {
  return lower.triangularView<Eigen::Lower>().solve(x);
}

CovarianceFactor factorize(Matrix cov) {
  CovarianceFactor f;
  const Eigen::Index n = cov.rows();
  double jitter = 0.0;
  for (;;) {
    Matrix a = cov;
    if (jitter > 0.0) a.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) {
      f.lower = llt.matrixL();
      f.cov = std::move(a);
      f.jitter = jitter;
      double ld = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) ld += std::log(f.lower(i, i));
      f.log_det = 2.0 * ld;
      return f;
    }
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
    if (jitter > 1e-6 * 1.0000001)
      throw Error(ErrorKind::factorization, "covariance is not positive definite after jitter 1e-6");
  }
}

Matrix nonstationary_matern(const Sites& sites, const Vector& rho, double nu) {
  const auto D = static_cast<Eigen::Index>(sites.size());
  require(rho.size() == D, ErrorKind::parameter, "range surface length differs from site count");
  for (Eigen::Index i = 0; i < D; ++i) require(rho[i] > 0.0, ErrorKind::parameter, "range must be positive");
  Matrix c(D, D);
  for (Eigen::Index i = 0; i < D; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double m = 0.5 * (rho[i] + rho[j]);
      const double v = std::sqrt(rho[i] * rho[j]) / m * matern_correlation(distance(sites[i], sites[j]) / std::sqrt(m), nu);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

CovarianceFactor build_covariance(const Sites& sites, const Vector& rho, double nu) {
  return factorize(nonstationary_matern(sites, rho, nu));
}

Vector sample_gp(const CovarianceFactor& factor, Rng& rng) {
  Vector e(factor.dim());
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = std_normal(rng);
  return factor.lower.triangularView<Eigen::Lower>() * e;
}

Matrix sample_gp(const CovarianceFactor& factor, int n_replicates, Rng& rng) {
  Matrix out(factor.dim(), n_replicates);
  for (int t = 0; t < n_replicates; ++t) out.col(t) = sample_gp(factor, rng);
  return out;
}

ConditionalGaussian conditional_gp(const Matrix& joint, const std::vector<int>& observed,
                                   const std::vector<int>& target, const Vector& values) {
  const auto no = static_cast<Eigen::Index>(observed.size());
  const auto nt = static_cast<Eigen::Index>(target.size());
  require(values.size() == no, ErrorKind::parameter, "observed value count differs from observed index count");
  ConditionalGaussian out;
  Matrix tt(nt, nt);
  for (Eigen::Index a = 0; a < nt; ++a)
    for (Eigen::Index b = 0; b < nt; ++b) tt(a, b) = joint(target[a], target[b]);
  if (no == 0) {
    out.mean = Vector::Zero(nt);
    out.cov = tt;
    return out;
  }
  Matrix oo(no, no), to(nt, no);
  for (Eigen::Index a = 0; a < no; ++a)
    for (Eigen::Index b = 0; b < no; ++b) oo(a, b) = joint(observed[a], observed[b]);
  for (Eigen::Index a = 0; a < nt; ++a)
    for (Eigen::Index b = 0; b < no; ++b) to(a, b) = joint(target[a], observed[b]);
  const CovarianceFactor f = factorize(oo);
  const auto L = f.lower.triangularView<Eigen::Lower>();
  const Matrix v = L.solve(to.transpose());  // L^-1 Sigma_ot
  const Vector u = L.solve(values);
  out.mean = v.transpose() * u;
  out.cov = tt - v.transpose() * v;
  return out;
}

double gaussian_log_density(const CovarianceFactor& factor, const Vector& z) {
  require(z.size() == factor.dim(), ErrorKind::parameter, "vector length differs from covariance dimension");
  const Vector v = factor.whiten(z);
  return -0.5 * v.squaredNorm() - 0.5 * factor.log_det -
         0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace scalemix
