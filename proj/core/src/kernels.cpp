#include "scalemix/kernels.hpp"

#include <cmath>
#include <string>

#include "scalemix/error.hpp"

namespace scalemix {

void KnotGrid::validate() const {
  require(!knots.empty(), ErrorKind::parameter, "knot grid is empty");
  for (std::size_t a = 0; a < knots.size(); ++a) {
    require(std::isfinite(knots[a].x) && std::isfinite(knots[a].y), ErrorKind::parameter, "non-finite knot");
    for (std::size_t b = a + 1; b < knots.size(); ++b)
      require(distance(knots[a], knots[b]) > 0.0, ErrorKind::parameter,
              "knots " + std::to_string(a) + " and " + std::to_string(b) + " coincide");
  }
}

KnotGrid KnotGrid::regular(int n, double lo, double hi) {
  require(n >= 1 && hi > lo, ErrorKind::parameter, "bad regular grid");
  KnotGrid g;
  const double step = (hi - lo) / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g.knots.push_back({lo + (j + 0.5) * step, lo + (i + 0.5) * step});
  return g;
}

KnotGrid KnotGrid::staggered(int n, double lo, double hi) {
  KnotGrid g = regular(n, lo, hi);
  const double step = (hi - lo) / n;
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) g.knots.push_back({lo + (j + 1.0) * step, lo + (i + 1.0) * step});
  return g;
}

KnotGrid KnotGrid::with_count(int k, double lo, double hi) {
  for (int n = 1; n * n <= k; ++n) {
    if (n * n == k) return regular(n, lo, hi);
    if (n * n + (n - 1) * (n - 1) == k) return staggered(n, lo, hi);
  }
  throw Error(ErrorKind::validation, "no grid layout with " + std::to_string(k) + " knots");
}

void KernelConfig::validate() const {
  require(radius > 0.0, ErrorKind::parameter, "Wendland radius must be positive");
  require(exponent >= 2, ErrorKind::parameter, "Wendland exponent must be at least 2");
  require(bandwidth_phi > 0.0 && bandwidth_rho > 0.0, ErrorKind::parameter, "bandwidths must be positive");
}

std::vector<int> active_set(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::vector<int> out;
  for (Eigen::Index k = 0; k < row.size(); ++k)
    if (row[k] > 0.0) out.push_back(static_cast<int>(k));
  require(!out.empty(), ErrorKind::coverage, "empty active set");
  return out;
}

WeightMatrix wendland_weights(const Sites& sites, const KnotGrid& knots, const KernelConfig& config) {
  config.validate();
  const auto D = static_cast<Eigen::Index>(sites.size());
  const auto K = static_cast<Eigen::Index>(knots.size());
  WeightMatrix out;
  out.w.setZero(D, K);
  out.active.resize(sites.size());
  for (Eigen::Index j = 0; j < D; ++j) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      double v = 1.0;
      if (std::isfinite(config.radius)) {
        const double d = distance(sites[j], knots.knots[k]) / config.radius;
        v = d < 1.0 ? std::pow(1.0 - d * d, config.exponent) : 0.0;
      }
      out.w(j, k) = v;
      total += v;
    }
    if (!(total > 0.0))
      throw Error(ErrorKind::coverage, "site " + std::to_string(j) + " at (" + std::to_string(sites[j].x) + ", " +
                                           std::to_string(sites[j].y) + ") is not within radius of any knot");
    out.w.row(j) /= total;
    out.active[j] = active_set(out.w.row(j));
  }
  return out;
}

Matrix gaussian_smoother(const Sites& sites, const KnotGrid& knots, double bandwidth) {
  require(bandwidth > 0.0, ErrorKind::parameter, "bandwidth must be positive");
  const auto D = static_cast<Eigen::Index>(sites.size());
  const auto K = static_cast<Eigen::Index>(knots.size());
  Matrix m(D, K);
  for (Eigen::Index j = 0; j < D; ++j) {
    double dmin = INFINITY;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double d = distance(sites[j], knots.knots[k]);
      m(j, k) = d * d;
      dmin = std::min(dmin, d * d);
    }
    // shift by the nearest knot so tiny bandwidths do not underflow
    for (Eigen::Index k = 0; k < K; ++k) m(j, k) = std::exp(-(m(j, k) - dmin) / (2.0 * bandwidth));
    m.row(j) /= m.row(j).sum();
  }
  return m;
}

Vector gaussian_smooth(const Vector& knot_values, const Sites& sites, const KnotGrid& knots, double bandwidth) {
  require(knot_values.size() == static_cast<Eigen::Index>(knots.size()), ErrorKind::parameter,
          "knot value count differs from knot count");
  return gaussian_smoother(sites, knots, bandwidth) * knot_values;
}

double gaussian_effective_range(double bandwidth) { return std::sqrt(2.0 * bandwidth * std::log(20.0)); }

double bandwidth_for_effective_range(double range) { return range * range / (2.0 * std::log(20.0)); }

}  // namespace scalemix
