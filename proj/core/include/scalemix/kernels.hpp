#pragma once

#include <limits>
#include <vector>

#include "scalemix/types.hpp"

namespace scalemix {

struct KnotGrid {
  std::vector<Point> knots;

  std::size_t size() const { return knots.size(); }
  void validate() const;

  // n x n cell centres of the square [lo, hi]^2.
  static KnotGrid regular(int n, double lo, double hi);
  // regular(n) plus the (n-1)^2 points in between; n^2 + (n-1)^2 knots.
  static KnotGrid staggered(int n, double lo, double hi);
  // The grid with the given count: a square n^2 or a staggered n^2 + (n-1)^2.
  static KnotGrid with_count(int k, double lo, double hi);
};

struct KernelConfig {
  double radius = 4.0;  // infinite radius gives every knot equal weight
  int exponent = 2;
  double bandwidth_phi = 4.0;
  double bandwidth_rho = 4.0;

  void validate() const;
};

struct WeightMatrix {
  Matrix w;  // D x K
  std::vector<std::vector<int>> active;

  Eigen::Index sites() const { return w.rows(); }
  Eigen::Index knots() const { return w.cols(); }
};

WeightMatrix wendland_weights(const Sites& sites, const KnotGrid& knots, const KernelConfig& config);
std::vector<int> active_set(const Eigen::Ref<const Eigen::RowVectorXd>& row);

// Kernel exp(-d^2 / (2 h)), renormalised per site.
Matrix gaussian_smoother(const Sites& sites, const KnotGrid& knots, double bandwidth);
Vector gaussian_smooth(const Vector& knot_values, const Sites& sites, const KnotGrid& knots, double bandwidth);

// Distance at which the Gaussian kernel falls to 0.05.
double gaussian_effective_range(double bandwidth);
double bandwidth_for_effective_range(double range);

constexpr double infinite_radius = std::numeric_limits<double>::infinity();

}  // namespace scalemix
