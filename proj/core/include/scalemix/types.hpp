#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace scalemix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

using Sites = std::vector<Point>;

}  // namespace scalemix
