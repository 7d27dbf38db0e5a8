#include "scalemix/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <tbb/parallel_for.h>

#include "scalemix/error.hpp"
#include "scalemix/text.hpp"

namespace scalemix {

namespace {

double norm_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

std::vector<ChiEstimate> empirical_chi(const PairSample& s, const std::vector<double>& u_grid) {
  require(s.ui.size() == s.uj.size(), ErrorKind::parameter, "score vectors differ in length");
  std::vector<ChiEstimate> out;
  for (double u : u_grid) {
    require(u > 0.0 && u < 1.0, ErrorKind::parameter, "threshold must lie in (0, 1)");
    ChiEstimate e;
    e.u = u;
    for (std::size_t n = 0; n < s.ui.size(); ++n) {
      if (std::isnan(s.ui[n]) || std::isnan(s.uj[n])) continue;
      if (s.ui[n] > u) {
        ++e.n_marginal;
        if (s.uj[n] > u) ++e.n_joint;
      }
    }
    if (e.n_marginal > 0) {
      e.missing = false;
      e.chi = static_cast<double>(e.n_joint) / static_cast<double>(e.n_marginal);
      e.se = std::sqrt(e.chi * (1.0 - e.chi) / static_cast<double>(e.n_marginal));
    }
    out.push_back(e);
  }
  return out;
}

EtaEstimate empirical_eta(const PairSample& s, double u, long long min_exceed) {
  require(s.ui.size() == s.uj.size(), ErrorKind::parameter, "score vectors differ in length");
  require(u > 0.0 && u < 1.0, ErrorKind::parameter, "threshold must lie in (0, 1)");
  std::vector<double> t;
  t.reserve(s.ui.size());
  for (std::size_t n = 0; n < s.ui.size(); ++n) {
    if (std::isnan(s.ui[n]) || std::isnan(s.uj[n])) continue;
    t.push_back(std::min(-std::log1p(-s.ui[n]), -std::log1p(-s.uj[n])));
  }
  EtaEstimate e;
  e.u = u;
  const auto k = static_cast<long long>(std::floor((1.0 - u) * static_cast<double>(t.size())));
  if (k < 1 || static_cast<long long>(t.size()) <= k) return e;
  std::nth_element(t.begin(), t.begin() + k, t.end(), std::greater<>());
  const double thr = t[static_cast<std::size_t>(k)];
  double acc = 0.0;
  for (long long a = 0; a < k; ++a) acc += t[static_cast<std::size_t>(a)] - thr;
  e.n_exceed = k;
  e.eta = std::clamp(acc / static_cast<double>(k), std::numeric_limits<double>::min(), 1.0);
  e.se = e.eta / std::sqrt(static_cast<double>(k));
  e.flagged = k < min_exceed;
  return e;
}

const char* case_label(TailCase c) {
  switch (c) {
    case TailCase::a_i: return "a.i";
    case TailCase::a_ii: return "a.ii";
    case TailCase::a_iii: return "a.iii";
    case TailCase::b_i: return "b.i";
    case TailCase::b_ii: return "b.ii";
    case TailCase::b_iii: return "b.iii";
  }
  return "?";
}

double eta_gaussian(double rho) {
  require(rho >= -1.0 && rho <= 1.0, ErrorKind::domain, "correlation must lie in [-1, 1]");
  return 0.5 * (1.0 + rho);
}

namespace {

constexpr double boundary_tol = 1e-9;

// Bounds away from any case boundary; a = phi_i / alpha <= b = phi_j / alpha.
DependenceBounds classify(double a, double b, double e, double rho, bool shared) {
  DependenceBounds d;
  auto set = [&](double lo, double hi) {
    d.eta_lower = lo;
    d.eta_upper = hi;
  };
  if (shared) {
    if (a > 1.0) {
      d.label = TailCase::a_i;
      d.chi = NAN;
      set(1.0, 1.0);
    } else if (b < 1.0) {
      d.label = TailCase::a_ii;
      if (e > b) set(e, e);
      else if (e > a) set(e, b);
      else set(a, b);
    } else {
      d.label = TailCase::a_iii;
      const double lower = 1.0 / (2.0 - a);
      if (e <= 0.5 * (a + b)) set(lower, 1.0 / ((1.0 - a) / (2.0 * e) + 1.0));
      else set(lower, 2.0 * e / (1.0 + b));
    }
    return d;
  }
  if (a > 1.0) {
    d.label = TailCase::b_i;
  } else if (b < 1.0) {
    d.label = TailCase::b_ii;
  } else {
    d.label = TailCase::b_iii;
  }
  if (rho == 0.0) {
    d.independent = true;
    set(0.5, 0.5);
    return d;
  }
  switch (d.label) {
    case TailCase::b_i:
      if (a > 2.0) set(0.5, 0.5);
      else if (b / e > 2.0) set(0.5, 1.0 / a);
      else set(e / b, 1.0 / a);
      break;
    case TailCase::b_ii:
      if (e > b) set(e, e);
      else set(e, b);
      break;
    default:
      if (2.0 * e <= b) set(0.5, (1.0 + rho) / (2.0 + rho));
      else set(0.5, (1.0 + rho) / (1.0 + b));
      break;
  }
  return d;
}

}  // namespace

DependenceBounds eta_bounds(double phi_i, double phi_j, double alpha, double eta_W, double rho_ij, bool shared_kernel) {
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::parameter, "alpha must lie in (0, 1)");
  require(phi_i > 0.0 && phi_j > 0.0, ErrorKind::parameter, "phi must be positive");
  require(eta_W > 0.0 && eta_W <= 1.0, ErrorKind::parameter, "eta_W must lie in (0, 1]");
  require(rho_ij >= -1.0 && rho_ij <= 1.0, ErrorKind::parameter, "rho must lie in [-1, 1]");
  if (phi_i > phi_j) std::swap(phi_i, phi_j);
  const double a = phi_i / alpha, b = phi_j / alpha, e = eta_W;

  // Which input to nudge for each boundary: 0 phi_i, 1 phi_j, 2 eta_W.
  std::vector<std::pair<double, int>> gaps{{a - 1.0, 0}, {b - 1.0, 1}};
  if (shared_kernel) {
    if (b < 1.0) gaps.insert(gaps.end(), {{e - b, 2}, {e - a, 2}});
    else if (a < 1.0) gaps.push_back({e - 0.5 * (a + b), 2});
  } else if (rho_ij != 0.0) {
    if (a > 1.0) gaps.insert(gaps.end(), {{a - 2.0, 0}, {b / e - 2.0, 2}});
    else if (b < 1.0) gaps.push_back({e - b, 2});
    else gaps.push_back({2.0 * e - b, 2});
  }
  const auto hit = std::find_if(gaps.begin(), gaps.end(), [](const auto& g) { return std::abs(g.first) < boundary_tol; });
  if (hit == gaps.end()) return classify(a, b, e, rho_ij, shared_kernel);

  const double eps = 1e-7;
  std::array<double, 3> lo{a, b, e}, hi{a, b, e};
  lo[hit->second] -= eps;
  hi[hit->second] += eps;
  auto side = [&](std::array<double, 3> v) {
    if (v[0] > v[1]) std::swap(v[0], v[1]);
    return classify(v[0], v[1], std::min(v[2], 1.0), rho_ij, shared_kernel);
  };
  const DependenceBounds below = side(lo), above = side(hi);
  DependenceBounds d = below;
  d.boundary = true;
  d.adjacent = {below.eta(), above.eta()};
  d.eta_lower = std::min(below.eta_lower, above.eta_lower);
  d.eta_upper = std::max(below.eta_upper, above.eta_upper);
  return d;
}

double shared_weight_mass(const std::vector<double>& wi, const std::vector<double>& wj,
                          const std::vector<double>& gammas, double alpha) {
  require(wi.size() == wj.size() && wi.size() == gammas.size(), ErrorKind::parameter, "weight rows differ in length");
  double si = 0.0, sj = 0.0;
  for (std::size_t k = 0; k < wi.size(); ++k) {
    si += std::pow(wi[k] * gammas[k], alpha);
    sj += std::pow(wj[k] * gammas[k], alpha);
  }
  require(si > 0.0 && sj > 0.0, ErrorKind::degeneracy, "a site has no active knot");
  double m = 0.0;
  for (std::size_t k = 0; k < wi.size(); ++k)
    m += std::min(std::pow(wi[k] * gammas[k], alpha) / si, std::pow(wj[k] * gammas[k], alpha) / sj);
  return m;
}

double bivariate_normal_upper(double h, double k, double r) {
  require(r >= -1.0 && r <= 1.0, ErrorKind::domain, "correlation must lie in [-1, 1]");
  if (std::isnan(h) || std::isnan(k)) return NAN;
  if (h == INFINITY || k == INFINITY) return 0.0;
  if (h == -INFINITY) return norm_sf(k);
  if (k == -INFINITY) return norm_sf(h);

  static const double x6[3] = {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970};
  static const double w6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static const double x12[6] = {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                                -0.5873179542866171, -0.3678314989981802, -0.1252334085114692};
  static const double w12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static const double x20[10] = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                                 -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                                 -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                                 -0.07652652113349733};
  static const double w20[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                 0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                 0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                 0.1527533871307259};
  const double* x;
  const double* w;
  int lg;
  if (std::abs(r) < 0.3) {
    x = x6, w = w6, lg = 3;
  } else if (std::abs(r) < 0.75) {
    x = x12, w = w12, lg = 6;
  } else {
    x = x20, w = w20, lg = 10;
  }
  const double twopi = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(r);
    for (int i = 0; i < lg; ++i) {
      double sn = std::sin(asr * (x[i] + 1.0) / 2.0);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-x[i] + 1.0) / 2.0);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return std::max(0.0, bvn * asr / (2.0 * twopi) + norm_sf(h) * norm_sf(k));
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(twopi) * norm_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < lg; ++i) {
      double xs = std::pow(a * (x[i] + 1.0), 2);
      double rs = std::sqrt(1.0 - xs);
      bvn += a * w[i] *
             (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs - std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
      xs = as * std::pow(-x[i] + 1.0, 2) / 4.0;
      rs = std::sqrt(1.0 - xs);
      bvn += a * w[i] * std::exp(-(bs / xs + hk) / 2.0) *
             (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
    }
    bvn = -bvn / twopi;
  }
  if (r > 0.0) {
    bvn += norm_sf(std::max(h, k));
  } else {
    bvn = -bvn;
    if (k > h) {
      if (h < 0.0) bvn += norm_cdf(k) - norm_cdf(h);
      else bvn += norm_sf(h) - norm_sf(k);
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double pareto_moment(double a, double delta) {
  require(a > 0.0 && a < 1.0, ErrorKind::parameter, "moment order must lie in (0, 1)");
  if (delta == 0.0) return std::tgamma(1.0 + a) * std::tgamma(1.0 - a);
  require(delta == 1.0, ErrorKind::parameter, "delta must be 0 or 1");
  return 1.0 / (1.0 - a);
}

namespace {

// z with P(delta + g(Z) > level) = P(Z > z); -inf when the level is below the support.
double level_to_z(double level, double delta) {
  if (level <= delta) return -INFINITY;
  if (!std::isfinite(level)) return INFINITY;
  return link_g_inverse(level, delta);
}

}  // namespace

double min_ratio_expectation(double phi_i, double phi_j, double alpha, double rho, double delta, double scale_i,
                             double scale_j) {
  require(phi_i > alpha && phi_j > alpha, ErrorKind::parameter, "both phi must exceed alpha");
  require(phi_i < 1.0 && phi_j < 1.0, ErrorKind::parameter, "phi must be below 1");
  require(scale_i > 0.0 && scale_j > 0.0, ErrorKind::parameter, "scales must be positive");
  const double ai = alpha / phi_i, aj = alpha / phi_j;
  const double mi = pareto_moment(ai, delta), mj = pareto_moment(aj, delta);
  // U = s W^a / m exceeds t when W > (t m / s)^(1/a).
  auto f = [&](double t) {
    const double zi = level_to_z(std::pow(t * mi / scale_i, 1.0 / ai), delta);
    const double zj = level_to_z(std::pow(t * mj / scale_j, 1.0 / aj), delta);
    return bivariate_normal_upper(zi, zj, rho);
  };
  // Kinks where a level crosses delta.
  std::vector<double> cuts{0.0};
  if (delta > 0.0) {
    cuts.push_back(scale_i * std::pow(delta, ai) / mi);
    cuts.push_back(scale_j * std::pow(delta, aj) / mj);
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  boost::math::quadrature::tanh_sinh<double> ts;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c)
    if (cuts[c + 1] > cuts[c]) total += ts.integrate(f, cuts[c], cuts[c + 1], 1e-12);
  boost::math::quadrature::exp_sinh<double> es;
  const double start = cuts.back();
  total += es.integrate([&](double s) { return f(start + s); }, 1e-12);
  return total;
}

double min_ratio_expectation_mc(double phi_i, double phi_j, double alpha, double rho, long long n, Rng& rng,
                                double delta, double* se) {
  require(phi_i > alpha && phi_j > alpha, ErrorKind::parameter, "both phi must exceed alpha");
  require(n >= 2, ErrorKind::parameter, "need at least two draws");
  const double ai = alpha / phi_i, aj = alpha / phi_j;
  const double mi = pareto_moment(ai, delta), mj = pareto_moment(aj, delta);
  const double c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  double mean = 0.0, m2 = 0.0;
  for (long long d = 0; d < n; ++d) {
    const double z1 = std_normal(rng);
    const double z2 = rho * z1 + c * std_normal(rng);
    const double v = std::min(std::pow(link_g(z1, delta), ai) / mi, std::pow(link_g(z2, delta), aj) / mj);
    const double dv = v - mean;
    mean += dv / static_cast<double>(d + 1);
    m2 += dv * (v - mean);
  }
  if (se) *se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  return mean;
}

namespace {

bool kernels_overlap(const std::vector<double>& wi, const std::vector<double>& wj) {
  for (std::size_t k = 0; k < wi.size(); ++k)
    if (wi[k] > 0.0 && wj[k] > 0.0) return true;
  return false;
}

TailCase ai_label(double phi_lo, double phi_hi, double alpha, bool shared) {
  if (shared) return phi_hi < alpha ? TailCase::a_ii : TailCase::a_iii;
  if (phi_lo > alpha) return TailCase::b_i;
  return phi_hi < alpha ? TailCase::b_ii : TailCase::b_iii;
}

std::vector<double> normalised_v(const std::vector<double>& w, const std::vector<double>& g, double alpha) {
  std::vector<double> v(w.size());
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += v[k] = std::pow(w[k] * g[k], alpha);
  for (double& x : v) x /= s;
  return v;
}

}  // namespace

ChiValue theoretical_chi(double phi_i, double phi_j, double alpha, const std::vector<double>& wi,
                         const std::vector<double>& wj, const std::vector<double>& gammas, double rho_ij,
                         double delta) {
  const double mass = shared_weight_mass(wi, wj, gammas, alpha);
  const bool shared = kernels_overlap(wi, wj);
  ChiValue out;
  const double lo = std::min(phi_i, phi_j), hi = std::max(phi_i, phi_j);
  if (!shared || lo <= alpha) {
    out.label = ai_label(lo, hi, alpha, shared);
    return out;
  }
  out.label = TailCase::a_i;
  out.value = min_ratio_expectation(phi_i, phi_j, alpha, rho_ij, delta) * mass;
  const std::vector<double> vi = normalised_v(wi, gammas, alpha), vj = normalised_v(wj, gammas, alpha);
  for (std::size_t k = 0; k < vi.size(); ++k)
    if (vi[k] > 0.0 && vj[k] > 0.0)
      out.single_jump += min_ratio_expectation(phi_i, phi_j, alpha, rho_ij, delta, vi[k], vj[k]);
  return out;
}

ChiValue theoretical_chi_mc(double phi_i, double phi_j, double alpha, const std::vector<double>& wi,
                            const std::vector<double>& wj, const std::vector<double>& gammas, double rho_ij,
                            long long n, Rng& rng, double delta) {
  const double mass = shared_weight_mass(wi, wj, gammas, alpha);
  const bool shared = kernels_overlap(wi, wj);
  ChiValue out;
  const double lo = std::min(phi_i, phi_j), hi = std::max(phi_i, phi_j);
  if (!shared || lo <= alpha) {
    out.label = ai_label(lo, hi, alpha, shared);
    return out;
  }
  double se = 0.0;
  out.value = min_ratio_expectation_mc(phi_i, phi_j, alpha, rho_ij, n, rng, delta, &se) * mass;
  out.se = se * mass;
  out.single_jump = NAN;
  return out;
}

Matrix rank_scores(const Matrix& Y) {
  Matrix out = Matrix::Constant(Y.rows(), Y.cols(), NAN);
  std::vector<std::pair<double, Eigen::Index>> v;
  for (Eigen::Index j = 0; j < Y.rows(); ++j) {
    v.clear();
    for (Eigen::Index t = 0; t < Y.cols(); ++t)
      if (!std::isnan(Y(j, t))) v.emplace_back(Y(j, t), t);
    std::sort(v.begin(), v.end());
    const double n1 = static_cast<double>(v.size()) + 1.0;
    for (std::size_t a = 0; a < v.size();) {
      std::size_t b = a;
      while (b + 1 < v.size() && v[b + 1].first == v[a].first) ++b;
      const double rank = 0.5 * static_cast<double>(a + b) + 1.0;  // ties share the mean rank
      for (std::size_t c = a; c <= b; ++c) out(j, v[c].second) = rank / n1;
      a = b + 1;
    }
  }
  return out;
}

Matrix model_scores(const Matrix& Y, const MarginalRegression& margins) {
  require(margins.sites() == Y.rows(), ErrorKind::parameter, "margins do not match the data");
  Matrix out = Matrix::Constant(Y.rows(), Y.cols(), NAN);
  for (Eigen::Index j = 0; j < Y.rows(); ++j)
    for (Eigen::Index t = 0; t < Y.cols(); ++t)
      if (!std::isnan(Y(j, t))) out(j, t) = gev_cdf(Y(j, t), margins.at(j, t));
  return out;
}

std::vector<WindowChi> moving_window_chi(const Matrix& scores, const Sites& sites, const WindowGrid& grid, double h,
                                         double h_tol, const std::vector<double>& u_grid, int min_pairs) {
  require(static_cast<Eigen::Index>(sites.size()) == scores.rows(), ErrorKind::parameter, "scores and sites differ");
  require(grid.nx >= 1 && grid.ny >= 1 && grid.xmax > grid.xmin && grid.ymax > grid.ymin, ErrorKind::parameter,
          "bad window grid");
  require(h > 0.0 && h_tol >= 0.0, ErrorKind::parameter, "distance and tolerance must be positive");
  const double cw = (grid.xmax - grid.xmin) / grid.nx, ch = (grid.ymax - grid.ymin) / grid.ny;
  const double hx = grid.half_width > 0.0 ? grid.half_width : 0.5 * cw;
  const double hy = grid.half_width > 0.0 ? grid.half_width : 0.5 * ch;
  std::vector<WindowChi> out;
  int id = 0;
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix, ++id) {
      const double cx = grid.xmin + (ix + 0.5) * cw, cy = grid.ymin + (iy + 0.5) * ch;
      std::vector<int> in;
      for (std::size_t j = 0; j < sites.size(); ++j)
        if (std::abs(sites[j].x - cx) <= hx && std::abs(sites[j].y - cy) <= hy) in.push_back(static_cast<int>(j));
      std::vector<std::pair<int, int>> pairs;
      for (std::size_t a = 0; a < in.size(); ++a)
        for (std::size_t b = a + 1; b < in.size(); ++b)
          if (std::abs(distance(sites[in[a]], sites[in[b]]) - h) <= h_tol) pairs.emplace_back(in[a], in[b]);
      for (double u : u_grid) {
        WindowChi w;
        w.window = id;
        w.cx = cx;
        w.cy = cy;
        w.u = u;
        w.h = h;
        w.pairs = static_cast<long long>(pairs.size());
        if (w.pairs < min_pairs) {
          out.push_back(w);
          continue;
        }
        long long marg = 0, joint = 0;
        for (auto [i, j] : pairs) {
          for (Eigen::Index t = 0; t < scores.cols(); ++t) {
            const double si = scores(i, t), sj = scores(j, t);
            if (std::isnan(si) || std::isnan(sj)) continue;
            marg += (si > u) + (sj > u);
            if (si > u && sj > u) joint += 2;
          }
        }
        w.n_marginal = marg;
        if (marg > 0) {
          w.missing = false;
          w.chi = static_cast<double>(joint) / static_cast<double>(marg);
          w.se = std::sqrt(w.chi * (1.0 - w.chi) / (0.5 * static_cast<double>(marg)));
        }
        out.push_back(w);
      }
    }
  }
  return out;
}

void write_window_csv(const std::string& path, const std::vector<WindowChi>& rows) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::io, "cannot write " + path);
  f << "window,cx,cy,u,h,estimate,se,pairs\n";
  for (const auto& r : rows) {
    f << r.window << ',' << format_double(r.cx) << ',' << format_double(r.cy) << ',' << format_double(r.u) << ','
      << format_double(r.h) << ',';
    if (r.missing) f << ",,";
    else f << format_double(r.chi) << ',' << format_double(r.se) << ',';
    f << r.pairs << '\n';
  }
  require(f.good(), ErrorKind::io, "write failed for " + path);
}

std::pair<double, double> binomial_band(long long n, double p, double level) {
  require(n >= 1, ErrorKind::parameter, "band needs n >= 1");
  require(p >= 0.0 && p <= 1.0 && level > 0.0 && level < 1.0, ErrorKind::parameter, "bad band arguments");
  const boost::math::binomial_distribution<double> d(static_cast<double>(n), p);
  const double lo = boost::math::quantile(d, 0.5 * (1.0 - level));
  const double hi = boost::math::quantile(d, 0.5 * (1.0 + level));
  return {lo / static_cast<double>(n), hi / static_cast<double>(n)};
}

std::pair<double, double> clopper_pearson(long long x, long long n, double level) {
  require(n >= 1 && x >= 0 && x <= n, ErrorKind::parameter, "bad binomial counts");
  const double a = 1.0 - level;
  const double xd = static_cast<double>(x), nd = static_cast<double>(n);
  const double lo = x == 0 ? 0.0 : boost::math::ibeta_inv(xd, nd - xd + 1.0, a / 2.0);
  const double hi = x == n ? 1.0 : boost::math::ibeta_inv(xd + 1.0, nd - xd, 1.0 - a / 2.0);
  return {lo, hi};
}

const CoverageRow& CoverageTable::row(const std::string& parameter, double level) const {
  for (const auto& r : rows)
    if (r.parameter == parameter && std::abs(r.level - level) < 1e-12) return r;
  throw Error(ErrorKind::validation, "no coverage row for " + parameter);
}

void CoverageTable::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::io, "cannot write " + path);
  f << "parameter,level,covered,total,coverage,band_lower,band_upper,ci_lower,ci_upper\n";
  for (const auto& r : rows)
    f << r.parameter << ',' << format_double(r.level) << ',' << r.covered << ',' << r.total << ','
      << format_double(r.coverage) << ',' << format_double(r.band_lower) << ',' << format_double(r.band_upper) << ','
      << format_double(r.ci_lower) << ',' << format_double(r.ci_upper) << '\n';
  f << "# datasets " << datasets << ", failed " << failed << '\n';
}

std::map<std::string, double> truth_values(const ProcessSpec& spec) {
  std::map<std::string, double> t;
  const MarginalRegression& m = spec.margins;
  if (m.mu0.size() > 0) t["mu"] = m.mu0[0];
  if (m.logsigma.size() > 0) t["sigma"] = std::exp(m.logsigma[0]);
  if (m.xi.size() > 0) t["xi"] = m.xi[0];
  for (Eigen::Index k = 0; k < spec.phi_knots.size(); ++k) t["phi_" + std::to_string(k)] = spec.phi_knots[k];
  for (Eigen::Index k = 0; k < spec.rho_knots_values.size(); ++k)
    t["rho_" + std::to_string(k)] = spec.rho_knots_values[k];
  return t;
}

namespace {

// Linear interpolation between order statistics.
double sample_quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string family(const std::string& name) {
  const auto us = name.find('_');
  return us == std::string::npos ? std::string() : name.substr(0, us);
}

}  // namespace

Interval credible_interval(std::vector<double> draws, double level) {
  require(!draws.empty(), ErrorKind::validation, "no draws");
  require(level > 0.0 && level < 1.0, ErrorKind::parameter, "level must lie in (0, 1)");
  std::sort(draws.begin(), draws.end());
  return {sample_quantile(draws, 0.5 * (1.0 - level)), sample_quantile(draws, 0.5 * (1.0 + level))};
}

CoverageTable coverage_study(const std::function<ProcessSpec(int)>& scenario, int n_datasets,
                             const std::vector<double>& ci_levels, const Fitter& fit) {
  require(n_datasets >= 1, ErrorKind::parameter, "need at least one dataset");
  CoverageTable table;
  table.datasets = n_datasets;
  // (parameter, level index) -> covered, total
  std::map<std::pair<std::string, std::size_t>, std::pair<long long, long long>> tally;
  // Fits run concurrently; each dataset and chain has its own seed, so the tally is order free.
  std::vector<ProcessSpec> specs;
  for (int i = 0; i < n_datasets; ++i) specs.push_back(scenario(i));
  std::vector<FitDraws> fits(static_cast<std::size_t>(n_datasets));
  tbb::parallel_for(0, n_datasets, [&](int i) {
    auto& fd = fits[static_cast<std::size_t>(i)];
    try {
      fd = fit(simulate_field(specs[static_cast<std::size_t>(i)]), i);
    } catch (const Error&) {
      fd = FitDraws{};
      fd.failed = true;
    }
  });
  for (int i = 0; i < n_datasets; ++i) {
    const ProcessSpec& spec = specs[static_cast<std::size_t>(i)];
    const FitDraws& fd = fits[static_cast<std::size_t>(i)];
    if (fd.failed) {
      ++table.failed;
      continue;
    }
    for (const auto& [name, value] : truth_values(spec)) {
      auto it = fd.draws.find(name);
      if (it == fd.draws.end() || it->second.empty()) continue;
      for (std::size_t l = 0; l < ci_levels.size(); ++l) {
        const Interval ci = credible_interval(it->second, ci_levels[l]);
        const bool hit = ci.contains(value);
        for (const std::string& key : {name, family(name)}) {
          if (key.empty()) continue;
          auto& c = tally[{key, l}];
          c.first += hit;
          c.second += 1;
        }
      }
    }
  }
  for (const auto& [key, c] : tally) {
    CoverageRow r;
    r.parameter = key.first;
    r.level = ci_levels[key.second];
    r.covered = c.first;
    r.total = c.second;
    r.coverage = static_cast<double>(c.first) / static_cast<double>(c.second);
    std::tie(r.band_lower, r.band_upper) = binomial_band(c.second, r.level, 0.95);
    std::tie(r.ci_lower, r.ci_upper) = clopper_pearson(c.first, c.second, 0.95);
    table.rows.push_back(r);
  }
  return table;
}

Fitter mcmc_fitter(const ChainConfig& chain, const PriorSpec& prior, bool start_at_truth, bool update_xi) {
  return [=](const SimulatedDataset& sim, int index) {
    const ProcessSpec& truth = sim.truth;
    Dataset data = Dataset::from_simulation(sim);
    ModelSpec model;
    model.knots = truth.knots;
    model.rho_knots = truth.rho_knots;
    model.kernel = truth.kernel;
    model.gamma = truth.gamma;
    model.nu = truth.nu;
    model.update_xi = update_xi;
    ModelState init = default_initial_state(data, model);
    if (start_at_truth) {
      init.S = sim.S;
      init.phi = truth.phi_knots;
      init.rho = truth.rho_knots_values;
      init.block(Block::mu0) = truth.margins.mu0;
      init.block(Block::mu1) = truth.margins.mu1;
      init.block(Block::logsigma) = truth.margins.logsigma;
      init.block(Block::xi) = truth.margins.xi;
    }
    ChainConfig cfg = chain;
    cfg.seed = chain.seed + static_cast<std::uint64_t>(index);
    Sampler s(std::move(data), std::move(model), prior, cfg, std::move(init));
    const ChainOutput& out = s.run();
    FitDraws fd;
    for (const std::string& n : out.names) {
      if (n.rfind("phi_", 0) == 0 || n.rfind("rho_", 0) == 0) fd.draws[n] = out.draws(n);
    }
    fd.draws["mu"] = out.draws("mu0_0");
    std::vector<double> ls = out.draws("logsigma_0");
    for (double& v : ls) v = std::exp(v);
    fd.draws["sigma"] = ls;
    fd.draws["xi"] = out.draws("xi_0");
    return fd;
  };
}

QQResult qq_gumbel(const std::vector<double>& y, const std::vector<std::vector<GEVParams>>& margin_draws, int n_rep,
                   Rng& rng) {
  const std::size_t n = y.size();
  require(n >= 10, ErrorKind::parameter, "QQ needs at least 10 observations");
  require(!margin_draws.empty(), ErrorKind::parameter, "QQ needs posterior margin draws");
  for (const auto& d : margin_draws) require(d.size() == n, ErrorKind::parameter, "margin draws do not match data");
  require(n_rep >= 1, ErrorKind::parameter, "need at least one resample");

  const double tiny = 1e-300, top = 1.0 - 1e-16;
  auto gumbel_score = [&](double v, std::size_t i) {
    double u = 0.0;
    for (const auto& d : margin_draws) u += gev_cdf(v, d[i]);
    u = std::clamp(u / static_cast<double>(margin_draws.size()), tiny, top);
    return -std::log(-std::log(u));
  };

  QQResult q;
  q.empirical.resize(n);
  for (std::size_t i = 0; i < n; ++i) q.empirical[i] = gumbel_score(y[i], i);
  std::sort(q.empirical.begin(), q.empirical.end());
  q.theoretical.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    q.theoretical[i] = -std::log(-std::log(p));
  }

  std::vector<std::vector<double>> reps(n, std::vector<double>(static_cast<std::size_t>(n_rep)));
  std::vector<double> sim(n);
  for (int r = 0; r < n_rep; ++r) {
    const auto& d = margin_draws[static_cast<std::size_t>(rng() % margin_draws.size())];
    for (std::size_t i = 0; i < n; ++i) sim[i] = gumbel_score(gev_quantile(uniform(rng), d[i]), i);
    std::sort(sim.begin(), sim.end());
    for (std::size_t i = 0; i < n; ++i) reps[i][static_cast<std::size_t>(r)] = sim[i];
  }
  q.lower.resize(n);
  q.upper.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(reps[i].begin(), reps[i].end());
    q.lower[i] = sample_quantile(reps[i], 0.025);
    q.upper[i] = sample_quantile(reps[i], 0.975);
  }
  return q;
}

}  // namespace scalemix
