#include "scalemix/simulator.hpp"

#include <algorithm>
#include <cmath>

#include <tbb/parallel_for.h>

#include "scalemix/error.hpp"
#include "scalemix/stable.hpp"

namespace scalemix {

void ProcessSpec::validate() const {
  const auto D = static_cast<Eigen::Index>(sites.size());
  require(D >= 1, ErrorKind::parameter, "no sites");
  knots.validate();
  range_knots().validate();
  kernel.validate();
  const auto K = static_cast<Eigen::Index>(knots.size());
  require(phi_knots.size() == K, ErrorKind::parameter, "phi knot count differs from knot count");
  require(gamma.size() == K, ErrorKind::parameter, "gamma count differs from knot count");
  require(rho_knots_values.size() == static_cast<Eigen::Index>(range_knots().size()), ErrorKind::parameter,
          "rho knot count differs from range knot count");
  for (Eigen::Index k = 0; k < K; ++k) {
    require(phi_knots[k] > 0.0 && phi_knots[k] < 1.0, ErrorKind::parameter, "phi knots must lie in (0, 1)");
    require(gamma[k] > 0.0, ErrorKind::parameter, "gamma must be positive");
  }
  for (Eigen::Index k = 0; k < rho_knots_values.size(); ++k)
    require(rho_knots_values[k] > 0.0, ErrorKind::parameter, "rho knots must be positive");
  require(nu > 0.0, ErrorKind::parameter, "nu must be positive");
  require(T >= 1, ErrorKind::parameter, "need at least one replicate");
  margins.validate();
  require(margins.sites() == D, ErrorKind::parameter, "marginal design rows differ from site count");
}

Vector bar_gamma_surface(const WeightMatrix& w, const Vector& gamma, double alpha) {
  Vector out(w.sites());
  std::vector<double> wr(static_cast<std::size_t>(w.knots())), g(gamma.data(), gamma.data() + gamma.size());
  for (Eigen::Index j = 0; j < w.sites(); ++j) {
    for (Eigen::Index k = 0; k < w.knots(); ++k) wr[k] = w.w(j, k);
    out[j] = mixture_scale(wr, g, alpha);
  }
  return out;
}

ProcessSurfaces compute_surfaces(const ProcessSpec& spec) {
  ProcessSurfaces s;
  s.weights = wendland_weights(spec.sites, spec.knots, spec.kernel);
  s.phi_smoother = gaussian_smoother(spec.sites, spec.knots, spec.kernel.bandwidth_phi);
  s.rho_smoother = gaussian_smoother(spec.sites, spec.range_knots(), spec.kernel.bandwidth_rho);
  s.phi = s.phi_smoother * spec.phi_knots;
  s.rho = s.rho_smoother * spec.rho_knots_values;
  s.bar_gamma = bar_gamma_surface(s.weights, spec.gamma);
  return s;
}

SimulatedDataset simulate_field(const ProcessSpec& spec) {
  spec.validate();
  const ProcessSurfaces surf = compute_surfaces(spec);
  const CovarianceFactor cov = build_covariance(spec.sites, surf.rho, spec.nu);
  const auto D = static_cast<Eigen::Index>(spec.sites.size());
  const auto K = static_cast<Eigen::Index>(spec.knots.size());
  std::vector<MarginalIntegrator> integ;
  integ.reserve(spec.sites.size());
  for (Eigen::Index j = 0; j < D; ++j) integ.emplace_back(MixtureMarginal{surf.phi[j], surf.bar_gamma[j]});

  SimulatedDataset out;
  out.truth = spec;
  out.Y.resize(D, spec.T);
  out.X.resize(D, spec.T);
  out.R.resize(D, spec.T);
  out.Z.resize(D, spec.T);
  out.S.resize(K, spec.T);
  tbb::parallel_for(0, spec.T, [&](int t) {
    Rng rng = make_stream(spec.seed, static_cast<std::uint64_t>(t));
    for (Eigen::Index k = 0; k < K; ++k) out.S(k, t) = sample_levy(spec.gamma[k], rng);
    out.Z.col(t) = sample_gp(cov, rng);
    out.R.col(t) = surf.weights.w * out.S.col(t);
    for (Eigen::Index j = 0; j < D; ++j) {
      out.X(j, t) = z_to_x(out.Z(j, t), out.R(j, t), surf.phi[j]);
      out.Y(j, t) = copula_X_to_Y(out.X(j, t), spec.margins.at(j, t), integ[j]);
    }
  });
  return out;
}

SimulatedDataset simulate_field(const ProcessSpec& spec, Rng& rng) {
  ProcessSpec s = spec;
  s.seed = rng();
  return simulate_field(s);
}

ProcessSpec build_scenario(int id, int D, int T, std::uint64_t seed) {
  require(id >= 1 && id <= 3, ErrorKind::parameter, "scenario id must be 1, 2 or 3");
  require(D >= 1 && T >= 1, ErrorKind::parameter, "scenario needs sites and replicates");
  ProcessSpec s;
  Rng rng = make_stream(seed, 0xD0u);
  for (int j = 0; j < D; ++j) {
    const double x = 10.0 * uniform(rng);
    const double y = 10.0 * uniform(rng);
    s.sites.push_back({x, y});
  }
  s.knots = KnotGrid::regular(3, 0.0, 10.0);
  s.kernel = KernelConfig{4.0, 2, 4.0, 4.0};
  const int K = 9;
  s.gamma = Vector::Constant(K, 0.5);
  s.phi_knots.resize(K);
  s.rho_knots_values.resize(K);
  for (int k = 0; k < K; ++k) {
    const int row = k / 3, col = k % 3;
    const bool dark = (row + col) % 2 == 1;
    switch (id) {
      case 1:
        s.phi_knots[k] = 0.35;
        s.rho_knots_values[k] = 0.6;
        break;
      case 2:
        s.phi_knots[k] = 0.3 + 0.05 * k;
        s.rho_knots_values[k] = 0.2 + 0.1 * k;
        break;
      default:
        s.phi_knots[k] = dark ? 0.65 : 0.35;
        s.rho_knots_values[k] = dark ? 0.8 : 0.4;
        break;
    }
  }
  s.nu = 0.5;
  s.margins = MarginalRegression::constant(D, T, GEVParams{0.0, 1.0, 0.2});
  s.T = T;
  s.seed = seed + static_cast<std::uint64_t>(id);
  return s;
}

PairModel pair_model(const ProcessSpec& spec, const ProcessSurfaces& surf, const SitePair& pair) {
  PairModel pm;
  const auto K = surf.weights.knots();
  for (Eigen::Index k = 0; k < K; ++k) {
    const double a = surf.weights.w(pair.i, k), b = surf.weights.w(pair.j, k);
    if (a > 0.0 || b > 0.0) {
      pm.wi.push_back(a);
      pm.wj.push_back(b);
      pm.gamma.push_back(spec.gamma[k]);
    }
  }
  pm.phi_i = surf.phi[pair.i];
  pm.phi_j = surf.phi[pair.j];
  Sites two{spec.sites[pair.i], spec.sites[pair.j]};
  Vector r2(2);
  r2 << surf.rho[pair.i], surf.rho[pair.j];
  pm.rho_ij = nonstationary_matern(two, r2, spec.nu)(0, 1);
  pm.mi = MixtureMarginal{pm.phi_i, surf.bar_gamma[pair.i]};
  pm.mj = MixtureMarginal{pm.phi_j, surf.bar_gamma[pair.j]};
  return pm;
}

void pair_draw(const PairModel& pm, Rng& rng, double& xi, double& xj) {
  double ri = 0.0, rj = 0.0;
  for (std::size_t k = 0; k < pm.gamma.size(); ++k) {
    const double s = sample_levy(pm.gamma[k], rng);
    ri += pm.wi[k] * s;
    rj += pm.wj[k] * s;
  }
  const double z1 = std_normal(rng);
  const double z2 = pm.rho_ij * z1 + std::sqrt(1.0 - pm.rho_ij * pm.rho_ij) * std_normal(rng);
  xi = std::pow(ri, pm.phi_i) * link_g(z1);
  xj = std::pow(rj, pm.phi_j) * link_g(z2);
}

namespace {

struct BatchTally {
  std::vector<long long> ni, nij;
  std::vector<double> tvals;
};

}  // namespace

std::vector<PairTailTable> pairwise_tail_harness(const ProcessSpec& spec, const std::vector<SitePair>& pairs,
                                                 const HarnessOptions& opt) {
  spec.validate();
  require(opt.draws >= 100'000, ErrorKind::parameter, "harness needs at least 1e5 draws");
  require(opt.batch >= 1, ErrorKind::parameter, "batch size must be positive");
  const ProcessSurfaces surf = compute_surfaces(spec);
  const auto D = static_cast<int>(spec.sites.size());
  std::vector<PairTailTable> out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const SitePair pr = pairs[p];
    require(pr.i >= 0 && pr.i < D && pr.j >= 0 && pr.j < D && pr.i != pr.j, ErrorKind::parameter, "bad site pair");
    const PairModel pm = pair_model(spec, surf, pr);
    const MarginalIntegrator ii(pm.mi), ij(pm.mj);
    const std::size_t nu = opt.u_grid.size();
    std::vector<double> thr_i(nu), thr_j(nu);
    for (std::size_t a = 0; a < nu; ++a) {
      thr_i[a] = ii.upper_quantile(1.0 - opt.u_grid[a]);
      thr_j[a] = ij.upper_quantile(1.0 - opt.u_grid[a]);
    }
    const double pre_i = ii.upper_quantile(opt.prefilter_survival);
    const double pre_j = ij.upper_quantile(opt.prefilter_survival);

    const long long nb = (opt.draws + opt.batch - 1) / opt.batch;
    std::vector<BatchTally> tally(static_cast<std::size_t>(nb));
    tbb::parallel_for(0LL, nb, [&](long long b) {
      BatchTally& bt = tally[static_cast<std::size_t>(b)];
      bt.ni.assign(nu, 0);
      bt.nij.assign(nu, 0);
      Rng rng = make_stream(opt.seed, (static_cast<std::uint64_t>(p) << 32) | static_cast<std::uint64_t>(b));
      const long long n = std::min(opt.batch, opt.draws - b * opt.batch);
      for (long long d = 0; d < n; ++d) {
        double xi, xj;
        pair_draw(pm, rng, xi, xj);
        for (std::size_t a = 0; a < nu; ++a) {
          if (xi > thr_i[a]) {
            ++bt.ni[a];
            if (xj > thr_j[a]) ++bt.nij[a];
          }
        }
        if (xi > pre_i && xj > pre_j) {
          const double ei = -std::log(ii.survival(xi));
          const double ej = -std::log(ij.survival(xj));
          bt.tvals.push_back(std::min(ei, ej));
        }
      }
    });

    PairTailTable t;
    t.pair = pr;
    t.dist = distance(spec.sites[pr.i], spec.sites[pr.j]);
    t.rho_ij = pm.rho_ij;
    t.shared_kernel = false;
    for (std::size_t k = 0; k < pm.wi.size(); ++k)
      if (pm.wi[k] > 0.0 && pm.wj[k] > 0.0) t.shared_kernel = true;
    t.u = opt.u_grid;
    t.marginal_count.assign(nu, 0);
    t.joint_count.assign(nu, 0);
    std::vector<double> tv;
    for (const auto& bt : tally) {
      for (std::size_t a = 0; a < nu; ++a) {
        t.marginal_count[a] += bt.ni[a];
        t.joint_count[a] += bt.nij[a];
      }
      tv.insert(tv.end(), bt.tvals.begin(), bt.tvals.end());
    }
    for (std::size_t a = 0; a < nu; ++a) {
      if (t.marginal_count[a] == 0) {
        t.chi.push_back(NAN);
        t.chi_se.push_back(NAN);
        continue;
      }
      const double c = static_cast<double>(t.joint_count[a]) / static_cast<double>(t.marginal_count[a]);
      t.chi.push_back(c);
      t.chi_se.push_back(std::sqrt(c * (1.0 - c) / static_cast<double>(t.marginal_count[a])));
    }
    t.eta_u = opt.eta_u;
    const auto k = static_cast<long long>(std::floor((1.0 - opt.eta_u) * static_cast<double>(opt.draws)));
    if (k >= 1 && static_cast<long long>(tv.size()) > k) {
      std::nth_element(tv.begin(), tv.begin() + k, tv.end(), std::greater<>());
      const double thr = tv[static_cast<std::size_t>(k)];
      double acc = 0.0;
      for (long long a = 0; a < k; ++a) acc += tv[static_cast<std::size_t>(a)] - thr;
      t.eta = acc / static_cast<double>(k);
      t.eta_se = t.eta / std::sqrt(static_cast<double>(k));
      t.eta_exceed = k;
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace scalemix
