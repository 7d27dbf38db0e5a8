#include <cmath>
#include <numbers>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "scalemix/diagnostics.hpp"
#include "scalemix/error.hpp"
#include "test_support.hpp"

using namespace scalemix;

namespace {

double phi_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// P(X > h, Y > k) = int_h^inf phi(x) P(Y > k | x) dx
double bvn_oracle(double h, double k, double r) {
  const double s = std::sqrt(1.0 - r * r);
  auto f = [&](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi) * phi_sf((k - r * x) / s); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, h, std::numeric_limits<double>::infinity(),
                                                                      15, 1e-14);
}

PairSample sample_of(const std::vector<double>& a, const std::vector<double>& b) {
  PairSample s;
  s.ui = a;
  s.uj = b;
  return s;
}

}  // namespace

TEST(BivariateNormal, MatchesQuadrature) {
  for (double r : {-0.95, -0.5, 0.0, 0.3, 0.8, 0.99})
    for (double h : {-2.0, 0.0, 1.0, 3.5})
      for (double k : {-1.0, 0.5, 2.0}) {
        const double want = bvn_oracle(h, k, r);
        ASSERT_NEAR(bivariate_normal_upper(h, k, r), want, 1e-11 + 1e-8 * want) << h << ' ' << k << ' ' << r;
      }
}

TEST(BivariateNormal, Limits) {
  EXPECT_NEAR(bivariate_normal_upper(0.3, -0.2, 0.0), phi_sf(0.3) * phi_sf(-0.2), 1e-15);
  EXPECT_NEAR(bivariate_normal_upper(0.3, -0.2, 1.0), phi_sf(0.3), 1e-14);
  // Y = -X: the event is -0.3 < X < 0.2
  EXPECT_NEAR(bivariate_normal_upper(-0.3, -0.2, -1.0), 1.0 - phi_sf(0.2) - phi_sf(0.3), 1e-14);
  EXPECT_EQ(bivariate_normal_upper(INFINITY, 0.0, 0.5), 0.0);
  EXPECT_NEAR(bivariate_normal_upper(-INFINITY, 1.0, 0.5), phi_sf(1.0), 1e-15);
  EXPECT_THROW(bivariate_normal_upper(0, 0, 1.5), Error);
}

TEST(ParetoMoment, BothLinks) {
  for (double a : {0.1, 0.5, 0.9}) {
    EXPECT_NEAR(pareto_moment(a, 0.0), std::numbers::pi * a / std::sin(std::numbers::pi * a), 1e-12);
    EXPECT_NEAR(pareto_moment(a, 1.0), 1.0 / (1.0 - a), 1e-12);
  }
}

TEST(TheoreticalChi, SingleKnotMatchesDirectSimulation) {
  // K = 1: chi = E[min(W_i^a_i / E W_i^a_i, W_j^a_j / E W_j^a_j)] with W = g(Z).
  const double phi_i = 0.9, phi_j = 0.8, rho = 0.5, alpha = 0.5;
  const double ai = alpha / phi_i, aj = alpha / phi_j;
  const double mi = std::numbers::pi * ai / std::sin(std::numbers::pi * ai);
  const double mj = std::numbers::pi * aj / std::sin(std::numbers::pi * aj);
  Rng rng = make_stream(41, 0);
  const long long n = 2'000'000;
  double s = 0, s2 = 0;
  for (long long r = 0; r < n; ++r) {
    const double z1 = std_normal(rng), z2 = rho * z1 + std::sqrt(1 - rho * rho) * std_normal(rng);
    const double u1 = 1 - phi_sf(z1), u2 = 1 - phi_sf(z2);
    const double v = std::min(std::pow(u1 / (1 - u1), ai) / mi, std::pow(u2 / (1 - u2), aj) / mj);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  const ChiValue c = theoretical_chi(phi_i, phi_j, alpha, {1.0}, {1.0}, {0.5}, rho);
  EXPECT_EQ(c.label, TailCase::a_i);
  EXPECT_NEAR(c.value, mean, 4 * se);
  EXPECT_NEAR(c.single_jump, c.value, 1e-12);
}

TEST(TheoreticalChi, QuadratureAgreesWithLibraryMonteCarlo) {
  Rng rng = make_stream(42, 0);
  const std::vector<double> wi{0.7, 0.3, 0.0}, wj{0.2, 0.5, 0.3}, g{0.5, 0.5, 0.5};
  const ChiValue q = theoretical_chi(0.75, 0.6, 0.5, wi, wj, g, 0.4);
  const ChiValue m = theoretical_chi_mc(0.75, 0.6, 0.5, wi, wj, g, 0.4, 2'000'000, rng);
  EXPECT_NEAR(q.value, m.value, 4 * m.se);
}

TEST(TheoreticalChi, IdenticalAndDisjointSites) {
  const ChiValue same = theoretical_chi(0.7, 0.7, 0.5, {0.4, 0.6}, {0.4, 0.6}, {0.5, 0.5}, 1.0);
  EXPECT_NEAR(same.value, 1.0, 1e-6);
  const ChiValue apart = theoretical_chi(0.7, 0.7, 0.5, {1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}, 0.9);
  EXPECT_EQ(apart.value, 0.0);
  const ChiValue light = theoretical_chi(0.3, 0.4, 0.5, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, 0.9);
  EXPECT_EQ(light.value, 0.0);
  EXPECT_EQ(light.label, TailCase::a_ii);
  EXPECT_NEAR(shared_weight_mass({0.4, 0.6}, {0.4, 0.6}, {0.5, 0.5}, 0.5), 1.0, 1e-15);
  EXPECT_EQ(shared_weight_mass({1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}, 0.5), 0.0);
}

TEST(EtaBounds, SharedBranches) {
  auto b = eta_bounds(0.8, 0.9, 0.5, 0.75, 0.5, true);
  EXPECT_EQ(b.label, TailCase::a_i);
  EXPECT_EQ(b.eta_lower, 1.0);
  EXPECT_EQ(b.eta_upper, 1.0);

  b = eta_bounds(0.2, 0.4, 0.5, 0.9, 0.8, true);
  EXPECT_EQ(b.label, TailCase::a_ii);
  EXPECT_NEAR(b.eta_lower, 0.9, 1e-15);
  EXPECT_NEAR(b.eta_upper, 0.9, 1e-15);
  b = eta_bounds(0.4, 0.2, 0.5, 0.6, 0.2, true);
  EXPECT_NEAR(b.eta_lower, 0.6, 1e-15);
  EXPECT_NEAR(b.eta_upper, 0.8, 1e-15);
  b = eta_bounds(0.2, 0.4, 0.5, 0.3, -0.4, true);
  EXPECT_NEAR(b.eta_lower, 0.4, 1e-15);
  EXPECT_NEAR(b.eta_upper, 0.8, 1e-15);

  b = eta_bounds(0.3, 0.7, 0.5, 0.75, 0.5, true);
  EXPECT_EQ(b.label, TailCase::a_iii);
  EXPECT_NEAR(b.eta_lower, 1.0 / 1.4, 1e-15);
  EXPECT_NEAR(b.eta_upper, 1.0 / (0.4 / 1.5 + 1.0), 1e-15);
  b = eta_bounds(0.1, 0.7, 0.5, 0.95, 0.9, true);
  EXPECT_NEAR(b.eta_upper, 1.9 / 2.4, 1e-15);
  EXPECT_FALSE(b.boundary);
}

TEST(EtaBounds, DisjointBranches) {
  auto b = eta_bounds(0.8, 0.9, 0.5, 0.75, 0.5, false);
  EXPECT_EQ(b.label, TailCase::b_i);
  EXPECT_NEAR(b.eta_lower, 0.5, 1e-15);
  EXPECT_NEAR(b.eta_upper, 1.0 / 1.6, 1e-15);
  b = eta_bounds(0.9, 0.95, 0.4, 0.75, 0.5, false);
  EXPECT_EQ(b.eta_lower, 0.5);
  EXPECT_EQ(b.eta_upper, 0.5);
  b = eta_bounds(0.2, 0.4, 0.5, 0.6, 0.2, false);
  EXPECT_EQ(b.label, TailCase::b_ii);
  EXPECT_NEAR(b.eta_lower, 0.6, 1e-15);
  EXPECT_NEAR(b.eta_upper, 0.8, 1e-15);
  b = eta_bounds(0.3, 0.95, 0.5, eta_gaussian(0.28), 0.28, false);
  EXPECT_EQ(b.label, TailCase::b_iii);
  EXPECT_NEAR(b.eta_upper, 1.28 / 2.28, 1e-15);
  b = eta_bounds(0.3, 0.9, 0.5, 0.5, 0.0, false);
  EXPECT_TRUE(b.independent);
  EXPECT_EQ(b.eta_lower, 0.5);
  EXPECT_EQ(b.eta_upper, 0.5);
}

TEST(EtaBounds, BoundaryReportsBothSides) {
  const auto b = eta_bounds(0.5, 0.8, 0.5, 0.75, 0.5, true);
  EXPECT_TRUE(b.boundary);
  ASSERT_EQ(b.adjacent.size(), 2u);
  EXPECT_LE(b.eta_lower, std::min(b.adjacent[0].lower, b.adjacent[1].lower));
  EXPECT_GE(b.eta_upper, std::max(b.adjacent[0].upper, b.adjacent[1].upper));
  EXPECT_THROW(eta_bounds(0.5, 0.8, 1.5, 0.75, 0.5, true), Error);
}

TEST(EtaBounds, GaussianCoefficient) {
  EXPECT_EQ(eta_gaussian(0.0), 0.5);
  EXPECT_EQ(eta_gaussian(1.0), 1.0);
  EXPECT_NEAR(eta_gaussian(-0.4), 0.3, 1e-15);
}

TEST(EmpiricalChi, ComonotoneAndIndependent) {
  Rng rng = make_stream(43, 0);
  std::vector<double> a(200000), b(200000);
  for (auto& v : a) v = uniform(rng);
  for (auto& v : b) v = uniform(rng);
  const auto co = empirical_chi(sample_of(a, a), {0.9, 0.99});
  EXPECT_EQ(co[0].chi, 1.0);
  EXPECT_EQ(co[1].chi, 1.0);
  const auto ind = empirical_chi(sample_of(a, b), {0.9, 0.99});
  EXPECT_NEAR(ind[0].chi, 0.1, 3 * ind[0].se);
  EXPECT_NEAR(ind[1].chi, 0.01, 4 * std::sqrt(0.01 * 0.99 / ind[1].n_marginal));
  const auto none = empirical_chi(sample_of({0.1, 0.2}, {0.3, 0.4}), {0.5});
  EXPECT_TRUE(none[0].missing);
}

TEST(EmpiricalEta, ComonotoneAndIndependent) {
  Rng rng = make_stream(44, 0);
  std::vector<double> a(400000), b(400000);
  for (auto& v : a) v = uniform(rng);
  for (auto& v : b) v = uniform(rng);
  const auto co = empirical_eta(sample_of(a, a), 0.99);
  EXPECT_NEAR(co.eta, 1.0, 4 * co.se);
  // min of two independent unit exponentials is exponential with mean 1/2
  const auto ind = empirical_eta(sample_of(a, b), 0.99);
  EXPECT_NEAR(ind.eta, 0.5, 4 * ind.se);
  EXPECT_EQ(ind.n_exceed, 4000);
  EXPECT_FALSE(ind.flagged);
  EXPECT_TRUE(empirical_eta(sample_of(std::vector<double>(1000, 0.5), std::vector<double>(1000, 0.5)), 0.99).flagged);
}

TEST(Scores, RanksAndModel) {
  Matrix y(2, 5);
  y << 3, 1, NAN, 2, 2, 5, 4, 3, 2, 1;
  const Matrix r = rank_scores(y);
  EXPECT_DOUBLE_EQ(r(0, 0), 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(r(0, 1), 1.0 / 5.0);
  EXPECT_TRUE(std::isnan(r(0, 2)));
  EXPECT_DOUBLE_EQ(r(0, 3), 2.5 / 5.0);
  EXPECT_DOUBLE_EQ(r(1, 0), 5.0 / 6.0);
  const MarginalRegression m = MarginalRegression::constant(2, 5, GEVParams{0.5, 2.0, 0.1});
  const Matrix s = model_scores(y, m);
  EXPECT_DOUBLE_EQ(s(1, 3), gev_cdf(2.0, GEVParams{0.5, 2.0, 0.1}));
  EXPECT_TRUE(std::isnan(s(0, 2)));
}

TEST(MovingWindow, ComonotoneFieldAndSparseWindows) {
  Sites sites;
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 10; ++j) sites.push_back({double(i), double(j)});
  Rng rng = make_stream(45, 0);
  Matrix scores(static_cast<Eigen::Index>(sites.size()), 300);
  for (Eigen::Index t = 0; t < 300; ++t) scores.col(t).setConstant(uniform(rng));
  WindowGrid g;
  g.nx = g.ny = 2;
  const auto rows = moving_window_chi(scores, sites, g, 1.0, 0.01, {0.9}, 30);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& w : rows) {
    EXPECT_FALSE(w.missing);
    EXPECT_EQ(w.chi, 1.0);
    EXPECT_GE(w.pairs, 30);
  }
  const auto sparse = moving_window_chi(scores, sites, g, 1.0, 0.01, {0.9}, 100000);
  for (const auto& w : sparse) EXPECT_TRUE(w.missing);
}

TEST(Binomial, BandAndClopperPearson) {
  const auto band = binomial_band(25, 0.95);
  boost::math::binomial_distribution<> d(25, 0.95);
  EXPECT_DOUBLE_EQ(band.first, boost::math::quantile(d, 0.025) / 25.0);
  EXPECT_DOUBLE_EQ(band.second, boost::math::quantile(d, 0.975) / 25.0);
  EXPECT_LE(band.first, 0.95);
  EXPECT_GE(band.second, 0.95);
  const auto cp = clopper_pearson(5, 10);
  EXPECT_NEAR(cp.first, 0.187086, 1e-6);
  EXPECT_NEAR(cp.second, 0.812914, 1e-6);
  EXPECT_EQ(clopper_pearson(0, 10).first, 0.0);
  EXPECT_EQ(clopper_pearson(10, 10).second, 1.0);
}

TEST(Coverage, CredibleIntervals) {
  const Interval z = credible_interval(std::vector<double>(50, 1.3), 0.95);
  EXPECT_EQ(z.lower, 1.3);
  EXPECT_EQ(z.upper, 1.3);
  std::vector<double> seq(101);
  for (int i = 0; i <= 100; ++i) seq[i] = 100 - i;
  const Interval c = credible_interval(seq, 0.9);
  EXPECT_DOUBLE_EQ(c.lower, 5.0);
  EXPECT_DOUBLE_EQ(c.upper, 95.0);
  EXPECT_THROW(credible_interval({}, 0.9), Error);
}

TEST(Coverage, OracleFitters) {
  auto scenario = [](int i) { return build_scenario(1, 12, 2, 500 + i); };
  auto around = [](double shift) {
    return [shift](const SimulatedDataset& sim, int) {
      FitDraws f;
      for (const auto& [name, v] : truth_values(sim.truth)) f.draws[name] = {v + shift - 0.1, v + shift, v + shift + 0.1};
      return f;
    };
  };
  const CoverageTable hit = coverage_study(scenario, 6, {0.5, 0.95}, around(0.0));
  EXPECT_EQ(hit.row("mu", 0.95).coverage, 1.0);
  EXPECT_EQ(hit.row("phi", 0.5).total, 6 * 9);
  EXPECT_EQ(hit.row("phi", 0.5).coverage, 1.0);
  const CoverageTable miss = coverage_study(scenario, 6, {0.95}, around(5.0));
  EXPECT_EQ(miss.row("rho_3", 0.95).coverage, 0.0);
  EXPECT_EQ(miss.row("sigma", 0.95).covered, 0);

  const CoverageTable some = coverage_study(scenario, 6, {0.95}, [&](const SimulatedDataset& sim, int i) {
    if (i % 2) throw Error(ErrorKind::numeric, "synthetic failure");
    return around(0.0)(sim, i);
  });
  EXPECT_EQ(some.failed, 3);
  EXPECT_EQ(some.row("mu", 0.95).total, 3);
}

TEST(Predictive, MatchesJointLikelihoodDifference) {
  // log f(y_h | y_train) = log f(y_train, y_h) - log f(y_train), both from the sampler likelihood.
  const ProcessSpec ps = build_scenario(2, 14, 3, 46);
  const SimulatedDataset sim = simulate_field(ps);
  const Dataset all = Dataset::from_simulation(sim);
  Dataset train = all;
  train.covariates.sites.resize(12);
  train.covariates.elev.resize(std::min<std::size_t>(train.covariates.elev.size(), 12));
  train.station_ids.resize(12);
  train.Y = all.Y.topRows(12);

  ModelSpec m;
  m.knots = ps.knots;
  m.kernel = ps.kernel;
  m.gamma = ps.gamma;
  m.nu = ps.nu;
  ModelState st = default_initial_state(all, m);
  st.S = sim.S;
  st.phi = ps.phi_knots;
  st.rho = ps.rho_knots_values;
  st.block(Block::mu0) = ps.margins.mu0;
  st.block(Block::logsigma) = ps.margins.logsigma;
  st.block(Block::xi) = ps.margins.xi;

  ChainConfig c;
  c.iterations = 1;
  c.burn_in = 0;
  c.store_S = true;
  c.update_S = c.update_phi = c.update_rho = c.update_margins = false;
  Sampler chain(train, m, PriorSpec{}, c, st);
  const ChainOutput& out = chain.run();

  HoldoutData hold;
  hold.covariates.sites = {all.covariates.sites[12], all.covariates.sites[13], all.covariates.sites[4]};
  hold.Y = Matrix(3, 3);
  hold.Y << all.Y.row(12), all.Y.row(13), all.Y.row(4);
  const PredictiveResult pr = predictive_loglik(train, hold, m, out);
  ASSERT_EQ(pr.loglik.cols(), 1);

  const double base = chain.log_likelihood();
  for (int h = 0; h < 2; ++h) {
    Dataset plus = train;
    plus.covariates.sites.push_back(all.covariates.sites[12 + h]);
    plus.Y.conservativeResize(13, Eigen::NoChange);
    plus.Y.row(12) = all.Y.row(12 + h);
    const Sampler joint(plus, m, PriorSpec{}, c, st);
    EXPECT_NEAR(pr.loglik(h, 0), joint.log_likelihood() - base, 1e-7);
  }
  // a holdout on top of training site 4 is scored against the other eleven
  Dataset minus = train;
  minus.covariates.sites.erase(minus.covariates.sites.begin() + 4);
  Matrix y(11, 3);
  y << train.Y.topRows(4), train.Y.bottomRows(7);
  minus.Y = y;
  const Sampler without(minus, m, PriorSpec{}, c, st);
  EXPECT_NEAR(pr.loglik(2, 0), base - without.log_likelihood(), 1e-7);

  const PredictiveResult loo = insample_loglik(train, m, out);
  EXPECT_NEAR(loo.loglik(4, 0), pr.loglik(2, 0), 1e-10);
}

TEST(Predictive, NeedsStoredDraws) {
  const ProcessSpec ps = build_scenario(1, 6, 2, 47);
  const Dataset d = Dataset::from_simulation(simulate_field(ps));
  ModelSpec m;
  m.knots = ps.knots;
  m.kernel = ps.kernel;
  m.gamma = ps.gamma;
  ChainOutput empty;
  HoldoutData hold{d.covariates, d.Y};
  EXPECT_THROW(predictive_loglik(d, hold, m, empty), Error);
  ChainConfig c;
  c.iterations = 2;
  c.burn_in = 0;
  Sampler s(d, m, PriorSpec{}, c, default_initial_state(d, m));
  EXPECT_THROW(predictive_loglik(d, hold, m, s.run()), Error);
}

TEST(QQ, WellSpecifiedMarginsTrackTheDiagonal) {
  Rng rng = make_stream(48, 0);
  const GEVParams g{1.0, 0.5, 0.1};
  std::vector<double> y(400);
  for (auto& v : y) v = gev_quantile(uniform(rng), g);
  const std::vector<std::vector<GEVParams>> draws{std::vector<GEVParams>(400, g)};
  const QQResult q = qq_gumbel(y, draws, 200, rng);
  ASSERT_EQ(q.theoretical.size(), 400u);
  int inside = 0;
  for (std::size_t i = 0; i < 400; ++i) {
    ASSERT_LE(q.lower[i], q.upper[i]);
    if (i) ASSERT_GE(q.empirical[i], q.empirical[i - 1]);
    inside += q.empirical[i] >= q.lower[i] && q.empirical[i] <= q.upper[i];
  }
  EXPECT_GE(inside, 360);
  EXPECT_THROW(qq_gumbel({1, 2, 3}, draws, 10, rng), Error);
}
