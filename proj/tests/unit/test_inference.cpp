#include <cmath>
#include <filesystem>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <gtest/gtest.h>

#include "scalemix/error.hpp"
#include "scalemix/inference.hpp"
#include "scalemix/simulator.hpp"
#include "scalemix/stable.hpp"
#include "test_support.hpp"

using namespace scalemix;

namespace {

ModelSpec spec_model(const ProcessSpec& s) {
  ModelSpec m;
  m.knots = s.knots;
  m.kernel = s.kernel;
  m.gamma = s.gamma;
  m.nu = s.nu;
  return m;
}

ChainConfig short_chain(long long iters, std::uint64_t seed = 3) {
  ChainConfig c;
  c.iterations = iters;
  c.burn_in = iters / 2;
  c.batch = 10;
  c.seed = seed;
  return c;
}

Dataset one_site(double y) {
  Dataset d;
  d.covariates.sites = {{5, 5}};
  d.Y = Matrix::Constant(1, 1, y);
  d.time = Vector::Zero(1);
  return d;
}

ModelSpec one_knot_model() {
  ModelSpec m;
  m.knots.knots = {{5, 5}};
  m.kernel = KernelConfig{infinite_radius, 2, 4, 4};
  m.gamma = Vector::Constant(1, 0.5);
  return m;
}

ModelState one_knot_state(double S, double phi, double mu, double sigma, double xi) {
  ModelState st;
  st.S = Matrix::Constant(1, 1, S);
  st.phi = Vector::Constant(1, phi);
  st.rho = Vector::Constant(1, 1.0);
  st.coef = {Vector::Constant(1, mu), Vector::Zero(0), Vector::Constant(1, std::log(sigma)), Vector::Constant(1, xi)};
  return st;
}

}  // namespace

TEST(Likelihood, SingleSiteIntegratesToGevDensity) {
  // f(y | S) integrated against the Levy law of S is the GEV density of y.
  for (double phi : {0.3, 0.7}) {
    for (double y : {-0.5, 0.4, 3.0}) {
      auto f = [&](double s) {
        Sampler smp(one_site(y), one_knot_model(), PriorSpec{}, short_chain(1), one_knot_state(s, phi, 0.2, 1.1, 0.15));
        return std::exp(smp.log_likelihood_replicate(0)) * levy_density(s, 0.5);
      };
      boost::math::quadrature::exp_sinh<double> es;
      const double total = es.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-12);
      EXPECT_NEAR(total / gev_pdf(y, GEVParams{0.2, 1.1, 0.15}), 1.0, 1e-8) << "phi " << phi << " y " << y;
    }
  }
}

TEST(Likelihood, MaskingEqualsSubModel) {
  const ProcessSpec ps = build_scenario(3, 6, 2, 5);
  const SimulatedDataset sim = simulate_field(ps);
  Dataset full = Dataset::from_simulation(sim);
  full.Y(2, 0) = NAN;
  Dataset sub = full;
  sub.covariates.sites.erase(sub.covariates.sites.begin() + 2);
  sub.Y = Matrix(5, 2);
  sub.Y << full.Y.topRows(2), full.Y.bottomRows(3);
  sub.Y(0, 1) = full.Y(0, 1);
  const ModelSpec m = spec_model(ps);
  ModelState st = default_initial_state(full, m);
  st.S = sim.S;
  Sampler a(full, m, PriorSpec{}, short_chain(1), st);
  Sampler b(sub, m, PriorSpec{}, short_chain(1), st);
  EXPECT_NEAR(a.log_likelihood_replicate(0), b.log_likelihood_replicate(0), 1e-10);
}

TEST(Likelihood, LocationEquivariance) {
  const ProcessSpec ps = build_scenario(2, 8, 3, 6);
  const SimulatedDataset sim = simulate_field(ps);
  Dataset d = Dataset::from_simulation(sim);
  const ModelSpec m = spec_model(ps);
  ModelState st = default_initial_state(d, m);
  st.S = sim.S;
  Sampler a(d, m, PriorSpec{}, short_chain(1), st);
  d.Y.array() += 2.5;
  st.coef[0][0] += 2.5;
  Sampler b(d, m, PriorSpec{}, short_chain(1), st);
  EXPECT_NEAR(a.log_likelihood(), b.log_likelihood(), 1e-8);
}

TEST(Likelihood, FactorisesOverReplicates) {
  const ProcessSpec ps = build_scenario(2, 10, 4, 7);
  const SimulatedDataset sim = simulate_field(ps);
  const Dataset d = Dataset::from_simulation(sim);
  const ModelSpec m = spec_model(ps);
  ModelState st = default_initial_state(d, m);
  st.S = sim.S;
  Sampler s(d, m, PriorSpec{}, short_chain(1), st);
  double sum = 0.0;
  for (Eigen::Index t = 0; t < 4; ++t) sum += s.log_likelihood_replicate(t);
  EXPECT_DOUBLE_EQ(sum, s.log_likelihood());
  const Vector before = (Vector(4) << s.log_likelihood_replicate(0), s.log_likelihood_replicate(1),
                         s.log_likelihood_replicate(2), s.log_likelihood_replicate(3))
                            .finished();
  Rng rng = make_stream(1, 1);
  for (int i = 0; i < 20; ++i) s.update_S(4, 2, rng);
  for (Eigen::Index t : {0, 1, 3}) EXPECT_EQ(s.log_likelihood_replicate(t), before[t]);
}

TEST(Prior, BetaModeAndHalfNormal) {
  const PriorSpec p;
  EXPECT_GT(p.log_phi(0.5), p.log_phi(0.49));
  EXPECT_GT(p.log_phi(0.5), p.log_phi(0.51));
  EXPECT_EQ(p.log_phi(1.0), -INFINITY);
  EXPECT_EQ(p.log_rho(-1.0), -INFINITY);
  EXPECT_NEAR(p.log_rho(1.0) - p.log_rho(3.0), (9.0 - 1.0) / 8.0, 1e-12);
  EXPECT_NEAR(p.log_S(0.7), levy_log_density(0.7, 0.5), 1e-14);
}

TEST(Sampler, CachesStayCoherent) {
  const ProcessSpec ps = build_scenario(3, 15, 5, 8);
  const SimulatedDataset sim = simulate_field(ps);
  const Dataset d = Dataset::from_simulation(sim);
  const ModelSpec m = spec_model(ps);
  Sampler s(d, m, PriorSpec{}, short_chain(40), default_initial_state(d, m));
  for (int i = 0; i < 25; ++i) {
    s.sweep();
    ASSERT_NEAR(s.log_posterior(), s.recompute_log_posterior(), 1e-8) << "sweep " << i;
  }
}

TEST(Sampler, VanishingProposalAlwaysAccepted) {
  const ProcessSpec ps = build_scenario(2, 10, 3, 9);
  const Dataset d = Dataset::from_simulation(simulate_field(ps));
  const ModelSpec m = spec_model(ps);
  Sampler s(d, m, PriorSpec{}, short_chain(10), default_initial_state(d, m));
  s.slots()[s.slot_phi(4)].log_scale = -40.0;
  Rng rng = make_stream(4, 4);
  int acc = 0;
  for (int i = 0; i < 100; ++i) acc += s.update_phi(4, rng);
  EXPECT_EQ(acc, 100);
}

TEST(Adaptation, TargetZeroAndFrozen) {
  const ProcessSpec ps = build_scenario(1, 6, 2, 10);
  const Dataset d = Dataset::from_simulation(simulate_field(ps));
  const ModelSpec m = spec_model(ps);
  ChainConfig c = short_chain(100);
  c.burn_in = 100;
  Sampler s(d, m, PriorSpec{}, c, default_initial_state(d, m));
  auto& slot = s.slots()[s.slot_rho(0)];
  const double start = slot.log_scale;
  slot.batch_attempts = 100;
  slot.batch_accepts = static_cast<long long>(slot.target * 100);
  s.adapt_proposals(3);
  EXPECT_NEAR(slot.log_scale, start, 1e-12);
  slot.batch_attempts = 50;
  slot.batch_accepts = 0;
  s.adapt_proposals(4);
  EXPECT_LT(slot.log_scale, start);

  ChainConfig f = short_chain(10);
  f.burn_in = 0;
  Sampler g(d, m, PriorSpec{}, f, default_initial_state(d, m));
  g.run();
  auto& gs = g.slots()[g.slot_rho(0)];
  const double frozen = gs.log_scale;
  gs.batch_attempts = 50;
  gs.batch_accepts = 0;
  g.adapt_proposals(7);
  EXPECT_EQ(gs.log_scale, frozen);
}

TEST(Sampler, FlatLikelihoodRecoversBetaPrior) {
  Dataset d;
  d.covariates.sites = {{2, 2}, {8, 8}};
  d.Y = Matrix::Zero(2, 2);
  d.time = Vector::Zero(2);
  ModelSpec m;
  m.knots = KnotGrid::regular(1, 0, 10);
  m.kernel = KernelConfig{infinite_radius, 2, 4, 4};
  m.gamma = Vector::Constant(1, 0.5);
  ChainConfig c;
  c.flat_likelihood = true;
  c.iterations = 1'000'000;
  c.burn_in = 2000;
  c.thin = 10;
  c.seed = 5;
  Sampler s(d, m, PriorSpec{}, c, default_initial_state(d, m));
  const auto& out = s.run();
  const auto phi = out.draws("phi_0");
  ASSERT_GE(phi.size(), 99'000u);
  boost::math::beta_distribution<> b(5, 5);
  EXPECT_LT(support::ks_distance(phi, [&](double x) { return boost::math::cdf(b, x); }), 0.02);
}

TEST(Chain, TraceLengthsAndResume) {
  const ProcessSpec ps = build_scenario(2, 12, 4, 11);
  const Dataset d = Dataset::from_simulation(simulate_field(ps));
  const ModelSpec m = spec_model(ps);
  ChainConfig c = short_chain(40, 21);
  c.thin = 2;
  c.store_S = true;
  Sampler whole(d, m, PriorSpec{}, c, default_initial_state(d, m));
  const ChainOutput full = whole.run();
  EXPECT_EQ(full.records(), 20u);
  EXPECT_EQ(full.log_post.size(), 20u);
  EXPECT_EQ(full.values.size(), 20u * full.names.size());
  EXPECT_EQ(full.S_draws.size(), 20u);

  const std::string dir = support::temp_dir("resume");
  ChainConfig half = c;
  half.iterations = 40;
  half.checkpoint_every = 14;
  half.checkpoint_path = dir + "/chain.ckpt";
  {
    Sampler first(d, m, PriorSpec{}, half, default_initial_state(d, m));
    while (first.iteration() < 28) first.sweep();
    first.save_checkpoint(half.checkpoint_path);
  }
  Sampler second(d, m, PriorSpec{}, half, default_initial_state(d, m));
  second.load_checkpoint(half.checkpoint_path);
  EXPECT_EQ(second.iteration(), 28);
  const ChainOutput resumed = second.run();
  EXPECT_EQ(resumed.hash(), full.hash());
  EXPECT_EQ(resumed.values, full.values);
  std::filesystem::remove_all(dir);
}

TEST(Chain, CheckpointFromOtherSeedRejected) {
  const ProcessSpec ps = build_scenario(2, 6, 2, 12);
  const Dataset d = Dataset::from_simulation(simulate_field(ps));
  const ModelSpec m = spec_model(ps);
  const std::string dir = support::temp_dir("seed");
  ChainConfig c = short_chain(4, 1);
  Sampler a(d, m, PriorSpec{}, c, default_initial_state(d, m));
  a.run();
  a.save_checkpoint(dir + "/a.ckpt");
  c.seed = 2;
  Sampler b(d, m, PriorSpec{}, c, default_initial_state(d, m));
  EXPECT_THROW(b.load_checkpoint(dir + "/a.ckpt"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Chain, TracedMarginsKeepDataInSupport) {
  const ProcessSpec ps = build_scenario(1, 10, 6, 13);
  const Dataset d = Dataset::from_simulation(simulate_field(ps));
  const ModelSpec m = spec_model(ps);
  ChainConfig c = short_chain(150, 8);
  Sampler s(d, m, PriorSpec{}, c, default_initial_state(d, m));
  const auto& out = s.run();
  const int cm = out.column("mu0_0"), cs = out.column("logsigma_0"), cx = out.column("xi_0");
  for (std::size_t r = 0; r < out.records(); ++r) {
    const GEVParams g{out.at(r, cm), std::exp(out.at(r, cs)), out.at(r, cx)};
    for (Eigen::Index j = 0; j < d.sites(); ++j)
      for (Eigen::Index t = 0; t < d.replicates(); ++t) ASSERT_TRUE(gev_in_support(d.Y(j, t), g));
    ASSERT_TRUE(std::isfinite(out.log_post[r]));
  }
}

TEST(Chain, RecoversScenarioOnePhi) {
  const ProcessSpec ps = build_scenario(1, 80, 40, 14);
  const SimulatedDataset sim = simulate_field(ps);
  const Dataset d = Dataset::from_simulation(sim);
  ModelSpec m = spec_model(ps);
  m.update_xi = false;
  ChainConfig c;
  c.iterations = 2000;
  c.burn_in = 1000;
  c.seed = 15;
  ModelState init = default_initial_state(d, m);
  init.coef[3][0] = 0.2;
  Sampler s(d, m, PriorSpec{}, c, init);
  const auto& out = s.run();
  int close = 0;
  for (int k = 0; k < 9; ++k) {
    const auto draws = out.draws("phi_" + std::to_string(k));
    double mean = 0.0;
    for (double v : draws) mean += v;
    mean /= static_cast<double>(draws.size());
    close += std::abs(mean - ps.phi_knots[k]) <= 0.15;
  }
  EXPECT_GE(close, 7);
}
