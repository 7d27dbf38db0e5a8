#include <cmath>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <gtest/gtest.h>

#include "scalemix/error.hpp"
#include "scalemix/margins.hpp"
#include "scalemix/stable.hpp"

using namespace scalemix;

namespace {

// Independent draw of R^phi W: R = bar_gamma / N^2 is Levy, W = U / (1 - U).
struct MixtureDraws {
  std::mt19937_64 eng;
  std::normal_distribution<double> n{0.0, 1.0};
  std::uniform_real_distribution<double> u{0.0, 1.0};
  explicit MixtureDraws(unsigned s) : eng(s) {}
  double operator()(double phi, double g) {
    const double z = n(eng);
    const double v = u(eng);
    return std::pow(g / (z * z), phi) * v / (1.0 - v);
  }
};

double mc_survival(double x, double phi, double g, int n, unsigned seed, double* se) {
  MixtureDraws d(seed);
  long long c = 0;
  for (int i = 0; i < n; ++i) c += d(phi, g) > x;
  const double p = static_cast<double>(c) / n;
  *se = std::sqrt(p * (1 - p) / n);
  return p;
}

}  // namespace

TEST(Link, Values) {
  EXPECT_DOUBLE_EQ(link_g(0.0), 1.0);
  EXPECT_DOUBLE_EQ(link_g(0.0, 2.0), 3.0);
  boost::math::normal nd;
  EXPECT_NEAR(link_g(boost::math::quantile(nd, 0.99)), 99.0, 1e-9);
  EXPECT_NEAR(link_g_inverse(1.0), 0.0, 1e-15);
  EXPECT_NEAR(link_g_inverse(3.0, 2.0), 0.0, 1e-15);
  EXPECT_THROW(link_g_inverse(0.0), Error);
  EXPECT_THROW(link_g_inverse(-1.0), Error);
}

TEST(Link, ParetoIdentityAndRoundTrip) {
  Rng rng = make_stream(41, 0);
  boost::math::normal nd;
  for (int i = 0; i < 100; ++i) {
    const double z = 6 * uniform(rng) - 3;
    const double w = link_g(z);
    ASSERT_NEAR(1.0 - 1.0 / (1.0 + w), boost::math::cdf(nd, z), 1e-12);
    const double w2 = std::exp(10 * uniform(rng) - 5);
    ASSERT_NEAR(link_g(link_g_inverse(w2)) / w2, 1.0, 1e-10);
  }
  double prev = 0.0;
  for (double z = -8; z < 8; z += 0.01) {
    ASSERT_GT(link_g(z), prev);
    prev = link_g(z);
  }
}

TEST(Survival, ZeroAndMonotone) {
  const MixtureMarginal m{0.3, 1.0};
  EXPECT_DOUBLE_EQ(x_survival(0.0, m), 1.0);
  double prev = 1.0;
  for (double x = 1e-3; x < 1e8; x *= 1.5) {
    const double s = x_survival(x, m);
    ASSERT_LT(s, prev);
    ASSERT_GT(s, 0.0);
    prev = s;
  }
  EXPECT_THROW(x_survival(-1.0, m), Error);
}

TEST(Survival, MonteCarloOracle) {
  const MixtureMarginal m{0.3, 1.0};
  for (double x : {1.0, 10.0, 100.0}) {
    double se;
    const double p = mc_survival(x, 0.3, 1.0, 1000000, 42, &se);
    EXPECT_NEAR(x_survival(x, m), p, 3 * se) << "x = " << x;
  }
}

TEST(Survival, AsymptoteAtOneInAMillion) {
  for (double phi : {0.3, 0.5, 0.7}) {
    const MixtureMarginal m{phi, 1.0};
    const MarginalIntegrator integ(m);
    const double x = integ.upper_quantile(1e-6);
    EXPECT_NEAR(x_survival(x, m) / marginal_tail_asymptote(x, m), 1.0, 0.1) << "phi = " << phi;
  }
}

TEST(Survival, DeepTailSlope) {
  for (double phi : {0.25, 0.5, 0.75}) {
    const MixtureMarginal m{phi, 1.0};
    const MarginalIntegrator integ(m);
    const double x1 = integ.upper_quantile(1e-8), x2 = integ.upper_quantile(1e-10);
    auto f = [&](double x) { return std::log(integ.survival(x)) - (phi == 0.5 ? std::log(std::log(x)) : 0.0); };
    const double slope = (f(x2) - f(x1)) / (std::log(x2) - std::log(x1));
    EXPECT_NEAR(slope, -std::min(1.0, 0.5 / phi), 0.05) << "phi = " << phi;
  }
}

TEST(Asymptote, Branches) {
  const MixtureMarginal at{0.5, 1.0};
  const double x = 1e5;
  EXPECT_NEAR(marginal_tail_asymptote(x, at), 0.7978845608028654 * std::log(x) / x, 1e-15);
  const MixtureMarginal lo{0.25, 1.0};
  EXPECT_DOUBLE_EQ(marginal_tail_asymptote(x, lo), levy_fractional_moment(0.25, lo) / x);
  const MixtureMarginal hi{0.7, 2.0};
  const double a = 0.5 / 0.7;
  const double c = 2 * stable_tail_constant(0.5) * std::sqrt(2.0) * M_PI * a / std::sin(M_PI * a);
  EXPECT_NEAR(marginal_tail_asymptote(x, hi), c * std::pow(x, -0.5 / 0.7), 1e-15);
}

TEST(FractionalMoment, ValuesAndScaling) {
  const MixtureMarginal m{0.25, 1.0};
  EXPECT_NEAR(levy_fractional_moment(1e-9, m), 1.0, 1e-8);
  const MixtureMarginal m3{0.25, 3.0};
  EXPECT_NEAR(levy_fractional_moment(0.25, m3) / levy_fractional_moment(0.25, m), std::pow(3.0, 0.25), 1e-12);
  EXPECT_THROW(levy_fractional_moment(0.5, m), Error);
  EXPECT_THROW(levy_fractional_moment(0.7, m), Error);
  // Monte Carlo mean of R^0.25 with R = 1 / N^2
  std::mt19937_64 eng(43);
  std::normal_distribution<double> nd;
  double s = 0, s2 = 0;
  const int n = 10000000;
  for (int i = 0; i < n; ++i) {
    const double z = nd(eng);
    const double v = std::pow(1.0 / (z * z), 0.25);
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(levy_fractional_moment(0.25, m) / (s / n), 1.0, 0.01);
}

TEST(Density, IntegratesToOneAndMatchesDerivative) {
  for (double phi : {0.2, 0.5, 0.8}) {
    const MixtureMarginal m{phi, 1.3};
    const MarginalIntegrator integ(m);
    boost::math::quadrature::exp_sinh<double> es;
    const double total = es.integrate([&](double x) { return integ.density(x); }, 0.0,
                                      std::numeric_limits<double>::infinity());
    EXPECT_NEAR(total, 1.0, 1e-4) << "phi = " << phi;
    for (double x : {0.05, 0.7, 3.0, 40.0, 2000.0}) {
      const double h = 1e-4 * x;
      const double fd = (integ.survival(x - h) - integ.survival(x + h)) / (2 * h);
      EXPECT_NEAR(integ.density(x) / fd, 1.0, 1e-6) << "phi = " << phi << " x = " << x;
    }
  }
}

TEST(Density, NonnegativeAtRandomPoints) {
  Rng rng = make_stream(44, 0);
  const MixtureMarginal m{0.45, 0.8};
  for (int i = 0; i < 1000; ++i) ASSERT_GE(x_density(std::exp(20 * uniform(rng) - 8), m), 0.0);
}

TEST(Quantile, RoundTripAndMonotone) {
  for (double phi : {0.2, 0.5, 0.7}) {
    const MixtureMarginal m{phi, 1.0};
    for (double p : {0.01, 0.5, 0.999}) {
      const double x = x_quantile(p, m);
      EXPECT_NEAR(x_cdf(x, m), p, 1e-8);
    }
    double prev = 0.0;
    for (double p = 0.005; p < 1.0; p += 0.005) {
      const double x = x_quantile(p, m);
      ASSERT_GT(x, prev);
      prev = x;
    }
  }
  EXPECT_THROW(x_quantile(1.0, MixtureMarginal{}), Error);
}

TEST(Quantile, UpperQuantileAgainstMonteCarlo) {
  const MixtureMarginal m{0.7, 1.0};
  const double x = x_quantile(0.999, m);
  double se;
  const double p = mc_survival(x, 0.7, 1.0, 2000000, 45, &se);
  EXPECT_NEAR(p, 0.001, 3 * se);
}

TEST(Gev, Identities) {
  const GEVParams g{0.0, 1.0, 0.2};
  EXPECT_NEAR(gev_cdf(0.0, g), std::exp(-1.0), 1e-15);
  for (double p : {1e-6, 0.1, 0.5, 0.9, 0.999999}) EXPECT_NEAR(gev_cdf(gev_quantile(p, g), g), p, 1e-10);
  for (double y : {-2.0, 0.0, 1.0, 10.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(gev_pdf(y, g), (gev_cdf(y + h, g) - gev_cdf(y - h, g)) / (2 * h), 1e-8);
  }
  EXPECT_NEAR(gev_survival(gev_upper_quantile(1e-12, g), g) / 1e-12, 1.0, 1e-9);
}

TEST(Gev, SupportAndGumbelBranch) {
  const GEVParams g{0.0, 1.0, 0.2};
  EXPECT_FALSE(gev_in_support(-6.0, g));
  EXPECT_EQ(gev_cdf(-6.0, g), 0.0);
  EXPECT_EQ(gev_pdf(-6.0, g), 0.0);
  const GEVParams neg{0.0, 1.0, -0.5};
  EXPECT_EQ(gev_cdf(3.0, neg), 1.0);
  const GEVParams gum{1.0, 2.0, 1e-10};
  EXPECT_NEAR(gev_cdf(2.0, gum), std::exp(-std::exp(-0.5)), 1e-12);
  EXPECT_NEAR(gev_cdf(2.0, GEVParams{1.0, 2.0, 2e-8}), gev_cdf(2.0, gum), 1e-7);
  EXPECT_THROW(GEVParams({0.0, 0.0, 0.1}).validate(), Error);
  EXPECT_THROW(gev_cdf(0.0, GEVParams{0.0, -1.0, 0.1}), Error);
}

TEST(Copula, FullRoundTrip) {
  Rng rng = make_stream(46, 0);
  for (int i = 0; i < 100; ++i) {
    const MixtureMarginal m{0.1 + 0.8 * uniform(rng), 0.3 + 2 * uniform(rng)};
    const MarginalIntegrator integ(m);
    const GEVParams g{4 * uniform(rng) - 2, 0.5 + uniform(rng), 0.4 * uniform(rng) - 0.1};
    const double y = gev_quantile(0.001 + 0.998 * uniform(rng), g);
    const double r = std::exp(6 * uniform(rng) - 2);
    const CopulaPoint cp = copula_Y_to_X(y, g, integ);
    EXPECT_NEAR(integ.evaluate(cp.x).cdf, gev_cdf(y, g), 1e-8);
    const double z = x_to_z(cp.x, r, m.phi);
    const double x2 = z_to_x(z, r, m.phi);
    ASSERT_NEAR(copula_X_to_Y(x2, g, integ), y, 1e-6 * std::max(1.0, std::abs(y)));
  }
}

TEST(Copula, MedianMapsToMedian) {
  const MixtureMarginal m{0.6, 1.0};
  const MarginalIntegrator integ(m);
  const GEVParams g{0.0, 1.0, 0.2};
  EXPECT_NEAR(copula_Y_to_X(gev_quantile(0.5, g), g, integ).x / x_quantile(0.5, m), 1.0, 1e-8);
}

TEST(Jacobian, FiniteDifferences) {
  Rng rng = make_stream(47, 0);
  for (int i = 0; i < 100; ++i) {
    const MixtureMarginal m{0.1 + 0.8 * uniform(rng), 0.3 + 2 * uniform(rng)};
    const MarginalIntegrator integ(m);
    const GEVParams g{uniform(rng), 0.5 + uniform(rng), 0.3 * uniform(rng)};
    const double y = gev_quantile(0.02 + 0.96 * uniform(rng), g);
    const double r = std::exp(4 * uniform(rng) - 1);
    auto zf = [&](double yy) { return x_to_z(copula_Y_to_X(yy, g, integ).x, r, m.phi); };
    const double x = copula_Y_to_X(y, g, integ).x;
    const double jd = jacobian_diag(y, x, zf(y), r, m.phi, g, m);
    const double h = 1e-4 * g.sigma;
    const double fd = (zf(y + h) - zf(y - h)) / (2 * h);
    ASSERT_NEAR(jd / fd, 1.0, 1e-5) << "state " << i;
    ASSERT_GT(jd, 0.0);
  }
}

TEST(Jacobian, RScalingIrrelevantAtPhiZero) {
  const MixtureMarginal m{0.4, 1.0};
  const GEVParams g{0, 1, 0.1};
  const double y = 0.7;
  const double x = copula_Y_to_X(y, g, MarginalIntegrator(m)).x;
  const double z = x_to_z(x, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(jacobian_diag(y, x, z, 1.0, 0.0, g, m), jacobian_diag(y, x, z, 9.0, 0.0, g, m));
}

TEST(Regression, DesignAndSurfaces) {
  SiteCovariates cov{{{1, 2}, {3, 4}}, {100, 200}};
  DesignSpec d;
  d.mu0 = {"1", "x", "elev"};
  d.mu1 = {"1"};
  Vector time(3);
  time << 0, 1, 2;
  MarginalRegression reg = MarginalRegression::from_spec(d, cov, time);
  reg.mu0 << 1.0, 0.5, 0.01;
  reg.mu1 << 0.1;
  reg.logsigma << std::log(2.0);
  reg.xi << 0.1;
  EXPECT_NO_THROW(reg.validate());
  const GEVParams g = reg.at(1, 2);
  EXPECT_NEAR(g.mu, 1.0 + 1.5 + 2.0 + 0.2, 1e-14);
  EXPECT_NEAR(g.sigma, 2.0, 1e-14);
  d.xi = {"slope"};
  EXPECT_THROW(MarginalRegression::from_spec(d, cov, time), Error);
}

TEST(Quantile, FarWarmStartStillConverges) {
  // a guess deep in the flat lower tail used to push Newton past the double range
  const MarginalIntegrator integ(MixtureMarginal{0.49652, 1.06948});
  for (double guess : {7.20586e-4, 1e-12, 1e8}) {
    const double x = integ.quantile(0.840611, 0.159389, guess);
    EXPECT_NEAR(integ.evaluate(x).survival / 0.159389, 1.0, 1e-10) << guess;
  }
}
