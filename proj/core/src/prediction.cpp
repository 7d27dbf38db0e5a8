#include <cmath>
#include <map>
#include <numbers>

#include <tbb/parallel_for.h>

#include "scalemix/diagnostics.hpp"
#include "scalemix/error.hpp"

namespace scalemix {

namespace {

struct DrawParams {
  Vector phi, rho;
  std::array<Vector, 4> coef;
  const Matrix* S = nullptr;
};

std::vector<std::size_t> pick_records(const ChainOutput& chain, int max_draws) {
  require(chain.records() > 0, ErrorKind::validation, "chain has no draws");
  require(chain.S_draws.size() == chain.records(), ErrorKind::validation,
          "chain was run without storing S; prediction needs the knot variables");
  require(max_draws >= 1, ErrorKind::parameter, "max_draws must be positive");
  std::vector<std::size_t> post;
  for (std::size_t r = 0; r < chain.records(); ++r)
    if (chain.iteration[r] > chain.burn_in) post.push_back(r);
  require(!post.empty(), ErrorKind::validation, "chain has no post burn-in draws");
  if (static_cast<int>(post.size()) <= max_draws) return post;
  std::vector<std::size_t> out;
  for (int d = 0; d < max_draws; ++d)
    out.push_back(post[static_cast<std::size_t>(d) * post.size() / static_cast<std::size_t>(max_draws)]);
  return out;
}

DrawParams draw_params(const ChainOutput& chain, std::size_t r, const ModelSpec& model, const ModelState& shape) {
  DrawParams p;
  p.phi.resize(static_cast<Eigen::Index>(model.knots.size()));
  p.rho.resize(static_cast<Eigen::Index>(model.range_knots().size()));
  for (Eigen::Index k = 0; k < p.phi.size(); ++k) p.phi[k] = chain.at(r, chain.column("phi_" + std::to_string(k)));
  for (Eigen::Index k = 0; k < p.rho.size(); ++k) p.rho[k] = chain.at(r, chain.column("rho_" + std::to_string(k)));
  for (Block b : all_blocks) {
    Vector& v = p.coef[static_cast<int>(b)];
    v.resize(shape.block(b).size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v[i] = chain.at(r, chain.column(std::string(block_name(b)) + "_" + std::to_string(i)));
  }
  p.S = &chain.S_draws[r];
  return p;
}

// Per observed (site, replicate): Z and log |dz/dy|; NaN where Y is missing.
struct Transformed {
  Matrix Z, log_jac;
};

Transformed transform_sites(const SiteCovariates& cov, const Matrix& Y, const Vector& time, const ModelSpec& model,
                            const DrawParams& p) {
  const WeightMatrix W = wendland_weights(cov.sites, model.knots, model.kernel);
  const Vector phi_s = gaussian_smoother(cov.sites, model.knots, model.kernel.bandwidth_phi) * p.phi;
  const Vector gbar = bar_gamma_surface(W, model.gamma);
  MarginalRegression reg = MarginalRegression::from_spec(model.design, cov, time);
  reg.mu0 = p.coef[0];
  reg.mu1 = p.coef[1];
  reg.logsigma = p.coef[2];
  reg.xi = p.coef[3];
  const Eigen::Index D = Y.rows(), T = Y.cols();
  Transformed out{Matrix::Constant(D, T, NAN), Matrix::Constant(D, T, NAN)};
  tbb::parallel_for(Eigen::Index(0), D, [&](Eigen::Index j) {
    const MarginalIntegrator integ(MixtureMarginal{phi_s[j], gbar[j]});
    double guess = NAN;
    for (Eigen::Index t = 0; t < T; ++t) {
      const double y = Y(j, t);
      if (std::isnan(y)) continue;
      const GEVParams g = reg.at(j, t);
      if (!gev_in_support(y, g)) {
        out.log_jac(j, t) = -INFINITY;
        continue;
      }
      double r = 0.0;
      for (int k : W.active[j]) r += W.w(j, k) * (*p.S)(k, t);
      const CopulaPoint cp = copula_Y_to_X(y, g, integ, guess);
      guess = cp.x;
      const double z = x_to_z(cp.x, r, phi_s[j]);
      out.Z(j, t) = z;
      out.log_jac(j, t) = log_jacobian(y, cp.x, z, r, phi_s[j], g, cp.at.density);
    }
  });
  return out;
}

struct Kriging {
  Vector weights;
  double var = 1.0;
};

PredictiveResult score_sites(const Dataset& train, const SiteCovariates& target, const Matrix& Yh,
                             const ModelSpec& model, const ChainOutput& chain, int max_draws) {
  train.validate();
  model.validate();
  require(Yh.cols() == train.replicates(), ErrorKind::validation, "holdout replicates do not match training data");
  require(static_cast<Eigen::Index>(target.sites.size()) == Yh.rows(), ErrorKind::validation,
          "holdout sites do not match holdout rows");
  const std::vector<std::size_t> recs = pick_records(chain, max_draws);
  const auto Dtr = train.sites(), H = Yh.rows(), T = train.replicates();

  Sites all = train.site_points();
  all.insert(all.end(), target.sites.begin(), target.sites.end());
  const Matrix rho_smoother = gaussian_smoother(all, model.range_knots(), model.kernel.bandwidth_rho);
  // Each target's conditioning set per replicate, minus training sites on top of it.
  std::vector<std::vector<int>> coincident(static_cast<std::size_t>(H));
  for (Eigen::Index h = 0; h < H; ++h)
    for (Eigen::Index j = 0; j < Dtr; ++j)
      if (distance(target.sites[h], train.site_points()[j]) < 1e-9) coincident[h].push_back(static_cast<int>(j));

  PredictiveResult res;
  res.loglik = Matrix::Zero(H, static_cast<Eigen::Index>(recs.size()));
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t d = 0; d < recs.size(); ++d) {
    const DrawParams p = draw_params(chain, recs[d], model, chain.final_state);
    const Transformed tr = transform_sites(train.covariates, train.Y, train.time, model, p);
    const Transformed th = transform_sites(target, Yh, train.time, model, p);
    const Matrix C = nonstationary_matern(all, rho_smoother * p.rho, model.nu);

    tbb::parallel_for(Eigen::Index(0), H, [&](Eigen::Index h) {
      std::map<std::vector<int>, Kriging> cache;
      double ll = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) {
        if (std::isnan(Yh(h, t))) continue;
        if (!std::isfinite(th.log_jac(h, t))) {
          ll = -INFINITY;
          break;
        }
        std::vector<int> obs;
        for (Eigen::Index j = 0; j < Dtr; ++j)
          if (!std::isnan(train.Y(j, t)) &&
              std::find(coincident[h].begin(), coincident[h].end(), static_cast<int>(j)) == coincident[h].end())
            obs.push_back(static_cast<int>(j));
        auto it = cache.find(obs);
        if (it == cache.end()) {
          Kriging kr;
          kr.weights = Vector::Zero(static_cast<Eigen::Index>(obs.size()));
          if (!obs.empty()) {
            const CovarianceFactor f = factorize(C(obs, obs));
            Vector k(static_cast<Eigen::Index>(obs.size()));
            for (std::size_t a = 0; a < obs.size(); ++a) k[a] = C(obs[a], Dtr + h);
            const Vector v = f.lower.triangularView<Eigen::Lower>().solve(k);
            kr.weights = f.lower.transpose().triangularView<Eigen::Upper>().solve(v);
            kr.var = std::max(1.0 - v.squaredNorm(), 1e-12);
          }
          it = cache.emplace(obs, std::move(kr)).first;
        }
        double mean = 0.0;
        for (std::size_t a = 0; a < obs.size(); ++a) mean += it->second.weights[a] * tr.Z(obs[a], t);
        if (!std::isfinite(mean)) {
          ll = -INFINITY;
          break;
        }
        const double r = th.Z(h, t) - mean;
        ll += -half_log_2pi - 0.5 * std::log(it->second.var) - 0.5 * r * r / it->second.var + th.log_jac(h, t);
      }
      res.loglik(h, static_cast<Eigen::Index>(d)) = ll;
    });
    res.draw_iterations.push_back(chain.iteration[recs[d]]);
  }
  return res;
}

}  // namespace

PredictiveResult predictive_loglik(const Dataset& train, const HoldoutData& hold, const ModelSpec& model,
                                   const ChainOutput& chain, int max_draws) {
  return score_sites(train, hold.covariates, hold.Y, model, chain, max_draws);
}

PredictiveResult insample_loglik(const Dataset& train, const ModelSpec& model, const ChainOutput& chain,
                                 int max_draws) {
  return score_sites(train, train.covariates, train.Y, model, chain, max_draws);
}

}  // namespace scalemix
