#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numbers>

#include <tbb/parallel_for.h>

#include "scalemix/error.hpp"
#include "scalemix/inference.hpp"
#include "scalemix/simulator.hpp"

namespace scalemix {

namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }
double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

bool metropolis(double log_ratio, Rng& rng) {
  const double u = uniform(rng);
  return std::isfinite(log_ratio) ? std::log(u) < log_ratio : log_ratio > 0.0;
}

}  // namespace

double log_jacobian_z(double x, double r, double phi, double& z) {
  const double lr = std::log(r);
  const double w = x * std::exp(-phi * lr);
  z = link_g_inverse(w);
  return 0.5 * z * z + half_log_2pi - 2.0 * std::log1p(w) - phi * lr;
}

Sampler::Sampler(Dataset data, ModelSpec model, PriorSpec prior, ChainConfig config, ModelState init)
    : data_(std::move(data)), model_(std::move(model)), prior_(prior), config_(std::move(config)), state_(std::move(init)) {
  data_.validate();
  model_.validate();
  config_.validate();
  D_ = data_.sites();
  T_ = data_.replicates();
  K_ = static_cast<int>(model_.knots.size());
  Kr_ = static_cast<int>(model_.range_knots().size());
  require(state_.S.rows() == K_ && state_.S.cols() == T_, ErrorKind::validation, "initial S has the wrong shape");
  require(state_.phi.size() == K_, ErrorKind::validation, "initial phi has the wrong length");
  require(state_.rho.size() == Kr_, ErrorKind::validation, "initial rho has the wrong length");
  for (Eigen::Index k = 0; k < K_; ++k)
    require(state_.phi[k] > 0.0 && state_.phi[k] < 1.0, ErrorKind::validation, "initial phi outside (0, 1)");
  for (Eigen::Index k = 0; k < Kr_; ++k) require(state_.rho[k] > 0.0, ErrorKind::validation, "initial rho not positive");
  require((state_.S.array() > 0.0).all(), ErrorKind::validation, "initial S not positive");

  build_fixed();
  for (Block b : all_blocks)
    require(state_.block(b).size() == (b == Block::mu0        ? reg_.mu0_design.cols()
                                        : b == Block::mu1     ? reg_.mu1_design.cols()
                                        : b == Block::logsigma ? reg_.logsigma_design.cols()
                                                               : reg_.xi_design.cols()),
            ErrorKind::validation, std::string("initial ") + block_name(b) + " coefficients have the wrong length");

  for (int k = 0; k < K_; ++k) slots_.push_back({"S_" + std::to_string(k), config_.initial_log_scale, config_.target_scalar});
  for (int k = 0; k < K_; ++k) slots_.push_back({"phi_" + std::to_string(k), config_.initial_log_scale, config_.target_scalar});
  for (int k = 0; k < Kr_; ++k) slots_.push_back({"rho_" + std::to_string(k), config_.initial_log_scale, config_.target_scalar});
  for (Block b : all_blocks) {
    const double target = state_.block(b).size() > 1 ? config_.target_block : config_.target_scalar;
    slots_.push_back({block_name(b), std::log(0.05), target});
  }

  master_ = make_stream(config_.seed, 0xFFFFFFFF00000000ull);
  for (Eigen::Index t = 0; t < T_; ++t) streams_.push_back(make_stream(config_.seed, static_cast<std::uint64_t>(t)));

  initialise_caches();

  for (int k = 0; k < K_; ++k) out_.names.push_back("phi_" + std::to_string(k));
  for (int k = 0; k < Kr_; ++k) out_.names.push_back("rho_" + std::to_string(k));
  for (Block b : all_blocks)
    for (Eigen::Index i = 0; i < state_.block(b).size(); ++i)
      out_.names.push_back(std::string(block_name(b)) + "_" + std::to_string(i));
  out_.seed = config_.seed;
  out_.config_digest = config_.config_digest;
  out_.burn_in = config_.burn_in;
}

void Sampler::build_fixed() {
  const Sites& sites = data_.site_points();
  weights_ = wendland_weights(sites, model_.knots, model_.kernel);
  knot_sites_.assign(static_cast<std::size_t>(K_), {});
  for (Eigen::Index j = 0; j < D_; ++j)
    for (int k : weights_.active[j]) knot_sites_[k].push_back(static_cast<int>(j));
  phi_smoother_ = gaussian_smoother(sites, model_.knots, model_.kernel.bandwidth_phi);
  rho_smoother_ = gaussian_smoother(sites, model_.range_knots(), model_.kernel.bandwidth_rho);
  gbar_ = scalemix::bar_gamma_surface(weights_, model_.gamma);
  reg_ = MarginalRegression::from_spec(model_.design, data_.covariates, data_.time);

  std::map<std::vector<int>, int> seen;
  pattern_of_.resize(static_cast<std::size_t>(T_));
  for (Eigen::Index t = 0; t < T_; ++t) {
    std::vector<int> idx;
    for (Eigen::Index j = 0; j < D_; ++j)
      if (data_.observed(j, t)) idx.push_back(static_cast<int>(j));
    auto it = seen.find(idx);
    if (it == seen.end()) {
      it = seen.emplace(idx, static_cast<int>(pattern_idx_.size())).first;
      pattern_idx_.push_back(idx);
    }
    pattern_of_[t] = it->second;
  }
}

void Sampler::set_margin_surfaces(const std::array<Vector, 4>& coef, Matrix& mu, Vector& sigma, Vector& xi) const {
  const Vector m0 = reg_.mu0_design * coef[0];
  mu.resize(D_, T_);
  for (Eigen::Index t = 0; t < T_; ++t) mu.col(t) = m0;
  if (reg_.mu1_design.cols() > 0) {
    const Vector m1 = reg_.mu1_design * coef[1];
    for (Eigen::Index t = 0; t < T_; ++t) mu.col(t) += m1 * reg_.time[t];
  }
  sigma = (reg_.logsigma_design * coef[2]).array().exp();
  xi = reg_.xi_design * coef[3];
}

std::vector<MarginalIntegrator> Sampler::make_integrators(const Vector& phi_s) const {
  std::vector<MarginalIntegrator> v(static_cast<std::size_t>(D_));
  tbb::parallel_for(Eigen::Index(0), D_, [&](Eigen::Index j) { v[j] = MarginalIntegrator(MixtureMarginal{phi_s[j], gbar_[j]}); });
  return v;
}

std::vector<Sampler::Pattern> Sampler::make_patterns(const Vector& rho_s) const {
  const Matrix full = nonstationary_matern(data_.site_points(), rho_s, model_.nu);
  std::vector<Pattern> out(pattern_idx_.size());
  for (std::size_t p = 0; p < pattern_idx_.size(); ++p) {
    out[p].idx = pattern_idx_[p];
    if (out[p].idx.empty()) continue;
    out[p].factor = factorize(full(out[p].idx, out[p].idx));
  }
  return out;
}

double Sampler::site_R(Eigen::Index j, Eigen::Index t, const Matrix& S) const {
  double r = 0.0;
  for (int k : weights_.active[j]) r += weights_.w(j, k) * S(k, t);
  return r;
}

double Sampler::replicate_ll(const Pattern& p, const double* z, const double* jz, const double* logfy,
                             const double* logfx) const {
  const auto n = static_cast<Eigen::Index>(p.idx.size());
  if (n == 0) return 0.0;
  Vector zo(n);
  double jac = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const int j = p.idx[a];
    zo[a] = z[j];
    jac += jz[j] + logfy[j] - logfx[j];
  }
  return gaussian_log_density(p.factor, zo) + jac;
}

void Sampler::transform_replicate(Eigen::Index t, const std::vector<MarginalIntegrator>& integ, const Vector& phi_s,
                                  const Matrix& mu, const Vector& sigma, const Vector& xi, bool new_margins, Matrix& X,
                                  Matrix& logfx, Matrix& logfy, Matrix& Z, Matrix& jz) const {
  for (int j : pattern_idx_[pattern_of_[t]]) {
    const GEVParams g = gev_at(mu, sigma, xi, j, t);
    const double y = data_.Y(j, t);
    if (new_margins) {
      logfy(j, t) = gev_logpdf(y, g);
      if (!std::isfinite(logfy(j, t))) throw Error(ErrorKind::domain, "observation outside GEV support");
    }
    const CopulaPoint cp = copula_Y_to_X(y, g, integ[j], X(j, t));
    if (!(cp.at.density > 0.0)) throw Error(ErrorKind::numeric, "zero marginal density");
    X(j, t) = cp.x;
    logfx(j, t) = std::log(cp.at.density);
    double z;
    jz(j, t) = log_jacobian_z(cp.x, R_(j, t), phi_s[j], z);
    Z(j, t) = z;
  }
}

void Sampler::initialise_caches() {
  phi_s_ = phi_smoother_ * state_.phi;
  rho_s_ = rho_smoother_ * state_.rho;
  set_margin_surfaces(state_.coef, mu_, sigma_, xi_s_);
  R_.resize(D_, T_);
  for (Eigen::Index t = 0; t < T_; ++t)
    for (Eigen::Index j = 0; j < D_; ++j) R_(j, t) = site_R(j, t, state_.S);
  X_ = Matrix::Constant(D_, T_, NAN);
  Z_ = X_;
  logfx_ = X_;
  logfy_ = X_;
  jz_ = X_;
  ll_ = Vector::Zero(T_);
  if (config_.flat_likelihood) return;
  integ_ = make_integrators(phi_s_);
  patterns_ = make_patterns(rho_s_);
  for (Eigen::Index t = 0; t < T_; ++t)
    for (int j : pattern_idx_[pattern_of_[t]]) {
      const GEVParams g = gev_at(mu_, sigma_, xi_s_, j, t);
      if (!gev_in_support(data_.Y(j, t), g))
        throw Error(ErrorKind::validation, "initial margins exclude the observation at site " + std::to_string(j) +
                                               ", replicate " + std::to_string(t));
    }
  tbb::parallel_for(Eigen::Index(0), T_, [&](Eigen::Index t) {
    transform_replicate(t, integ_, phi_s_, mu_, sigma_, xi_s_, true, X_, logfx_, logfy_, Z_, jz_);
    ll_[t] = replicate_ll(patterns_[pattern_of_[t]], Z_.col(t).data(), jz_.col(t).data(), logfy_.col(t).data(),
                          logfx_.col(t).data());
  });
}

double Sampler::log_likelihood() const {
  double s = 0.0;
  for (Eigen::Index t = 0; t < T_; ++t) s += ll_[t];
  return s;
}

double Sampler::log_prior() const {
  double s = 0.0;
  for (Eigen::Index k = 0; k < K_; ++k) s += prior_.log_phi(state_.phi[k]);
  for (Eigen::Index k = 0; k < Kr_; ++k) s += prior_.log_rho(state_.rho[k]);
  for (Eigen::Index t = 0; t < T_; ++t)
    for (Eigen::Index k = 0; k < K_; ++k) s += prior_.log_S(state_.S(k, t));
  for (Block b : all_blocks)
    for (Eigen::Index i = 0; i < state_.block(b).size(); ++i) s += prior_.log_coef(state_.block(b)[i]);
  return s;
}

double Sampler::recompute_log_likelihood_replicate(Eigen::Index t) const {
  if (config_.flat_likelihood) return 0.0;
  const Vector phi_s = phi_smoother_ * state_.phi;
  const Vector rho_s = rho_smoother_ * state_.rho;
  Matrix mu;
  Vector sigma, xi;
  set_margin_surfaces(state_.coef, mu, sigma, xi);
  const auto& idx = pattern_idx_[pattern_of_[t]];
  if (idx.empty()) return 0.0;
  const Matrix full = nonstationary_matern(data_.site_points(), rho_s, model_.nu);
  const CovarianceFactor f = factorize(full(idx, idx));
  Vector zo(static_cast<Eigen::Index>(idx.size()));
  double jac = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const int j = idx[a];
    const GEVParams g{mu(j, t), sigma[j], xi[j]};
    const double y = data_.Y(j, t);
    const MarginalIntegrator integ(MixtureMarginal{phi_s[j], gbar_[j]});
    const CopulaPoint cp = copula_Y_to_X(y, g, integ);
    double r = 0.0;
    for (Eigen::Index k = 0; k < K_; ++k) r += weights_.w(j, k) * state_.S(k, t);
    double z;
    const double jzv = log_jacobian_z(cp.x, r, phi_s[j], z);
    zo[static_cast<Eigen::Index>(a)] = z;
    jac += jzv + gev_logpdf(y, g) - std::log(cp.at.density);
  }
  return gaussian_log_density(f, zo) + jac;
}

double Sampler::recompute_log_posterior() const {
  double s = 0.0;
  for (Eigen::Index t = 0; t < T_; ++t) s += recompute_log_likelihood_replicate(t);
  return s + log_prior();
}

bool Sampler::update_S(int k, Eigen::Index t, Rng& rng, bool* invalid) {
  const double eps = std_normal(rng);
  const double s_old = state_.S(k, t);
  const double s_new = s_old * std::exp(std::exp(slots_[slot_S(k)].log_scale) * eps);
  if (invalid) *invalid = false;
  if (!(s_new > 0.0) || !std::isfinite(s_new)) {
    uniform(rng);
    if (invalid) *invalid = true;
    return false;
  }
  const double lp = prior_.log_S(s_new) + std::log(s_new) - prior_.log_S(s_old) - std::log(s_old);
  if (config_.flat_likelihood) {
    if (!metropolis(lp, rng)) return false;
    state_.S(k, t) = s_new;
    for (int j : knot_sites_[k]) R_(j, t) = site_R(j, t, state_.S);
    return true;
  }
  Matrix S1 = state_.S.col(t);
  S1(k, 0) = s_new;
  Vector z = Z_.col(t), jz = jz_.col(t);
  std::vector<double> rnew(knot_sites_[k].size());
  bool bad = false;
  try {
    for (std::size_t a = 0; a < knot_sites_[k].size(); ++a) {
      const int j = knot_sites_[k][a];
      rnew[a] = site_R(j, 0, S1);
      if (data_.observed(j, t)) {
        double zz;
        jz[j] = log_jacobian_z(X_(j, t), rnew[a], phi_s_[j], zz);
        z[j] = zz;
      }
    }
  } catch (const Error&) {
    bad = true;
  }
  if (bad) {
    uniform(rng);
    if (invalid) *invalid = true;
    return false;
  }
  const double ll = replicate_ll(patterns_[pattern_of_[t]], z.data(), jz.data(), logfy_.col(t).data(), logfx_.col(t).data());
  if (!metropolis(ll - ll_[t] + lp, rng)) return false;
  state_.S(k, t) = s_new;
  for (std::size_t a = 0; a < knot_sites_[k].size(); ++a) R_(knot_sites_[k][a], t) = rnew[a];
  Z_.col(t) = z;
  jz_.col(t) = jz;
  ll_[t] = ll;
  return true;
}

bool Sampler::update_phi(int k, Rng& rng) {
  ProposalSlot& slot = slots_[slot_phi(k)];
  const double eps = std_normal(rng);
  const double old = state_.phi[k];
  const double nw = logistic(logit(old) + std::exp(slot.log_scale) * eps);
  if (!(nw > 0.0 && nw < 1.0)) {
    uniform(rng);
    slot.count(false, true);
    return false;
  }
  const double lp = prior_.log_phi(nw) - prior_.log_phi(old) + std::log(nw) + std::log1p(-nw) - std::log(old) -
                    std::log1p(-old);
  Vector phi = state_.phi;
  phi[k] = nw;
  const Vector phi_s = phi_smoother_ * phi;
  if (config_.flat_likelihood) {
    const bool acc = metropolis(lp, rng);
    if (acc) {
      state_.phi = phi;
      phi_s_ = phi_s;
    }
    slot.count(acc, false);
    return acc;
  }
  std::vector<MarginalIntegrator> integ;
  Matrix X = X_, lfx = logfx_, Z = Z_, jz = jz_;
  Vector ll(T_);
  bool bad = false;
  try {
    integ = make_integrators(phi_s);
    tbb::parallel_for(Eigen::Index(0), T_, [&](Eigen::Index t) {
      Matrix dummy;
      transform_replicate(t, integ, phi_s, mu_, sigma_, xi_s_, false, X, lfx, dummy, Z, jz);
      ll[t] = replicate_ll(patterns_[pattern_of_[t]], Z.col(t).data(), jz.col(t).data(), logfy_.col(t).data(),
                           lfx.col(t).data());
    });
  } catch (const Error&) {
    bad = true;
  }
  if (bad) {
    uniform(rng);
    slot.count(false, true);
    return false;
  }
  double dl = 0.0;
  for (Eigen::Index t = 0; t < T_; ++t) dl += ll[t] - ll_[t];
  const bool acc = metropolis(dl + lp, rng);
  if (acc) {
    state_.phi = phi;
    phi_s_ = phi_s;
    integ_ = std::move(integ);
    X_ = std::move(X);
    logfx_ = std::move(lfx);
    Z_ = std::move(Z);
    jz_ = std::move(jz);
    ll_ = ll;
  }
  slot.count(acc, false);
  return acc;
}

bool Sampler::update_rho(int k, Rng& rng) {
  ProposalSlot& slot = slots_[slot_rho(k)];
  const double eps = std_normal(rng);
  const double old = state_.rho[k];
  const double nw = old * std::exp(std::exp(slot.log_scale) * eps);
  if (!(nw > 0.0) || !std::isfinite(nw)) {
    uniform(rng);
    slot.count(false, true);
    return false;
  }
  const double lp = prior_.log_rho(nw) - prior_.log_rho(old) + std::log(nw) - std::log(old);
  Vector rho = state_.rho;
  rho[k] = nw;
  const Vector rho_s = rho_smoother_ * rho;
  if (config_.flat_likelihood) {
    const bool acc = metropolis(lp, rng);
    if (acc) {
      state_.rho = rho;
      rho_s_ = rho_s;
    }
    slot.count(acc, false);
    return acc;
  }
  std::vector<Pattern> pats;
  try {
    pats = make_patterns(rho_s);
  } catch (const Error&) {
    uniform(rng);
    slot.count(false, true);
    return false;
  }
  Vector ll(T_);
  tbb::parallel_for(Eigen::Index(0), T_, [&](Eigen::Index t) {
    ll[t] = replicate_ll(pats[pattern_of_[t]], Z_.col(t).data(), jz_.col(t).data(), logfy_.col(t).data(),
                         logfx_.col(t).data());
  });
  double dl = 0.0;
  for (Eigen::Index t = 0; t < T_; ++t) dl += ll[t] - ll_[t];
  const bool acc = metropolis(dl + lp, rng);
  if (acc) {
    state_.rho = rho;
    rho_s_ = rho_s;
    patterns_ = std::move(pats);
    ll_ = ll;
  }
  slot.count(acc, false);
  return acc;
}

bool Sampler::update_margin_block(Block b, Rng& rng) {
  const Eigen::Index p = state_.block(b).size();
  if (p == 0) return false;
  ProposalSlot& slot = slots_[slot_block(b)];
  std::array<Vector, 4> coef = state_.coef;
  const double scale = std::exp(slot.log_scale);
  for (Eigen::Index i = 0; i < p; ++i) coef[static_cast<int>(b)][i] += scale * std_normal(rng);
  double lp = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    lp += prior_.log_coef(coef[static_cast<int>(b)][i]) - prior_.log_coef(state_.block(b)[i]);
  if (config_.flat_likelihood) {
    const bool acc = metropolis(lp, rng);
    if (acc) state_.coef = coef;
    slot.count(acc, false);
    return acc;
  }
  Matrix mu;
  Vector sigma, xi;
  set_margin_surfaces(coef, mu, sigma, xi);
  bool bad = !(sigma.array() > 0.0).all() || !sigma.allFinite() || !xi.allFinite() || !mu.allFinite();
  for (Eigen::Index t = 0; t < T_ && !bad; ++t)
    for (int j : pattern_idx_[pattern_of_[t]])
      if (!gev_in_support(data_.Y(j, t), gev_at(mu, sigma, xi, j, t))) {
        bad = true;
        break;
      }
  Matrix X = X_, lfx = logfx_, lfy = logfy_, Z = Z_, jz = jz_;
  Vector ll(T_);
  if (!bad) {
    try {
      tbb::parallel_for(Eigen::Index(0), T_, [&](Eigen::Index t) {
        transform_replicate(t, integ_, phi_s_, mu, sigma, xi, true, X, lfx, lfy, Z, jz);
        ll[t] = replicate_ll(patterns_[pattern_of_[t]], Z.col(t).data(), jz.col(t).data(), lfy.col(t).data(),
                             lfx.col(t).data());
      });
    } catch (const Error&) {
      bad = true;
    }
  }
  if (bad) {
    uniform(rng);
    slot.count(false, true);
    return false;
  }
  double dl = 0.0;
  for (Eigen::Index t = 0; t < T_; ++t) dl += ll[t] - ll_[t];
  const bool acc = metropolis(dl + lp, rng);
  if (acc) {
    state_.coef = coef;
    mu_ = std::move(mu);
    sigma_ = std::move(sigma);
    xi_s_ = std::move(xi);
    X_ = std::move(X);
    logfx_ = std::move(lfx);
    logfy_ = std::move(lfy);
    Z_ = std::move(Z);
    jz_ = std::move(jz);
    ll_ = ll;
  }
  slot.count(acc, false);
  return acc;
}

void Sampler::sweep() {
  if (config_.update_S) {
    std::vector<char> acc(static_cast<std::size_t>(K_ * T_)), bad(acc.size());
    tbb::parallel_for(Eigen::Index(0), T_, [&](Eigen::Index t) {
      for (int k = 0; k < K_; ++k) {
        bool inv = false;
        acc[t * K_ + k] = update_S(k, t, streams_[t], &inv);
        bad[t * K_ + k] = inv;
      }
    });
    for (Eigen::Index t = 0; t < T_; ++t)
      for (int k = 0; k < K_; ++k) slots_[slot_S(k)].count(acc[t * K_ + k], bad[t * K_ + k]);
  }
  if (config_.update_phi)
    for (int k = 0; k < K_; ++k) update_phi(k, master_);
  if (config_.update_rho)
    for (int k = 0; k < Kr_; ++k) update_rho(k, master_);
  if (config_.update_margins && !model_.fix_margins)
    for (Block b : all_blocks) {
      if (b == Block::xi && !model_.update_xi) continue;
      update_margin_block(b, master_);
    }
  ++iteration_;
  if (iteration_ % config_.thin == 0) record();
  if (iteration_ <= config_.burn_in && iteration_ % config_.batch == 0) adapt_proposals(iteration_ / config_.batch);
}

void Sampler::adapt_proposals(long long batch_index) {
  const bool frozen_now = iteration_ > config_.burn_in;
  const double step = config_.adapt_c0 * std::pow(static_cast<double>(std::max(1LL, batch_index)), -config_.adapt_c1);
  for (auto& s : slots_) {
    if (!frozen_now && s.batch_attempts > 0) {
      const double rate = static_cast<double>(s.batch_accepts) / static_cast<double>(s.batch_attempts);
      s.log_scale += step * (rate - s.target);
    }
    s.batch_attempts = 0;
    s.batch_accepts = 0;
  }
}

void Sampler::record() {
  out_.iteration.push_back(iteration_);
  for (Eigen::Index k = 0; k < K_; ++k) out_.values.push_back(state_.phi[k]);
  for (Eigen::Index k = 0; k < Kr_; ++k) out_.values.push_back(state_.rho[k]);
  for (Block b : all_blocks)
    for (Eigen::Index i = 0; i < state_.block(b).size(); ++i) out_.values.push_back(state_.block(b)[i]);
  out_.log_post.push_back(log_posterior());
  if (config_.store_S) out_.S_draws.push_back(state_.S);
}

}  // namespace scalemix
