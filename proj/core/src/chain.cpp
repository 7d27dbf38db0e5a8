#include <cmath>

#include "scalemix/checkpoint.hpp"
#include "scalemix/error.hpp"
#include "scalemix/inference.hpp"
#include "scalemix/text.hpp"

namespace scalemix {

const ChainOutput& Sampler::run() {
  while (iteration_ < config_.iterations) {
    sweep();
    if (config_.checkpoint_every > 0 && !config_.checkpoint_path.empty() && iteration_ % config_.checkpoint_every == 0)
      save_checkpoint(config_.checkpoint_path);
  }
  out_.final_state = state_;
  out_.ledger = slots_;
  return out_;
}

namespace {

Matrix as_column(const std::vector<double>& v) {
  return Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(v.size()), 1);
}

}  // namespace

void Sampler::save_checkpoint(const std::string& path) const {
  Archive a;
  a.put_text("digest", hex64(config_.config_digest));
  a.put_text("seed", std::to_string(config_.seed));
  a.put_text("iteration", std::to_string(iteration_));
  a.put("S", state_.S);
  a.put("phi", state_.phi);
  a.put("rho", state_.rho);
  for (Block b : all_blocks) a.put(std::string("coef.") + block_name(b), state_.block(b));
  a.put("R", R_);
  a.put("X", X_);
  a.put("Z", Z_);
  a.put("logfx", logfx_);
  a.put("logfy", logfy_);
  a.put("jz", jz_);
  a.put("ll", ll_);
  Matrix slots(static_cast<Eigen::Index>(slots_.size()), 6);
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& s = slots_[i];
    slots.row(static_cast<Eigen::Index>(i)) << s.log_scale, static_cast<double>(s.batch_attempts),
        static_cast<double>(s.batch_accepts), static_cast<double>(s.attempts), static_cast<double>(s.accepts),
        static_cast<double>(s.invalid);
  }
  a.put("slots", slots);
  a.put_text("rng.master", save_rng(master_));
  for (std::size_t t = 0; t < streams_.size(); ++t) a.put_text("rng." + std::to_string(t), save_rng(streams_[t]));
  std::vector<double> it(out_.iteration.begin(), out_.iteration.end());
  a.put("trace.iteration", as_column(it));
  a.put("trace.values", as_column(out_.values));
  a.put("trace.log_post", as_column(out_.log_post));
  a.put_text("trace.names", [&] {
    std::string s;
    for (const auto& n : out_.names) s += n + "\n";
    return s;
  }());
  a.put_scalar("trace.S_count", static_cast<double>(out_.S_draws.size()));
  for (std::size_t i = 0; i < out_.S_draws.size(); ++i) a.put("trace.S." + std::to_string(i), out_.S_draws[i]);
  a.save(path);
}

void Sampler::load_checkpoint(const std::string& path) {
  const Archive a = Archive::load(path);
  if (config_.config_digest != 0)
    require(a.text("digest") == hex64(config_.config_digest), ErrorKind::validation,
            "checkpoint was written under a different configuration");
  require(a.text("seed") == std::to_string(config_.seed), ErrorKind::validation, "checkpoint seed differs");
  const Matrix& S = a.matrix("S");
  require(S.rows() == K_ && S.cols() == T_, ErrorKind::validation, "checkpoint S has the wrong shape");
  state_.S = S;
  state_.phi = a.vector("phi");
  state_.rho = a.vector("rho");
  require(state_.phi.size() == K_ && state_.rho.size() == Kr_, ErrorKind::validation, "checkpoint knot counts differ");
  for (Block b : all_blocks) state_.block(b) = a.vector(std::string("coef.") + block_name(b));

  // Surfaces, integrators and factors are pure functions of the parameters.
  phi_s_ = phi_smoother_ * state_.phi;
  rho_s_ = rho_smoother_ * state_.rho;
  set_margin_surfaces(state_.coef, mu_, sigma_, xi_s_);
  if (!config_.flat_likelihood) {
    integ_ = make_integrators(phi_s_);
    patterns_ = make_patterns(rho_s_);
  }
  R_ = a.matrix("R");
  X_ = a.matrix("X");
  Z_ = a.matrix("Z");
  logfx_ = a.matrix("logfx");
  logfy_ = a.matrix("logfy");
  jz_ = a.matrix("jz");
  ll_ = a.vector("ll");

  const Matrix& slots = a.matrix("slots");
  require(slots.rows() == static_cast<Eigen::Index>(slots_.size()), ErrorKind::validation, "checkpoint slot count differs");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    auto r = slots.row(static_cast<Eigen::Index>(i));
    slots_[i].log_scale = r[0];
    slots_[i].batch_attempts = static_cast<long long>(r[1]);
    slots_[i].batch_accepts = static_cast<long long>(r[2]);
    slots_[i].attempts = static_cast<long long>(r[3]);
    slots_[i].accepts = static_cast<long long>(r[4]);
    slots_[i].invalid = static_cast<long long>(r[5]);
  }
  load_rng(master_, a.text("rng.master"));
  for (std::size_t t = 0; t < streams_.size(); ++t) load_rng(streams_[t], a.text("rng." + std::to_string(t)));
  iteration_ = parse_int(a.text("iteration"));

  const Vector it = a.vector("trace.iteration");
  out_.iteration.assign(it.data(), it.data() + it.size());
  const Vector vals = a.vector("trace.values");
  out_.values.assign(vals.data(), vals.data() + vals.size());
  const Vector lp = a.vector("trace.log_post");
  out_.log_post.assign(lp.data(), lp.data() + lp.size());
  std::string names;
  for (const auto& n : out_.names) names += n + "\n";
  require(names == a.text("trace.names"), ErrorKind::validation, "checkpoint trace columns differ");
  out_.S_draws.clear();
  const auto ns = static_cast<std::size_t>(a.scalar("trace.S_count"));
  for (std::size_t i = 0; i < ns; ++i) out_.S_draws.push_back(a.matrix("trace.S." + std::to_string(i)));
}

}  // namespace scalemix
