#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scalemix/gp.hpp"
#include "scalemix/kernels.hpp"
#include "scalemix/margins.hpp"
#include "scalemix/random.hpp"

namespace scalemix {

struct SimulatedDataset;

struct Dataset {
  SiteCovariates covariates;
  Matrix Y;  // D x T, NaN where missing
  Vector time;
  std::vector<std::string> station_ids;
  std::vector<int> years;

  Eigen::Index sites() const { return Y.rows(); }
  Eigen::Index replicates() const { return Y.cols(); }
  const Sites& site_points() const { return covariates.sites; }
  bool observed(Eigen::Index j, Eigen::Index t) const { return !std::isnan(Y(j, t)); }
  void validate() const;

  static Dataset from_simulation(const SimulatedDataset& sim);
};

struct PriorSpec {
  double phi_a = 5.0;
  double phi_b = 5.0;
  double rho_sd = 2.0;  // half-normal
  double levy_gamma = 0.5;
  double coef_sd = 100.0;

  double log_phi(double phi) const;
  double log_rho(double rho) const;
  double log_S(double s) const;
  double log_coef(double b) const;
};

struct ModelSpec {
  KnotGrid knots;
  KnotGrid rho_knots;  // empty means knots
  KernelConfig kernel;
  Vector gamma;
  double nu = 0.5;
  DesignSpec design;
  bool fix_margins = false;
  bool update_xi = true;

  const KnotGrid& range_knots() const { return rho_knots.knots.empty() ? knots : rho_knots; }
  void validate() const;
};

enum class Block { mu0 = 0, mu1 = 1, logsigma = 2, xi = 3 };
constexpr std::array<Block, 4> all_blocks{Block::mu0, Block::mu1, Block::logsigma, Block::xi};
const char* block_name(Block b);

struct ModelState {
  Matrix S;  // K x T
  Vector phi;
  Vector rho;
  std::array<Vector, 4> coef;  // indexed by Block

  Vector& block(Block b) { return coef[static_cast<int>(b)]; }
  const Vector& block(Block b) const { return coef[static_cast<int>(b)]; }
};

struct ChainConfig {
  long long iterations = 2000;
  long long burn_in = 1000;
  int thin = 1;
  int batch = 50;
  long long checkpoint_every = 0;
  std::string checkpoint_path;
  std::uint64_t seed = 1;
  std::uint64_t config_digest = 0;
  bool flat_likelihood = false;
  bool update_S = true;
  bool update_phi = true;
  bool update_rho = true;
  bool update_margins = true;
  bool store_S = false;
  double target_scalar = 0.41;
  double target_block = 0.234;
  double adapt_c0 = 1.0;
  double adapt_c1 = 0.8;
  double initial_log_scale = std::log(0.5);

  void validate() const;
};

// phi = 0.5, rho = 1, S = 1 and a pooled Gumbel moment fit for the margins.
ModelState default_initial_state(const Dataset& data, const ModelSpec& model);

struct ProposalSlot {
  std::string name;
  double log_scale = 0.0;
  double target = 0.41;
  long long batch_attempts = 0;
  long long batch_accepts = 0;
  long long attempts = 0;
  long long accepts = 0;
  long long invalid = 0;

  void count(bool accepted, bool bad);
};

struct ChainOutput {
  std::vector<std::string> names;
  std::vector<long long> iteration;
  std::vector<double> values;  // row-major, names.size() per record
  std::vector<double> log_post;
  std::vector<Matrix> S_draws;
  std::vector<ProposalSlot> ledger;
  ModelState final_state;
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  long long burn_in = 0;

  std::size_t records() const { return iteration.size(); }
  double at(std::size_t record, std::size_t column) const { return values[record * names.size() + column]; }
  int column(const std::string& name) const;
  // Post burn-in column.
  std::vector<double> draws(const std::string& name) const;
  void write_csv(const std::string& path) const;
  std::uint64_t hash() const;
};

double log_jacobian_z(double x, double r, double phi, double& z);

class Sampler {
 public:
  Sampler(Dataset data, ModelSpec model, PriorSpec prior, ChainConfig config, ModelState init);

  const Dataset& data() const { return data_; }
  const ModelSpec& model() const { return model_; }
  const ChainConfig& config() const { return config_; }
  ChainConfig& config() { return config_; }
  const ModelState& state() const { return state_; }
  long long iteration() const { return iteration_; }
  const ChainOutput& output() const { return out_; }

  const Vector& phi_surface() const { return phi_s_; }
  const Vector& rho_surface() const { return rho_s_; }
  const Vector& bar_gamma_surface() const { return gbar_; }
  const WeightMatrix& weights() const { return weights_; }
  const Matrix& X() const { return X_; }
  const Matrix& Z() const { return Z_; }
  const Matrix& R() const { return R_; }

  double log_likelihood_replicate(Eigen::Index t) const { return ll_[t]; }
  double log_likelihood() const;
  double log_prior() const;
  double log_posterior() const { return log_likelihood() + log_prior(); }
  // Everything rebuilt from the parameters alone.
  double recompute_log_posterior() const;
  double recompute_log_likelihood_replicate(Eigen::Index t) const;

  bool update_S(int k, Eigen::Index t, Rng& rng, bool* invalid = nullptr);
  bool update_phi(int k, Rng& rng);
  bool update_rho(int k, Rng& rng);
  bool update_margin_block(Block b, Rng& rng);
  void sweep();
  void adapt_proposals(long long batch_index);
  bool frozen() const { return iteration_ > config_.burn_in; }

  std::vector<ProposalSlot>& slots() { return slots_; }
  const std::vector<ProposalSlot>& slots() const { return slots_; }
  int slot_S(int k) const { return k; }
  int slot_phi(int k) const { return K_ + k; }
  int slot_rho(int k) const { return 2 * K_ + k; }
  int slot_block(Block b) const { return 2 * K_ + Kr_ + static_cast<int>(b); }

  // Runs until config().iterations, checkpointing on the way.
  const ChainOutput& run();
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  struct Pattern {
    std::vector<int> idx;
    CovarianceFactor factor;
  };

  void build_fixed();
  void set_margin_surfaces(const std::array<Vector, 4>& coef, Matrix& mu, Vector& sigma, Vector& xi) const;
  GEVParams gev_at(const Matrix& mu, const Vector& sigma, const Vector& xi, Eigen::Index j, Eigen::Index t) const {
    return GEVParams{mu(j, t), sigma[j], xi[j]};
  }
  std::vector<MarginalIntegrator> make_integrators(const Vector& phi_s) const;
  // Y -> X -> Z for the observed sites of replicate t; X holds the warm start on entry.
  void transform_replicate(Eigen::Index t, const std::vector<MarginalIntegrator>& integ, const Vector& phi_s,
                           const Matrix& mu, const Vector& sigma, const Vector& xi, bool new_margins, Matrix& X,
                           Matrix& logfx, Matrix& logfy, Matrix& Z, Matrix& jz) const;
  std::vector<Pattern> make_patterns(const Vector& rho_s) const;
  double replicate_ll(const Pattern& p, const double* z, const double* jz, const double* logfy,
                      const double* logfx) const;
  double site_R(Eigen::Index j, Eigen::Index t, const Matrix& S) const;
  void initialise_caches();
  void record();

  Dataset data_;
  ModelSpec model_;
  PriorSpec prior_;
  ChainConfig config_;
  ModelState state_;
  int K_ = 0, Kr_ = 0;
  Eigen::Index D_ = 0, T_ = 0;

  WeightMatrix weights_;
  std::vector<std::vector<int>> knot_sites_;
  Matrix phi_smoother_, rho_smoother_;
  Vector gbar_;
  MarginalRegression reg_;
  std::vector<int> pattern_of_;
  std::vector<std::vector<int>> pattern_idx_;

  Vector phi_s_, rho_s_;
  std::vector<MarginalIntegrator> integ_;
  std::vector<Pattern> patterns_;
  Matrix mu_;
  Vector sigma_, xi_s_;
  Matrix R_, X_, Z_, logfx_, logfy_, jz_;
  Vector ll_;

  std::vector<ProposalSlot> slots_;
  Rng master_;
  std::vector<Rng> streams_;
  long long iteration_ = 0;
  ChainOutput out_;
};

}  // namespace scalemix
