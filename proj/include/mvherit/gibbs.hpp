#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvherit/ingest.hpp"
#include "mvherit/kinship.hpp"
#include "mvherit/matstats.hpp"
#include "mvherit/rng.hpp"

namespace mvherit {

// Gibbs sampler for the spectrally transformed model: after rotating data
// by the kinship eigenvectors, individual j contributes
//   y~_j = beta x~_j + sqrt(r_j) zeta_j + eps_j,
//   zeta_j ~ N_d(0, Sigma_g), eps_j ~ N_d(0, Sigma_e),
// with Wishart priors on both precision matrices and a diffuse normal
// prior on the coefficients. All full conditionals are conjugate and
// derived in docs/gibbs_derivations.md.

enum class WishartScaleMode { kIdentity, kUserMatrix };

struct GibbsConfig {
  int n_chains = 3;
  long n_iter = 35000;
  long burn_in = 10000;
  int thin = 5;
  std::uint64_t seed = 1;
  WishartScaleMode wishart_scale_mode = WishartScaleMode::kIdentity;
  std::optional<Eigen::MatrixXd> wishart_scale;  // required for kUserMatrix
  double wishart_dof = 0.0;                      // <= 0 means use d
  double coef_prior_variance = 1e4;              // per-coefficient prior variance
  int threads = 0;                               // 0: one worker per chain

  long kept_per_chain() const { return (n_iter - burn_in) / thin; }
  double effective_dof(int d) const { return wishart_dof > 0.0 ? wishart_dof : d; }
  void validate(int d) const;
  WishartPrior make_prior(int d) const;
};

struct ModelState {
  Eigen::MatrixXd beta;  // d-by-k
  Eigen::MatrixXd zeta;  // d-by-n latent scaled random effects
  SpdMatrix sigma_g;     // genetic covariance
  SpdMatrix sigma_e;     // environmental covariance

  ModelState(Eigen::MatrixXd beta_in, Eigen::MatrixXd zeta_in, SpdMatrix g, SpdMatrix e)
      : beta(std::move(beta_in)), zeta(std::move(zeta_in)), sigma_g(std::move(g)),
        sigma_e(std::move(e)) {}
};

// Sigma_g = Sigma_e = half the sample trait variances on the diagonal;
// beta and zeta start at zero.
ModelState initial_state(const Eigen::MatrixXd& y_values, int k);

struct ChainDraws {
  std::uint64_t seed = 0;
  std::vector<long> iters;
  std::vector<Eigen::MatrixXd> sigma_g;
  std::vector<Eigen::MatrixXd> sigma_e;
  std::vector<Eigen::MatrixXd> beta;
};

// Parameter selector for summaries and trace export.
struct ParamSel {
  enum class Block { kSigmaG, kSigmaE, kBeta };
  Block block;
  int i = 0;  // row (0-based)
  int j = 0;  // column (0-based)

  std::string name() const;
};

std::vector<ParamSel> covariance_selectors(int d);
std::vector<ParamSel> all_selectors(int d, int k);

struct PosteriorDraws {
  GibbsConfig config;
  int d = 0;
  int k = 0;
  std::vector<ChainDraws> chains;

  long kept_per_chain() const { return chains.empty() ? 0 : static_cast<long>(chains[0].iters.size()); }
  long total_kept() const;
  // one series per chain for the selected parameter
  std::vector<std::vector<double>> series(const ParamSel& sel) const;
};

// (Y U, X U): rotates phenotypes and covariates into the eigenbasis.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> transform_data(const PhenotypeMatrix& y,
                                                           const Eigen::MatrixXd& x,
                                                           const SpectralKinship& sk);

// One conjugate update each; systematic scan order is
// zeta -> Sigma_g -> Sigma_e -> beta.
void update_zeta(ModelState& state, const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& x_tilde,
                 const Eigen::VectorXd& eigvals, Rng& rng);
void update_sigma_g(ModelState& state, const WishartPrior& prior, Rng& rng);
void update_sigma_e(ModelState& state, const Eigen::MatrixXd& y_tilde,
                    const Eigen::MatrixXd& x_tilde, const Eigen::VectorXd& eigvals,
                    const WishartPrior& prior, Rng& rng);
void update_beta(ModelState& state, const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& x_tilde,
                 const Eigen::VectorXd& eigvals, double coef_prior_variance, Rng& rng);

PosteriorDraws run_chains(const PhenotypeMatrix& y, const Eigen::MatrixXd& x,
                          const SpectralKinship& sk, const GibbsConfig& config);

// One CSV per chain (iter plus upper-triangle covariance entries and beta)
// and a draws_meta.json with the config echo and per-chain seeds.
void write_draws(const std::string& dir, const PosteriorDraws& draws);
PosteriorDraws read_draws(const std::string& dir);

}  // namespace mvherit
