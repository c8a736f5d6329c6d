#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mvherit/ingest.hpp"
#include "mvherit/matstats.hpp"
#include "mvherit/rng.hpp"

namespace mvherit {

// Effect-size prior implied by the mixed model: per draw a trait covariance
// Sigma_beta is the inverse of a Wishart(V, nu) draw (the same convention as
// the sampler's covariance priors), then SNP effect columns are iid
// N_d(0, sigma2_beta * Sigma_beta).
struct EffectSizePriorSpec {
  int d;
  WishartPrior wishart;
  double sigma2_beta = 1.0;
  int p = 1;  // SNP columns per draw
};

struct EffectPriorSample {
  std::vector<Eigen::MatrixXd> draws;  // one d-by-p matrix per draw
  // pooled marginal histogram on [-5, 5], bin width 0.01, with the first and
  // last bins catching overflow beyond the range
  std::vector<double> bin_centers;
  std::vector<double> density;
  long n_effects = 0;
  double mean = 0.0;
  double variance = 0.0;
  double kurtosis = 0.0;  // fourth central moment over squared variance; 3 is Gaussian
};

EffectPriorSample sample_effect_prior(const EffectSizePriorSpec& spec, long n_draws, Rng& rng);

struct RidgeCheck {
  double max_dev = 0.0;      // largest |MC - analytic| covariance deviation
  double mc_se = 0.0;        // Monte Carlo SE at that entry
  double worst_ratio = 0.0;  // max |deviation| / SE over entries
  bool pass = false;         // every entry within 5 MC-SE
};

// Monte Carlo check that genetic values G = beta_z Z, with effect columns
// iid N_d(0, Sigma_beta), have vec-covariance Z^T Z (x) Sigma_beta, the
// ridge form of the mixed model's K (x) Sigma with Sigma = p * Sigma_beta.
RidgeCheck verify_ridge_equivalence(const GenotypeMatrix& z, const SpdMatrix& sigma_beta,
                                    long n_draws, Rng& rng);

}  // namespace mvherit
