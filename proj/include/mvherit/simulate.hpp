#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mvherit/ingest.hpp"
#include "mvherit/kinship.hpp"
#include "mvherit/matstats.hpp"
#include "mvherit/rng.hpp"

namespace mvherit {

// Unstandardized biallelic dosages: per SNP a frequency f ~ U(maf_low, maf_high),
// then counts Binomial(2, f). Monomorphic SNPs are redrawn.
GenotypeMatrix simulate_genotypes(int n_samples, int n_snps, double maf_low, double maf_high,
                                  Rng& rng);

// Phenotypes from the generative model: Y = beta X + eta + eps with
// eta ~ MN(0, K, sigma_g) drawn through the kinship eigenstructure and
// eps ~ MN(0, I, sigma_e). Pass a 0-row beta/x pair for a mean-zero model.
PhenotypeMatrix simulate_phenotypes(const SpectralKinship& sk, const SpdMatrix& sigma_g,
                                    const SpdMatrix& sigma_e, const Eigen::MatrixXd& beta,
                                    const Eigen::MatrixXd& x, Rng& rng);

// Masks an exact count round(fraction * n) of entries per trait, chosen
// uniformly without replacement; masked values become NaN with the missing
// flag set. One fraction per trait, each in [0, 1).
PhenotypeMatrix mask_at_random(const PhenotypeMatrix& y, const std::vector<double>& fractions,
                               Rng& rng);

struct TraitCovariances {
  SpdMatrix sigma_g;
  SpdMatrix sigma_e;
};

// Unit total variance per trait: sigma_g has h2 on the diagonal and
// rg * sqrt(h2_i h2_j) off it, sigma_e is diag(1 - h2).
TraitCovariances covariances_from_h2(const std::vector<double>& h2, double rg);

}  // namespace mvherit
