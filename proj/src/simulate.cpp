#include "mvherit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mvherit/errors.hpp"

namespace mvherit {

GenotypeMatrix simulate_genotypes(int n_samples, int n_snps, double maf_low, double maf_high,
                                  Rng& rng) {
  if (n_samples < 1 || n_snps < 1) throw EmptyInput("genotype simulation needs n >= 1, p >= 1");
  if (!(maf_low > 0.0) || !(maf_high <= 0.5) || !(maf_low <= maf_high)) {
    throw InvalidMaf("minor allele frequency range must satisfy 0 < low <= high <= 0.5");
  }

  GenotypeMatrix g;
  g.values.resize(n_snps, n_samples);
  g.missing_mask = BoolMatrix::Constant(n_snps, n_samples, false);
  g.snp_ids.reserve(static_cast<std::size_t>(n_snps));
  g.sample_ids.reserve(static_cast<std::size_t>(n_samples));
  for (int j = 0; j < n_samples; ++j) g.sample_ids.push_back("s" + std::to_string(j + 1));

  constexpr int kMaxAttempts = 100000;
  for (int i = 0; i < n_snps; ++i) {
    g.snp_ids.push_back("snp" + std::to_string(i + 1));
    int attempts = 0;
    while (true) {
      if (++attempts > kMaxAttempts) {
        throw ValidationError("could not draw a polymorphic SNP; widen the frequency range or add samples");
      }
      const double f = rng.uniform_range(maf_low, maf_high);
      for (int j = 0; j < n_samples; ++j) {
        g.values(i, j) = static_cast<double>(rng.binomial(2, f));
      }
      const double lo = g.values.row(i).minCoeff();
      const double hi = g.values.row(i).maxCoeff();
      if (hi > lo) break;  // polymorphic
    }
  }
  return g;
}

PhenotypeMatrix simulate_phenotypes(const SpectralKinship& sk, const SpdMatrix& sigma_g,
                                    const SpdMatrix& sigma_e, const Eigen::MatrixXd& beta,
                                    const Eigen::MatrixXd& x, Rng& rng) {
  const int n = static_cast<int>(sk.eigvals.size());
  const int d = sigma_g.dim();
  if (sigma_e.dim() != d) throw DimError("trait covariances disagree on dimension");
  if (beta.rows() != x.rows() && !(beta.size() == 0 && x.size() == 0)) {
    // beta is d-by-k, x is k-by-n
    throw DimError("coefficient and covariate shapes are incompatible");
  }
  if (beta.size() > 0) {
    if (beta.rows() != d) throw DimError("coefficient rows must match trait count");
    if (beta.cols() != x.rows()) throw DimError("coefficient columns must match covariate rows");
    if (x.cols() != n) throw DimError("covariate columns must match sample count");
  }

  Eigen::MatrixXd noise(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) noise(i, j) = rng.normal();
  const Eigen::VectorXd root = sk.eigvals.array().max(0.0).sqrt();
  Eigen::MatrixXd eta = (sigma_g.chol() * noise * root.asDiagonal()) * sk.eigvecs.transpose();

  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) noise(i, j) = rng.normal();
  Eigen::MatrixXd eps = sigma_e.chol() * noise;

  PhenotypeMatrix y;
  y.values = eta + eps;
  if (beta.size() > 0) y.values += beta * x;
  y.sample_ids = sk.sample_ids;
  if (y.sample_ids.empty()) {
    for (int j = 0; j < n; ++j) y.sample_ids.push_back("s" + std::to_string(j + 1));
  }
  for (int i = 0; i < d; ++i) y.trait_ids.push_back("t" + std::to_string(i + 1));
  y.missing_mask = BoolMatrix::Constant(d, n, false);
  y.imputed_mask = BoolMatrix::Constant(d, n, false);
  return y;
}

PhenotypeMatrix mask_at_random(const PhenotypeMatrix& y, const std::vector<double>& fractions,
                               Rng& rng) {
  const int d = static_cast<int>(y.values.rows());
  const int n = static_cast<int>(y.values.cols());
  if (static_cast<int>(fractions.size()) != d) {
    throw DimError("need one masking fraction per trait");
  }
  for (double f : fractions) {
    if (!(f >= 0.0) || !(f < 1.0)) throw InvalidFraction("masking fractions must lie in [0, 1)");
  }

  PhenotypeMatrix out = y;
  if (out.missing_mask.size() == 0) {
    out.missing_mask = BoolMatrix::Constant(d, n, false);
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < d; ++i) {
    const long count = std::llround(fractions[static_cast<std::size_t>(i)] * n);
    for (int j = 0; j < n; ++j) idx[static_cast<std::size_t>(j)] = j;
    // partial Fisher-Yates: the first `count` slots become the masked columns
    for (long k = 0; k < count; ++k) {
      const long swap = rng.uniform_int(k, n - 1);
      std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(swap)]);
    }
    for (long k = 0; k < count; ++k) {
      const int j = idx[static_cast<std::size_t>(k)];
      out.values(i, j) = std::numeric_limits<double>::quiet_NaN();
      out.missing_mask(i, j) = true;
    }
  }
  return out;
}

TraitCovariances covariances_from_h2(const std::vector<double>& h2, double rg) {
  const int d = static_cast<int>(h2.size());
  if (d < 1) throw EmptyInput("need at least one heritability");
  for (double h : h2) {
    if (!(h > 0.0) || !(h < 1.0)) throw ValidationError("heritabilities must lie in (0, 1)");
  }
  if (!(rg > -1.0) || !(rg < 1.0)) throw ValidationError("genetic correlation must lie in (-1, 1)");

  Eigen::MatrixXd sg(d, d);
  Eigen::MatrixXd se = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    sg(i, i) = h2[static_cast<std::size_t>(i)];
    se(i, i) = 1.0 - h2[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < d; ++j) {
      const double c = rg * std::sqrt(h2[static_cast<std::size_t>(i)] * h2[static_cast<std::size_t>(j)]);
      sg(i, j) = c;
      sg(j, i) = c;
    }
  }
  return TraitCovariances{SpdMatrix(sg), SpdMatrix(se)};
}

}  // namespace mvherit
