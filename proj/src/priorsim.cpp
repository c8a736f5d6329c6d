#include "mvherit/priorsim.hpp"

#include <cmath>
#include <cstddef>
#include <limits>

#include "mvherit/errors.hpp"

namespace mvherit {

namespace {

constexpr double kHistLo = -5.0;
constexpr double kHistHi = 5.0;
constexpr double kHistWidth = 0.01;
constexpr int kHistBins = 1000;  // interior bins; one overflow bin on each side

}  // namespace

EffectPriorSample sample_effect_prior(const EffectSizePriorSpec& spec, long n_draws, Rng& rng) {
  if (spec.d < 1) throw ValidationError("effect prior needs at least one trait");
  if (spec.p < 1) throw ValidationError("effect prior needs at least one SNP column");
  if (spec.sigma2_beta < 0.0) throw ValidationError("sigma2_beta must be non-negative");
  if (n_draws < 1) throw ValidationError("need at least one prior draw");
  if (spec.wishart.scale.dim() != spec.d) {
    throw DimError("Wishart scale dimension does not match trait count");
  }

  EffectPriorSample out;
  out.draws.reserve(static_cast<std::size_t>(n_draws));
  std::vector<long> counts(kHistBins + 2, 0);

  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  Eigen::MatrixXd noise(spec.d, spec.p);
  for (long it = 0; it < n_draws; ++it) {
    SpdMatrix sigma_beta = sample_inverse_wishart(spec.wishart, rng);
    Eigen::MatrixXd scale_chol = std::sqrt(spec.sigma2_beta) * sigma_beta.chol();
    for (int j = 0; j < spec.p; ++j)
      for (int i = 0; i < spec.d; ++i) noise(i, j) = rng.normal();
    Eigen::MatrixXd beta = scale_chol * noise;
    for (int j = 0; j < spec.p; ++j) {
      for (int i = 0; i < spec.d; ++i) {
        const double x = beta(i, j);
        s1 += x;
        s2 += x * x;
        s3 += x * x * x;
        s4 += x * x * x * x;
        int bin;
        if (x < kHistLo) {
          bin = 0;
        } else if (x >= kHistHi) {
          bin = kHistBins + 1;
        } else {
          bin = 1 + static_cast<int>(std::floor((x - kHistLo) / kHistWidth));
          if (bin > kHistBins) bin = kHistBins;
        }
        ++counts[static_cast<std::size_t>(bin)];
      }
    }
    out.draws.push_back(std::move(beta));
  }

  const double n = static_cast<double>(n_draws) * spec.d * spec.p;
  out.n_effects = static_cast<long>(n);
  const double m1 = s1 / n;
  const double m2 = s2 / n - m1 * m1;
  const double m3 = s3 / n - 3.0 * m1 * s2 / n + 2.0 * m1 * m1 * m1;
  const double m4 =
      s4 / n - 4.0 * m1 * s3 / n + 6.0 * m1 * m1 * s2 / n - 3.0 * m1 * m1 * m1 * m1;
  (void)m3;
  out.mean = m1;
  out.variance = m2;
  out.kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : std::numeric_limits<double>::quiet_NaN();

  out.bin_centers.resize(counts.size());
  out.density.resize(counts.size());
  out.bin_centers[0] = kHistLo - kHistWidth / 2.0;
  out.bin_centers[counts.size() - 1] = kHistHi + kHistWidth / 2.0;
  for (int b = 0; b < kHistBins; ++b) {
    out.bin_centers[static_cast<std::size_t>(b + 1)] = kHistLo + (b + 0.5) * kHistWidth;
  }
  for (std::size_t b = 0; b < counts.size(); ++b) {
    out.density[b] = static_cast<double>(counts[b]) / (n * kHistWidth);
  }
  return out;
}

RidgeCheck verify_ridge_equivalence(const GenotypeMatrix& z, const SpdMatrix& sigma_beta,
                                    long n_draws, Rng& rng) {
  const int p = static_cast<int>(z.values.rows());
  const int n = static_cast<int>(z.values.cols());
  const int d = sigma_beta.dim();
  if (p < 1 || n < 1) throw EmptyInput("ridge check needs a non-empty genotype matrix");
  if (n_draws < 2) throw ValidationError("ridge check needs at least two draws");
  if (z.has_missing() || !z.values.allFinite()) {
    throw MissingData("ridge check requires complete genotypes");
  }

  const Eigen::MatrixXd analytic = kron(z.values.transpose() * z.values, sigma_beta.mat());
  const long m = static_cast<long>(n) * d;

  // Known-zero-mean covariance estimate, with an elementwise second moment of
  // the products for the Monte Carlo SE.
  Eigen::MatrixXd sum_prod = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd sum_prod2 = Eigen::MatrixXd::Zero(m, m);
  const Eigen::MatrixXd chol = sigma_beta.chol();
  Eigen::MatrixXd noise(d, p);
  for (long it = 0; it < n_draws; ++it) {
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < d; ++i) noise(i, j) = rng.normal();
    Eigen::MatrixXd g = (chol * noise) * z.values;  // d-by-n genetic values
    Eigen::Map<const Eigen::VectorXd> v(g.data(), m);
    Eigen::MatrixXd prod = v * v.transpose();
    sum_prod += prod;
    sum_prod2 += prod.cwiseProduct(prod);
  }

  const double nd = static_cast<double>(n_draws);
  RidgeCheck out;
  out.pass = true;
  for (long a = 0; a < m; ++a) {
    for (long b = 0; b < m; ++b) {
      const double est = sum_prod(a, b) / nd;
      const double var = sum_prod2(a, b) / nd - est * est;
      const double se = std::sqrt(std::max(var, 0.0) / nd);
      const double dev = std::abs(est - analytic(a, b));
      if (dev > out.max_dev) {
        out.max_dev = dev;
        out.mc_se = se;
      }
      const double ratio = se > 0.0 ? dev / se : (dev > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      if (ratio > out.worst_ratio) out.worst_ratio = ratio;
      if (ratio > 5.0) out.pass = false;
    }
  }
  return out;
}

}  // namespace mvherit
