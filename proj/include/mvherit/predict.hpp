#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mvherit/gibbs.hpp"
#include "mvherit/ingest.hpp"
#include "mvherit/kinship.hpp"
#include "mvherit/matstats.hpp"

namespace mvherit {

// Point-estimate model for conditional prediction. Under the model,
// vec(Y) ~ N(vec(mean), H) with H = K (x) Sigma_g + I_n (x) Sigma_e,
// and missing entries are predicted by their conditional mean given the
// observed ones.
struct BlupModel {
  Eigen::MatrixXd beta;  // d-by-k
  SpdMatrix sigma_g;
  SpdMatrix sigma_e;
  SpectralKinship sk;
  Eigen::MatrixXd mean;  // d-by-n, beta * x

  int d() const { return static_cast<int>(beta.rows()); }
  int n() const { return sk.n(); }
};

BlupModel make_blup_model(const Eigen::MatrixXd& beta, const SpdMatrix& sigma_g,
                          const SpdMatrix& sigma_e, const SpectralKinship& sk,
                          const Eigen::MatrixXd& x);

struct PosteriorMeans {
  Eigen::MatrixXd beta;
  Eigen::MatrixXd sigma_g;
  Eigen::MatrixXd sigma_e;
};

// Elementwise means over all kept draws from all chains.
PosteriorMeans posterior_mean_estimates(const PosteriorDraws& draws);

// Solver choice. kAuto assembles the dense observed-block system up to
// nd <= 20000, uses the eigendecomposition shortcut when whole individuals
// are missing, and otherwise falls back to matrix-free conjugate gradients.
enum class BlupPath { kAuto, kDense, kStructured, kIterative };

// Returns a d-by-n matrix equal to y.values at observed entries and to the
// conditional mean at masked entries. An empty mask returns y.values.
Eigen::MatrixXd blup_predict(const BlupModel& model, const PhenotypeMatrix& y,
                             BlupPath path = BlupPath::kAuto);

// blup_predict applied in place: masked entries filled, the missing mask
// cleared, and the imputed mask set to record which entries were filled.
PhenotypeMatrix impute_phenotypes(const BlupModel& model, const PhenotypeMatrix& y,
                                  BlupPath path = BlupPath::kAuto);

struct TraitMetrics {
  Eigen::VectorXd rmse;            // per trait
  Eigen::VectorXd corr;            // per trait, NaN when undefined
  std::vector<bool> corr_defined;  // false when a side has zero variance
};

TraitMetrics rmse_and_corr(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred);

enum class CvEstimator { kBayes, kReml };
enum class CvImpute { kDrop, kBlup };

struct CvOptions {
  int folds = 5;
  CvEstimator estimator = CvEstimator::kBayes;
  CvImpute impute = CvImpute::kDrop;
  std::uint64_t seed = 1;
  GibbsConfig gibbs;  // sampler knobs for the Bayes estimator
  int threads = 1;    // concurrent folds
};

struct CvReport {
  Eigen::VectorXd rmse;            // per trait, pooled over folds
  Eigen::VectorXd corr;            // per trait, pooled over folds
  std::vector<bool> corr_defined;
  std::vector<int> fold_of;        // per sample, -1 when excluded
  std::vector<int> n_train;        // per fold
  std::vector<int> n_test;         // per fold
};

// k-fold cross-validation over individuals. Incomplete individuals are
// either dropped entirely (kDrop) or imputed once from a complete-case fit
// (kBlup) before folding; folds are stratified by missingness status.
// Metrics are evaluated only at entries that were observed in the input.
CvReport cross_validate(const PhenotypeMatrix& y, const Eigen::MatrixXd& x,
                        const SpectralKinship& sk, const CvOptions& opts);

}  // namespace mvherit
