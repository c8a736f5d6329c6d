#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mvherit/errors.hpp"
#include "mvherit/matstats.hpp"
#include "mvherit/predict.hpp"
#include "mvherit/simulate.hpp"
#include "test_helpers.hpp"

using namespace mvherit;

namespace {

BlupModel random_model(int n, int p, Rng& rng, double rho_g = 0.3) {
  SpectralKinship sk = test_support::random_kinship(n, p, rng);
  Eigen::MatrixXd sg(2, 2), se(2, 2);
  sg << 0.7, rho_g, rho_g, 0.9;
  se << 0.4, -0.1, -0.1, 0.5;
  Eigen::MatrixXd beta(2, 1);
  beta << 0.3, -0.6;
  return make_blup_model(beta, SpdMatrix(sg), SpdMatrix(se), sk,
                         Eigen::MatrixXd::Ones(1, n));
}

// conditional mean of the masked coordinates of vec(Y) given the observed
// ones, computed densely from H = K (x) Sigma_g + I (x) Sigma_e
Eigen::MatrixXd dense_conditional_fill(const BlupModel& model, const PhenotypeMatrix& y) {
  const int d = model.d();
  const int n = model.n();
  const Eigen::MatrixXd h = kron(model.sk.k, model.sigma_g.mat()) +
                            kron(Eigen::MatrixXd::Identity(n, n), model.sigma_e.mat());
  std::vector<int> obs, mis;
  for (int j = 0; j < n; ++j)
    for (int t = 0; t < d; ++t) {
      const int v = j * d + t;  // column-major position in vec(Y)
      if (y.missing_mask(t, j)) mis.push_back(v);
      else obs.push_back(v);
    }
  Eigen::MatrixXd out = y.values;
  if (mis.empty()) return out;

  Eigen::MatrixXd h_oo(obs.size(), obs.size());
  Eigen::MatrixXd h_mo(mis.size(), obs.size());
  Eigen::VectorXd dev(obs.size());
  const Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(model.mean.data(), d * n);
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.values.data(), d * n);
  for (std::size_t a = 0; a < obs.size(); ++a) {
    dev(a) = yv(obs[a]) - mean(obs[a]);
    for (std::size_t b = 0; b < obs.size(); ++b) h_oo(a, b) = h(obs[a], obs[b]);
  }
  for (std::size_t a = 0; a < mis.size(); ++a)
    for (std::size_t b = 0; b < obs.size(); ++b) h_mo(a, b) = h(mis[a], obs[b]);
  const Eigen::VectorXd fill = h_mo * h_oo.ldlt().solve(dev);
  for (std::size_t a = 0; a < mis.size(); ++a) {
    const int t = mis[a] % d;
    const int j = mis[a] / d;
    out(t, j) = model.mean(t, j) + fill(a);
  }
  return out;
}

}  // namespace

TEST_CASE("an empty mask returns the observed values untouched") {
  Rng rng(61);
  BlupModel model = random_model(10, 60, rng);
  PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, 10, rng));
  CHECK(blup_predict(model, y) == y.values);
}

TEST_CASE("an unrelated individual with no observations gets the fixed-effect mean") {
  // kinship block-diagonal: sample 3 unrelated to everyone else
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(3, 3);
  k(0, 1) = k(1, 0) = 0.5;
  SpectralKinship sk = kinship_from_matrix(k, {});
  Eigen::MatrixXd sg(1, 1), se(1, 1), beta(1, 1);
  sg << 0.8;
  se << 0.2;
  beta << 1.7;
  BlupModel model = make_blup_model(beta, SpdMatrix(sg), SpdMatrix(se), sk,
                                    Eigen::MatrixXd::Ones(1, 3));
  Eigen::MatrixXd vals(1, 3);
  vals << 2.0, 2.5, 0.0;
  PhenotypeMatrix y = test_support::make_phenos(vals);
  y.missing_mask(0, 2) = true;
  const Eigen::MatrixXd filled = blup_predict(model, y);
  CHECK(filled(0, 2) == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(filled(0, 0) == 2.0);
}

TEST_CASE("with identity kinship a missing trait regresses on the observed one") {
  SpectralKinship sk = kinship_from_matrix(Eigen::MatrixXd::Identity(4, 4), {});
  Eigen::MatrixXd sg(2, 2), se(2, 2);
  sg << 0.6, 0.24, 0.24, 0.5;
  se << 0.4, 0.1, 0.1, 0.5;
  const Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(2, 1);
  BlupModel model = make_blup_model(beta, SpdMatrix(sg), SpdMatrix(se), sk,
                                    Eigen::MatrixXd::Zero(1, 4));
  Eigen::MatrixXd vals = Eigen::MatrixXd::Zero(2, 4);
  vals(0, 1) = 1.3;  // observed trait 1 of sample 2
  PhenotypeMatrix y = test_support::make_phenos(vals);
  y.missing_mask(1, 1) = true;
  const Eigen::MatrixXd filled = blup_predict(model, y);
  // total covariance Sigma_g + Sigma_e couples the two traits of a sample
  const Eigen::MatrixXd total = sg + se;
  CHECK(filled(1, 1) == doctest::Approx(total(1, 0) / total(0, 0) * 1.3).epsilon(1e-10));
}

TEST_CASE("the dense path reproduces the brute-force conditional mean") {
  Rng rng(62);
  BlupModel model = random_model(6, 40, rng);
  PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, 6, rng));
  y.missing_mask(0, 1) = true;
  y.missing_mask(1, 1) = true;
  y.missing_mask(1, 3) = true;
  y.missing_mask(0, 5) = true;
  const Eigen::MatrixXd expect = dense_conditional_fill(model, y);
  const Eigen::MatrixXd got = blup_predict(model, y, BlupPath::kDense);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-8);
  // observed entries pass through untouched
  CHECK(got(0, 0) == y.values(0, 0));
  CHECK(got(1, 5) == y.values(1, 5));
}

TEST_CASE("structured and iterative paths agree with the dense solve") {
  Rng rng(63);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 8 + static_cast<int>(rng.uniform_int(0, 42));
    BlupModel model = random_model(n, 3 * n, rng);
    PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, n, rng));
    // whole individuals missing: the structured shortcut applies
    for (int j = 0; j < n - 1; ++j)
      if (rng.uniform() < 0.2) y.missing_mask(0, j) = y.missing_mask(1, j) = true;
    const Eigen::MatrixXd dense = blup_predict(model, y, BlupPath::kDense);
    const Eigen::MatrixXd structured = blup_predict(model, y, BlupPath::kStructured);
    const Eigen::MatrixXd iterative = blup_predict(model, y, BlupPath::kIterative);
    const Eigen::MatrixXd expect = dense_conditional_fill(model, y);
    CHECK((dense - expect).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((structured - dense).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((iterative - dense).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("the structured path rejects partial missingness within an individual") {
  Rng rng(68);
  BlupModel model = random_model(6, 40, rng);
  PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, 6, rng));
  y.missing_mask(0, 2) = true;  // trait 2 of the same sample stays observed
  CHECK_THROWS_AS(blup_predict(model, y, BlupPath::kStructured), ValidationError);
  // per-entry patterns go through the dense and iterative paths
  const Eigen::MatrixXd dense = blup_predict(model, y, BlupPath::kDense);
  const Eigen::MatrixXd iterative = blup_predict(model, y, BlupPath::kIterative);
  CHECK((iterative - dense).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((dense - dense_conditional_fill(model, y)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("prediction commutes with relabeling the individuals") {
  Rng rng(64);
  const int n = 12;
  SpectralKinship sk = test_support::random_kinship(n, 80, rng);
  Eigen::MatrixXd sg(2, 2), se(2, 2), beta(2, 1);
  sg << 0.7, 0.2, 0.2, 0.9;
  se << 0.4, 0.0, 0.0, 0.5;
  beta << 0.1, -0.2;
  PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, n, rng));
  y.missing_mask(0, 2) = true;
  y.missing_mask(1, 7) = true;

  // permuted copy of the whole problem
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = (i * 5 + 3) % n;
  Eigen::MatrixXd kp(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) kp(i, j) = sk.k(perm[i], perm[j]);
  SpectralKinship skp = kinship_from_matrix(kp, {});
  PhenotypeMatrix yp = y;
  for (int j = 0; j < n; ++j) {
    yp.values.col(j) = y.values.col(perm[j]);
    yp.missing_mask.col(j) = y.missing_mask.col(perm[j]);
  }

  BlupModel m1 = make_blup_model(beta, SpdMatrix(sg), SpdMatrix(se), sk,
                                 Eigen::MatrixXd::Ones(1, n));
  BlupModel m2 = make_blup_model(beta, SpdMatrix(sg), SpdMatrix(se), skp,
                                 Eigen::MatrixXd::Ones(1, n));
  const Eigen::MatrixXd f1 = blup_predict(m1, y);
  const Eigen::MatrixXd f2 = blup_predict(m2, yp);
  for (int j = 0; j < n; ++j)
    CHECK((f2.col(j) - f1.col(perm[j])).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("imputation fills values and moves the mask to the imputed record") {
  Rng rng(65);
  BlupModel model = random_model(8, 50, rng);
  PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, 8, rng));
  y.missing_mask(1, 4) = true;
  y.values(1, 4) = std::numeric_limits<double>::quiet_NaN();
  PhenotypeMatrix filled = impute_phenotypes(model, y);
  CHECK(std::isfinite(filled.values(1, 4)));
  CHECK_FALSE(filled.missing_mask.any());
  CHECK(filled.imputed_mask(1, 4));
  CHECK_FALSE(filled.imputed_mask(0, 0));
  CHECK(filled.values(0, 0) == y.values(0, 0));
  CHECK(filled.sample_ids == y.sample_ids);
}

TEST_CASE("model construction validates dimensions") {
  Rng rng(66);
  SpectralKinship sk = test_support::random_kinship(5, 30, rng);
  Eigen::MatrixXd sg(2, 2), se(2, 2), beta(2, 1);
  sg << 1.0, 0.0, 0.0, 1.0;
  se << 1.0, 0.0, 0.0, 1.0;
  beta << 0.0, 0.0;
  CHECK_THROWS_AS(make_blup_model(beta, SpdMatrix(sg), SpdMatrix(se), sk,
                                  Eigen::MatrixXd::Ones(1, 4)),
                  DimError);
  CHECK_THROWS_AS(make_blup_model(beta, SpdMatrix(sg),
                                  SpdMatrix(Eigen::MatrixXd::Identity(3, 3)), sk,
                                  Eigen::MatrixXd::Ones(1, 5)),
                  DimError);
  CHECK_THROWS_AS(make_blup_model(Eigen::MatrixXd::Zero(2, 2), SpdMatrix(sg), SpdMatrix(se),
                                  sk, Eigen::MatrixXd::Ones(1, 5)),
                  DimError);
}

TEST_CASE("posterior means average every kept draw") {
  PosteriorDraws d;
  d.d = 1;
  d.k = 1;
  for (int c = 0; c < 2; ++c) {
    ChainDraws ch;
    for (int t = 0; t < 3; ++t) {
      ch.iters.push_back(t);
      ch.sigma_g.push_back(Eigen::MatrixXd::Constant(1, 1, c + t));
      ch.sigma_e.push_back(Eigen::MatrixXd::Constant(1, 1, 2.0 * (c + t)));
      ch.beta.push_back(Eigen::MatrixXd::Constant(1, 1, 10.0 * (c + t)));
    }
    d.chains.push_back(std::move(ch));
  }
  PosteriorMeans m = posterior_mean_estimates(d);
  // draws are 0,1,2 and 1,2,3: mean 1.5
  CHECK(m.sigma_g(0, 0) == doctest::Approx(1.5));
  CHECK(m.sigma_e(0, 0) == doctest::Approx(3.0));
  CHECK(m.beta(0, 0) == doctest::Approx(15.0));
}

TEST_CASE("rmse and correlation handle exact and degenerate cases") {
  Eigen::MatrixXd t(2, 4), p(2, 4);
  t << 1, 2, 3, 4,
       5, 5, 5, 5;
  p << 1, 2, 3, 4,
       1, 2, 3, 4;
  TraitMetrics m = rmse_and_corr(t, p);
  CHECK(m.rmse(0) == 0.0);
  CHECK(m.corr(0) == doctest::Approx(1.0));
  CHECK(m.corr_defined[0]);
  // constant truth: correlation undefined, rmse still valid
  CHECK_FALSE(m.corr_defined[1]);
  CHECK(std::isnan(m.corr(1)));
  CHECK(m.rmse(1) == doctest::Approx(std::sqrt((16.0 + 9.0 + 4.0 + 1.0) / 4.0)));

  Eigen::MatrixXd anti = -p;
  TraitMetrics m2 = rmse_and_corr(p, anti);
  CHECK(m2.corr(0) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(rmse_and_corr(t, p.leftCols(3)), DimError);
}

TEST_CASE("cross-validation reports stratified folds and pooled metrics") {
  Rng rng(67);
  SpectralKinship sk = test_support::random_kinship(40, 150, rng);
  TraitCovariances tc = covariances_from_h2({0.7, 0.6}, 0.4);
  PhenotypeMatrix y = simulate_phenotypes(sk, tc.sigma_g, tc.sigma_e, {}, {}, rng);
  mask_at_random(y, {0.2, 0.0}, rng);

  CvOptions opts;
  opts.folds = 4;
  opts.estimator = CvEstimator::kReml;
  opts.impute = CvImpute::kDrop;
  opts.seed = 3;
  CvReport rep = cross_validate(y, Eigen::MatrixXd::Ones(1, 40), sk, opts);
  REQUIRE(rep.n_train.size() == 4);
  REQUIRE(rep.fold_of.size() == 40);
  int assigned = 0;
  for (int f : rep.fold_of)
    if (f >= 0) ++assigned;
  // kDrop excludes incomplete individuals from folding
  int complete = 0;
  for (int j = 0; j < 40; ++j)
    if (!y.missing_mask.col(j).any()) ++complete;
  CHECK(assigned == complete);
  for (int f = 0; f < 4; ++f) CHECK(rep.n_train[f] + rep.n_test[f] == assigned);
  CHECK(rep.rmse.size() == 2);
  CHECK(std::isfinite(rep.rmse(0)));
  CHECK(std::isfinite(rep.rmse(1)));

  // same seed, same partition
  CvReport rep2 = cross_validate(y, Eigen::MatrixXd::Ones(1, 40), sk, opts);
  CHECK(rep2.fold_of == rep.fold_of);
  CHECK(rep2.rmse(0) == rep.rmse(0));

  opts.folds = 50;
  CHECK_THROWS_AS(cross_validate(y, Eigen::MatrixXd::Ones(1, 40), sk, opts), DegenerateFold);
}
