#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mvherit/errors.hpp"
#include "mvherit/gibbs.hpp"
#include "mvherit/kinship.hpp"
#include "mvherit/matstats.hpp"
#include "mvherit/simulate.hpp"
#include "test_helpers.hpp"

using namespace mvherit;
using test_support::TempDir;

namespace {

// fixed d=2, n=6, k=1 scenario shared by the conditional-distribution tests
struct Scenario {
  Eigen::MatrixXd y_tilde;
  Eigen::MatrixXd x_tilde;
  Eigen::VectorXd eigvals;
  Eigen::MatrixXd beta;
  Eigen::MatrixXd zeta;
  Eigen::MatrixXd sigma_g;
  Eigen::MatrixXd sigma_e;

  Scenario() {
    y_tilde.resize(2, 6);
    y_tilde << 0.9, -0.4, 1.3, 0.2, -0.7, 0.5,
               -0.1, 0.8, -0.6, 1.1, 0.3, -0.9;
    x_tilde.resize(1, 6);
    x_tilde << 1.0, -0.5, 0.3, 0.8, -1.2, 0.4;
    eigvals.resize(6);
    eigvals << 2.0, 1.2, 0.7, 0.3, 0.0, 0.0;
    beta.resize(2, 1);
    beta << 0.4, -0.2;
    zeta.resize(2, 6);
    zeta << 0.5, -0.3, 0.2, 0.7, -0.4, 0.1,
            -0.2, 0.6, -0.5, 0.3, 0.8, -0.6;
    sigma_g.resize(2, 2);
    sigma_g << 1.0, 0.3, 0.3, 0.8;
    sigma_e.resize(2, 2);
    sigma_e << 0.5, -0.1, -0.1, 0.7;
  }

  ModelState state() const {
    return ModelState(beta, zeta, SpdMatrix(sigma_g), SpdMatrix(sigma_e));
  }
};

Eigen::MatrixXd sample_cov(const std::vector<Eigen::VectorXd>& xs) {
  const int d = static_cast<int>(xs[0].size());
  const double n = static_cast<double>(xs.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : xs) mean += x;
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
  return cov / (n - 1.0);
}

}  // namespace

TEST_CASE("config validation rejects malformed settings") {
  GibbsConfig cfg;
  cfg.n_iter = 1000;
  cfg.burn_in = 200;
  cfg.thin = 1;
  cfg.validate(2);

  GibbsConfig bad = cfg;
  bad.n_chains = 0;
  CHECK_THROWS_AS(bad.validate(2), InvalidConfig);
  bad = cfg;
  bad.burn_in = 1000;
  CHECK_THROWS_AS(bad.validate(2), InvalidConfig);
  bad = cfg;
  bad.thin = 0;
  CHECK_THROWS_AS(bad.validate(2), InvalidConfig);
  bad = cfg;
  bad.thin = 50;  // keeps only 16 draws
  CHECK_THROWS_AS(bad.validate(2), InvalidConfig);
  bad = cfg;
  bad.coef_prior_variance = 0.0;
  CHECK_THROWS_AS(bad.validate(2), InvalidConfig);
  bad = cfg;
  bad.wishart_dof = 1.0;  // needs > d - 1 = 1
  CHECK_THROWS_AS(bad.validate(2), ImproperPrior);
  bad.wishart_dof = 1.5;
  bad.validate(2);
  bad = cfg;
  bad.wishart_scale_mode = WishartScaleMode::kUserMatrix;
  CHECK_THROWS_AS(bad.validate(2), InvalidConfig);
  bad.wishart_scale = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(bad.validate(2), DimError);
  bad.wishart_scale = Eigen::MatrixXd::Identity(2, 2);
  bad.validate(2);
}

TEST_CASE("parameter selectors use one-based row-column names") {
  ParamSel sg{ParamSel::Block::kSigmaG, 0, 1};
  CHECK(sg.name() == "sigma_g_12");
  ParamSel se{ParamSel::Block::kSigmaE, 1, 1};
  CHECK(se.name() == "sigma_e_22");
  ParamSel b{ParamSel::Block::kBeta, 0, 2};
  CHECK(b.name() == "beta_13");

  const auto cov_sel = covariance_selectors(2);
  CHECK(cov_sel.size() == 6);  // two upper triangles of 2x2
  CHECK(cov_sel[0].name() == "sigma_g_11");
  const auto all_sel = all_selectors(2, 3);
  CHECK(all_sel.size() == 12);
  CHECK(all_sel.back().name() == "beta_23");
}

TEST_CASE("transform_data rotates into the eigenbasis and validates alignment") {
  Rng rng(11);
  SpectralKinship sk = test_support::random_kinship(8, 100, rng);
  Eigen::MatrixXd vals = test_support::random_matrix(2, 8, rng);
  PhenotypeMatrix y = test_support::make_phenos(vals);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 8);

  auto [y_t, x_t] = transform_data(y, x, sk);
  CHECK((y_t - vals * sk.eigvecs).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((x_t - x * sk.eigvecs).cwiseAbs().maxCoeff() < 1e-12);

  PhenotypeMatrix holey = y;
  holey.missing_mask(0, 3) = true;
  CHECK_THROWS_AS(transform_data(holey, x, sk), MissingData);

  PhenotypeMatrix narrow = test_support::make_phenos(vals.leftCols(7));
  CHECK_THROWS_AS(transform_data(narrow, x.leftCols(7), sk), DimError);
  CHECK_THROWS_AS(transform_data(y, x.leftCols(7), sk), DimError);

  PhenotypeMatrix shuffled = y;
  std::swap(shuffled.sample_ids[0], shuffled.sample_ids[1]);
  CHECK_THROWS_AS(transform_data(shuffled, x, sk), ValidationError);
}

TEST_CASE("latent-effect conditional matches its analytic mean and covariance") {
  Scenario sc;
  ModelState state = sc.state();
  Rng rng(21);
  const int reps = 30000;
  std::vector<Eigen::VectorXd> col0, col4;
  col0.reserve(reps);
  col4.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    update_zeta(state, sc.y_tilde, sc.x_tilde, sc.eigvals, rng);
    col0.push_back(state.zeta.col(0));
    col4.push_back(state.zeta.col(4));
  }

  const Eigen::MatrixXd sg_inv = sc.sigma_g.inverse();
  const Eigen::MatrixXd se_inv = sc.sigma_e.inverse();
  const double r = sc.eigvals(0);
  const Eigen::MatrixXd v = (sg_inv + r * se_inv).inverse();
  const Eigen::VectorXd resid0 = sc.y_tilde.col(0) - sc.beta * sc.x_tilde.col(0);
  const Eigen::VectorXd mean0 = v * (std::sqrt(r) * (se_inv * resid0));

  Eigen::VectorXd mc_mean = Eigen::VectorXd::Zero(2);
  for (const auto& x : col0) mc_mean += x;
  mc_mean /= static_cast<double>(reps);
  CHECK((mc_mean - mean0).cwiseAbs().maxCoeff() < 0.02);
  const Eigen::MatrixXd mc_cov = sample_cov(col0);
  CHECK((mc_cov - v).cwiseAbs().maxCoeff() < 0.02);

  // zero eigenvalue: the conditional reduces to the N(0, Sigma_g) prior
  Eigen::VectorXd mc_mean4 = Eigen::VectorXd::Zero(2);
  for (const auto& x : col4) mc_mean4 += x;
  mc_mean4 /= static_cast<double>(reps);
  CHECK(mc_mean4.cwiseAbs().maxCoeff() < 0.03);
  const Eigen::MatrixXd mc_cov4 = sample_cov(col4);
  CHECK((mc_cov4 - sc.sigma_g).cwiseAbs().maxCoeff() < 0.04);
}

TEST_CASE("genetic covariance conditional has the inverse-Wishart mean") {
  Scenario sc;
  ModelState state = sc.state();
  const WishartPrior prior{SpdMatrix(Eigen::MatrixXd::Identity(2, 2)), 4.0};
  Rng rng(22);
  const int reps = 30000;
  Eigen::MatrixXd mean_cov = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd mean_prec = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < reps; ++i) {
    update_sigma_g(state, prior, rng);
    mean_cov += state.sigma_g.mat();
    mean_prec += state.sigma_g.inverse();
  }
  mean_cov /= static_cast<double>(reps);
  mean_prec /= static_cast<double>(reps);

  const double n = 6.0;
  const Eigen::MatrixXd lambda =
      prior.scale.inverse() + sc.zeta * sc.zeta.transpose();
  // draw ~ inverse-Wishart with inverse scale lambda, dof nu + n
  const Eigen::MatrixXd expect_cov = lambda / (prior.dof + n - 2.0 - 1.0);
  const Eigen::MatrixXd expect_prec = (prior.dof + n) * lambda.inverse();
  CHECK(((mean_cov - expect_cov).cwiseAbs().array() /
         expect_cov.diagonal().mean()).maxCoeff() < 0.03);
  CHECK(((mean_prec - expect_prec).cwiseAbs().array() /
         expect_prec.diagonal().mean()).maxCoeff() < 0.03);
}

TEST_CASE("noise covariance conditional uses the de-trended scaled residuals") {
  Scenario sc;
  ModelState state = sc.state();
  const WishartPrior prior{SpdMatrix(Eigen::MatrixXd::Identity(2, 2)), 5.0};
  Rng rng(23);
  const int reps = 30000;
  Eigen::MatrixXd mean_cov = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < reps; ++i) {
    update_sigma_e(state, sc.y_tilde, sc.x_tilde, sc.eigvals, prior, rng);
    mean_cov += state.sigma_e.mat();
  }
  mean_cov /= static_cast<double>(reps);

  Eigen::MatrixXd resid = sc.y_tilde - sc.beta * sc.x_tilde;
  resid -= sc.zeta * sc.eigvals.array().sqrt().matrix().asDiagonal();
  const Eigen::MatrixXd lambda = prior.scale.inverse() + resid * resid.transpose();
  const Eigen::MatrixXd expect_cov = lambda / (prior.dof + 6.0 - 2.0 - 1.0);
  CHECK(((mean_cov - expect_cov).cwiseAbs().array() /
         expect_cov.diagonal().mean()).maxCoeff() < 0.03);
}

TEST_CASE("coefficient conditional matches its analytic mean and covariance") {
  Scenario sc;
  ModelState state = sc.state();
  const double c = 2.0;
  Rng rng(24);
  const int reps = 30000;
  std::vector<Eigen::VectorXd> draws;
  draws.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    update_beta(state, sc.y_tilde, sc.x_tilde, sc.eigvals, c, rng);
    draws.push_back(Eigen::Map<const Eigen::VectorXd>(state.beta.data(), 2));
  }

  const Eigen::MatrixXd se_inv = sc.sigma_e.inverse();
  Eigen::MatrixXd w = sc.y_tilde;
  w -= sc.zeta * sc.eigvals.array().sqrt().matrix().asDiagonal();
  Eigen::MatrixXd prec = kron(sc.x_tilde * sc.x_tilde.transpose(), se_inv);
  prec.diagonal().array() += 1.0 / c;
  const Eigen::MatrixXd rhs_mat = se_inv * w * sc.x_tilde.transpose();
  const Eigen::VectorXd mean =
      prec.inverse() * Eigen::Map<const Eigen::VectorXd>(rhs_mat.data(), 2);

  Eigen::VectorXd mc_mean = Eigen::VectorXd::Zero(2);
  for (const auto& x : draws) mc_mean += x;
  mc_mean /= static_cast<double>(reps);
  CHECK((mc_mean - mean).cwiseAbs().maxCoeff() < 0.01);
  const Eigen::MatrixXd mc_cov = sample_cov(draws);
  CHECK((mc_cov - prec.inverse()).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("chains are deterministic in the seed and survive rank deficiency") {
  Rng rng(31);
  // p < n makes the kinship rank deficient: several exact zero eigenvalues
  SpectralKinship sk = test_support::random_kinship(25, 8, rng);
  CHECK(sk.eigvals.tail(5).maxCoeff() < 1e-9);

  Eigen::MatrixXd vals = test_support::random_matrix(2, 25, rng);
  PhenotypeMatrix y = test_support::make_phenos(vals);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 25);

  GibbsConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iter = 400;
  cfg.burn_in = 100;
  cfg.thin = 2;
  cfg.seed = 77;
  PosteriorDraws a = run_chains(y, x, sk, cfg);
  PosteriorDraws b = run_chains(y, x, sk, cfg);
  REQUIRE(a.chains.size() == 2);
  REQUIRE(a.kept_per_chain() == 150);
  CHECK(a.total_kept() == 300);
  for (int c = 0; c < 2; ++c) {
    REQUIRE(a.chains[c].sigma_g.size() == b.chains[c].sigma_g.size());
    for (size_t t = 0; t < a.chains[c].sigma_g.size(); ++t) {
      CHECK(a.chains[c].sigma_g[t] == b.chains[c].sigma_g[t]);
      CHECK(a.chains[c].sigma_e[t] == b.chains[c].sigma_e[t]);
      CHECK(a.chains[c].beta[t] == b.chains[c].beta[t]);
      CHECK(a.chains[c].sigma_g[t](0, 0) > 0.0);
      CHECK(a.chains[c].sigma_e[t](1, 1) > 0.0);
    }
  }
  // distinct seeds give distinct chains
  cfg.seed = 78;
  PosteriorDraws cdraws = run_chains(y, x, sk, cfg);
  CHECK(cdraws.chains[0].sigma_g[0] != a.chains[0].sigma_g[0]);
}

TEST_CASE("series extracts the selected entry per chain") {
  Rng rng(32);
  SpectralKinship sk = test_support::random_kinship(12, 60, rng);
  PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, 12, rng));
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 12);
  GibbsConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iter = 300;
  cfg.burn_in = 50;
  cfg.thin = 1;
  cfg.seed = 5;
  PosteriorDraws d = run_chains(y, x, sk, cfg);

  auto sg12 = d.series(ParamSel{ParamSel::Block::kSigmaG, 0, 1});
  REQUIRE(sg12.size() == 2);
  REQUIRE(sg12[0].size() == 250);
  CHECK(sg12[1][7] == d.chains[1].sigma_g[7](0, 1));
  auto b11 = d.series(ParamSel{ParamSel::Block::kBeta, 0, 0});
  CHECK(b11[0][3] == d.chains[0].beta[3](0, 0));
}

TEST_CASE("draw files round-trip the chains and config exactly") {
  Rng rng(33);
  SpectralKinship sk = test_support::random_kinship(10, 50, rng);
  PhenotypeMatrix y = test_support::make_phenos(test_support::random_matrix(2, 10, rng));
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 10);
  GibbsConfig cfg;
  cfg.n_chains = 2;
  cfg.n_iter = 260;
  cfg.burn_in = 60;
  cfg.thin = 2;
  cfg.seed = 9;
  cfg.wishart_dof = 3.5;
  PosteriorDraws d = run_chains(y, x, sk, cfg);

  TempDir tmp("draws");
  write_draws(tmp.str(), d);
  PosteriorDraws back = read_draws(tmp.str());
  CHECK(back.d == 2);
  CHECK(back.k == 1);
  CHECK(back.config.seed == 9);
  CHECK(back.config.wishart_dof == 3.5);
  CHECK(back.config.thin == 2);
  REQUIRE(back.chains.size() == 2);
  for (int c = 0; c < 2; ++c) {
    REQUIRE(back.chains[c].iters == d.chains[c].iters);
    for (size_t t = 0; t < d.chains[c].sigma_g.size(); ++t) {
      CHECK(back.chains[c].sigma_g[t] == d.chains[c].sigma_g[t]);
      CHECK(back.chains[c].sigma_e[t] == d.chains[c].sigma_e[t]);
      CHECK(back.chains[c].beta[t] == d.chains[c].beta[t]);
    }
  }
  CHECK_THROWS_AS(read_draws(tmp.str() + "/nope"), IoError);
}

TEST_CASE("initial state halves the sample trait variances") {
  Eigen::MatrixXd y(2, 4);
  y << 1.0, 3.0, 5.0, 7.0,
       2.0, 2.0, 2.0, 2.0;
  ModelState st = initial_state(y, 2);
  CHECK(st.beta.rows() == 2);
  CHECK(st.beta.cols() == 2);
  CHECK(st.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.zeta.cols() == 4);
  // population variance of row 0 is 5, halved to 2.5; constant row hits the floor
  CHECK(st.sigma_g.mat()(0, 0) == doctest::Approx(2.5));
  CHECK(st.sigma_g.mat()(0, 1) == 0.0);
  CHECK(st.sigma_e.mat()(0, 0) == doctest::Approx(2.5));
  CHECK(st.sigma_g.mat()(1, 1) > 0.0);
}
