#include "mvherit/predict.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>
#include <utility>

#include "mvherit/errors.hpp"
#include "mvherit/reml.hpp"

namespace mvherit {

namespace {

constexpr Eigen::Index kDenseGate = 20000;   // largest nd for dense H assembly
constexpr Eigen::Index kSpdCheckLimit = 2000;  // H positive-definiteness audit cutoff

struct EntryList {
  std::vector<int> trait;
  std::vector<int> sample;
  std::size_t size() const { return trait.size(); }
};

}  // namespace

BlupModel make_blup_model(const Eigen::MatrixXd& beta, const SpdMatrix& sigma_g,
                          const SpdMatrix& sigma_e, const SpectralKinship& sk,
                          const Eigen::MatrixXd& x) {
  const int d = static_cast<int>(beta.rows());
  if (sigma_g.dim() != d || sigma_e.dim() != d)
    throw DimError("covariance dimension does not match trait count");
  if (x.rows() != beta.cols()) throw DimError("covariate rows do not match coefficient columns");
  if (x.cols() != sk.n()) throw DimError("covariate samples do not match kinship");
  BlupModel model{beta, sigma_g, sigma_e, sk, beta * x};
  const Eigen::Index nd = sk.n() * d;
  if (nd <= kSpdCheckLimit) {
    Eigen::MatrixXd h = kron(sk.k, sigma_g.mat());
    h += kron(Eigen::MatrixXd::Identity(sk.n(), sk.n()), sigma_e.mat());
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success)
      throw NotSpd("joint phenotype covariance is not positive definite");
  }
  return model;
}

namespace {

void split_entries(const PhenotypeMatrix& y, EntryList& observed, EntryList& missing) {
  const int d = static_cast<int>(y.values.rows());
  const int n = static_cast<int>(y.values.cols());
  for (int j = 0; j < n; ++j)
    for (int t = 0; t < d; ++t) {
      auto& list = y.missing_mask(t, j) ? missing : observed;
      list.trait.push_back(t);
      list.sample.push_back(j);
    }
}

bool individualwise(const PhenotypeMatrix& y) {
  for (Eigen::Index j = 0; j < y.values.cols(); ++j) {
    const auto col = y.missing_mask.col(j);
    if (col.any() && !col.all()) return false;
  }
  return true;
}

Eigen::MatrixXd predict_dense(const BlupModel& model, const PhenotypeMatrix& y,
                              const EntryList& obs, const EntryList& mis) {
  const auto no = static_cast<Eigen::Index>(obs.size());
  const auto nm = static_cast<Eigen::Index>(mis.size());
  const Eigen::MatrixXd& k = model.sk.k;
  const Eigen::MatrixXd& sg = model.sigma_g.mat();
  const Eigen::MatrixXd& se = model.sigma_e.mat();

  Eigen::MatrixXd h_oo(no, no);
  Eigen::VectorXd resid(no);
  for (Eigen::Index a = 0; a < no; ++a) {
    const int ta = obs.trait[a], ja = obs.sample[a];
    resid(a) = y.values(ta, ja) - model.mean(ta, ja);
    for (Eigen::Index b = 0; b <= a; ++b) {
      const int tb = obs.trait[b], jb = obs.sample[b];
      double v = k(ja, jb) * sg(ta, tb);
      if (ja == jb) v += se(ta, tb);
      h_oo(a, b) = v;
      h_oo(b, a) = v;
    }
  }
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(h_oo);  // factor in place
  if (llt.info() != Eigen::Success)
    throw SingularBlock("observed-block covariance is singular");
  const Eigen::VectorXd s = llt.solve(resid);

  Eigen::MatrixXd out = y.values;
  for (Eigen::Index a = 0; a < nm; ++a) {
    const int ta = mis.trait[a], ja = mis.sample[a];
    double acc = model.mean(ta, ja);
    for (Eigen::Index b = 0; b < no; ++b) {
      const int tb = obs.trait[b], jb = obs.sample[b];
      double v = k(ja, jb) * sg(ta, tb);
      if (ja == jb) v += se(ta, tb);
      acc += v * s(b);
    }
    out(ta, ja) = acc;
  }
  return out;
}

Eigen::MatrixXd predict_structured(const BlupModel& model, const PhenotypeMatrix& y) {
  std::vector<int> obs_samples, mis_samples;
  for (Eigen::Index j = 0; j < y.values.cols(); ++j) {
    if (y.missing_mask.col(j).any())
      mis_samples.push_back(static_cast<int>(j));
    else
      obs_samples.push_back(static_cast<int>(j));
  }
  const auto no = static_cast<Eigen::Index>(obs_samples.size());
  const auto nm = static_cast<Eigen::Index>(mis_samples.size());
  const int d = model.d();

  Eigen::MatrixXd k_oo(no, no), k_om(no, nm);
  Eigen::MatrixXd w(d, no);
  for (Eigen::Index a = 0; a < no; ++a) {
    w.col(a) = y.values.col(obs_samples[a]) - model.mean.col(obs_samples[a]);
    for (Eigen::Index b = 0; b < no; ++b) k_oo(a, b) = model.sk.k(obs_samples[a], obs_samples[b]);
    for (Eigen::Index b = 0; b < nm; ++b) k_om(a, b) = model.sk.k(obs_samples[a], mis_samples[b]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k_oo);
  if (eig.info() != Eigen::Success)
    throw NumericalBreakdown("eigendecomposition of the observed kinship block failed");
  const Eigen::MatrixXd& u = eig.eigenvectors();
  const Eigen::ArrayXd r = eig.eigenvalues().array().max(0.0);

  // Solve (K_oo (x) Sigma_g + I (x) Sigma_e) vec(S) = vec(W) in the
  // eigenbasis, one small SPD solve per individual.
  const Eigen::MatrixXd w_rot = w * u;
  Eigen::MatrixXd s_rot(d, no);
  for (Eigen::Index i = 0; i < no; ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(r(i) * model.sigma_g.mat() + model.sigma_e.mat());
    if (llt.info() != Eigen::Success)
      throw SingularBlock("per-individual covariance block is singular");
    s_rot.col(i) = llt.solve(w_rot.col(i));
  }
  const Eigen::MatrixXd s = s_rot * u.transpose();
  const Eigen::MatrixXd pred = model.sigma_g.mat() * s * k_om;

  Eigen::MatrixXd out = y.values;
  for (Eigen::Index b = 0; b < nm; ++b)
    out.col(mis_samples[b]) = model.mean.col(mis_samples[b]) + pred.col(b);
  return out;
}

Eigen::MatrixXd predict_iterative(const BlupModel& model, const PhenotypeMatrix& y,
                                  const EntryList& obs, const EntryList& mis) {
  const int d = model.d();
  const Eigen::Index n = model.sk.n();
  const auto no = static_cast<Eigen::Index>(obs.size());
  const Eigen::MatrixXd& k = model.sk.k;
  const Eigen::MatrixXd& sg = model.sigma_g.mat();
  const Eigen::MatrixXd& se = model.sigma_e.mat();

  // H restricted to observed coordinates, applied matrix-free through the
  // full-space identity H vec(S) = vec(Sigma_g S K + Sigma_e S).
  Eigen::MatrixXd smat = Eigen::MatrixXd::Zero(d, n);
  auto apply = [&](const Eigen::VectorXd& v) {
    smat.setZero();
    for (Eigen::Index a = 0; a < no; ++a) smat(obs.trait[a], obs.sample[a]) = v(a);
    const Eigen::MatrixXd t = sg * smat * k + se * smat;
    Eigen::VectorXd out(no);
    for (Eigen::Index a = 0; a < no; ++a) out(a) = t(obs.trait[a], obs.sample[a]);
    return out;
  };

  Eigen::VectorXd b(no);
  for (Eigen::Index a = 0; a < no; ++a)
    b(a) = y.values(obs.trait[a], obs.sample[a]) - model.mean(obs.trait[a], obs.sample[a]);

  Eigen::VectorXd sol = Eigen::VectorXd::Zero(no);
  Eigen::VectorXd resid = b;
  Eigen::VectorXd dir = resid;
  double rs = resid.squaredNorm();
  const double target = 1e-10 * std::sqrt(std::max(b.squaredNorm(), 1e-300));
  const Eigen::Index max_iter = 2 * no + 50;
  Eigen::Index iter = 0;
  while (std::sqrt(rs) > target && iter < max_iter) {
    const Eigen::VectorXd h_dir = apply(dir);
    const double denom = dir.dot(h_dir);
    if (denom <= 0.0) throw SingularBlock("observed-block operator is not positive definite");
    const double alpha = rs / denom;
    sol += alpha * dir;
    resid -= alpha * h_dir;
    const double rs_new = resid.squaredNorm();
    dir = resid + (rs_new / rs) * dir;
    rs = rs_new;
    ++iter;
  }
  if (std::sqrt(rs) > target)
    throw NumericalBreakdown("conjugate gradient did not reach tolerance");

  smat.setZero();
  for (Eigen::Index a = 0; a < no; ++a) smat(obs.trait[a], obs.sample[a]) = sol(a);
  const Eigen::MatrixXd t = sg * smat * k + se * smat;
  Eigen::MatrixXd out = y.values;
  for (std::size_t a = 0; a < mis.size(); ++a)
    out(mis.trait[a], mis.sample[a]) = model.mean(mis.trait[a], mis.sample[a]) +
                                       t(mis.trait[a], mis.sample[a]);
  return out;
}

}  // namespace

Eigen::MatrixXd blup_predict(const BlupModel& model, const PhenotypeMatrix& y, BlupPath path) {
  if (y.values.rows() != model.d()) throw DimError("trait count does not match model");
  if (y.values.cols() != model.n()) throw DimError("sample count does not match model");
  if (!y.sample_ids.empty() && !model.sk.sample_ids.empty() &&
      y.sample_ids != model.sk.sample_ids)
    throw ValidationError("phenotype and model sample ids are not aligned");

  EntryList obs, mis;
  split_entries(y, obs, mis);
  if (mis.size() == 0) return y.values;
  if (obs.size() == 0) throw EmptyInput("no observed phenotype entries to condition on");

  if (path == BlupPath::kAuto) {
    const Eigen::Index nd = y.values.size();
    if (nd <= kDenseGate)
      path = BlupPath::kDense;
    else if (individualwise(y))
      path = BlupPath::kStructured;
    else
      path = BlupPath::kIterative;
  }
  switch (path) {
    case BlupPath::kDense:
      return predict_dense(model, y, obs, mis);
    case BlupPath::kStructured:
      if (!individualwise(y))
        throw ValidationError("structured prediction requires individualwise missingness");
      return predict_structured(model, y);
    case BlupPath::kIterative:
      return predict_iterative(model, y, obs, mis);
    case BlupPath::kAuto:
      break;
  }
  throw ValidationError("unreachable prediction path");
}

PhenotypeMatrix impute_phenotypes(const BlupModel& model, const PhenotypeMatrix& y,
                                  BlupPath path) {
  PhenotypeMatrix out = y;
  if (out.imputed_mask.size() == 0)
    out.imputed_mask = BoolMatrix::Constant(y.values.rows(), y.values.cols(), false);
  if (!y.missing_mask.any()) return out;
  out.values = blup_predict(model, y, path);
  out.imputed_mask = out.imputed_mask || y.missing_mask;
  out.missing_mask.setConstant(false);
  return out;
}

TraitMetrics rmse_and_corr(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
    throw DimError("prediction and truth shapes differ");
  const Eigen::Index m = y_true.cols();
  if (m < 2) throw InsufficientData("correlation needs at least 2 samples");
  const int d = static_cast<int>(y_true.rows());

  TraitMetrics out;
  out.rmse.resize(d);
  out.corr.resize(d);
  out.corr_defined.assign(d, true);
  for (int t = 0; t < d; ++t) {
    const Eigen::ArrayXd a = y_true.row(t).array();
    const Eigen::ArrayXd b = y_pred.row(t).array();
    out.rmse(t) = std::sqrt((a - b).square().mean());
    const Eigen::ArrayXd ac = a - a.mean();
    const Eigen::ArrayXd bc = b - b.mean();
    const double denom = std::sqrt(ac.square().sum() * bc.square().sum());
    if (denom > 0.0) {
      out.corr(t) = (ac * bc).sum() / denom;
    } else {
      out.corr(t) = std::numeric_limits<double>::quiet_NaN();
      out.corr_defined[t] = false;
    }
  }
  return out;
}

PosteriorMeans posterior_mean_estimates(const PosteriorDraws& draws) {
  PosteriorMeans est;
  est.beta = Eigen::MatrixXd::Zero(draws.d, draws.k);
  est.sigma_g = Eigen::MatrixXd::Zero(draws.d, draws.d);
  est.sigma_e = Eigen::MatrixXd::Zero(draws.d, draws.d);
  double count = 0.0;
  for (const auto& chain : draws.chains)
    for (std::size_t i = 0; i < chain.iters.size(); ++i) {
      est.beta += chain.beta[i];
      est.sigma_g += chain.sigma_g[i];
      est.sigma_e += chain.sigma_e[i];
      count += 1.0;
    }
  if (count == 0.0) throw InsufficientSamples("no draws to average");
  est.beta /= count;
  est.sigma_g /= count;
  est.sigma_e /= count;
  return est;
}

namespace {

PosteriorMeans fit_point_estimates(const PhenotypeMatrix& y, const Eigen::MatrixXd& x,
                                   const SpectralKinship& sk, CvEstimator estimator,
                                   const GibbsConfig& gibbs_cfg) {
  if (estimator == CvEstimator::kBayes)
    return posterior_mean_estimates(run_chains(y, x, sk, gibbs_cfg));

  const int d = static_cast<int>(y.values.rows());
  const int k = static_cast<int>(x.rows());
  PosteriorMeans est;
  est.beta.resize(d, k);
  est.sigma_g = Eigen::MatrixXd::Zero(d, d);
  est.sigma_e = Eigen::MatrixXd::Zero(d, d);
  for (int t = 0; t < d; ++t) {
    const UnivariateFit fit = univariate_ml(y.values.row(t).transpose(), x, sk);
    if (!std::isfinite(fit.sigma_g2) || !std::isfinite(fit.sigma_e2))
      throw NumericalBreakdown("univariate variance components not identified on trait " +
                               std::to_string(t + 1));
    const double total = fit.sigma_g2 + fit.sigma_e2;
    est.sigma_g(t, t) = std::max(fit.sigma_g2, 1e-8 * total);
    est.sigma_e(t, t) = std::max(fit.sigma_e2, 1e-8 * total);
    est.beta.row(t) = fit.beta.transpose();
  }
  return est;
}

Eigen::MatrixXd subset_cols(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_int(0, static_cast<long>(i) - 1)]);
}

}  // namespace

CvReport cross_validate(const PhenotypeMatrix& y, const Eigen::MatrixXd& x,
                        const SpectralKinship& sk, const CvOptions& opts) {
  const int d = static_cast<int>(y.values.rows());
  const int n = static_cast<int>(y.values.cols());
  if (opts.folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (x.cols() != n) throw DimError("covariate samples do not match phenotypes");
  if (sk.n() != n) throw DimError("kinship does not match phenotypes");

  const BoolMatrix original_missing =
      y.missing_mask.size() > 0 ? y.missing_mask : BoolMatrix::Constant(d, n, false);
  std::vector<int> complete_idx, incomplete_idx;
  for (int j = 0; j < n; ++j) {
    if (original_missing.col(j).any())
      incomplete_idx.push_back(j);
    else
      complete_idx.push_back(j);
  }

  // Working data: either complete cases only, or the full matrix after a
  // one-shot BLUP imputation fitted on the complete cases.
  PhenotypeMatrix work = y;
  std::vector<int> usable;
  if (opts.impute == CvImpute::kDrop) {
    usable = complete_idx;
  } else {
    usable.resize(n);
    for (int j = 0; j < n; ++j) usable[j] = j;
    if (!incomplete_idx.empty()) {
      if (static_cast<int>(complete_idx.size()) < 3)
        throw InsufficientData("too few complete individuals to fit the imputation model");
      const SpectralKinship sk_cc = kinship_submatrix(sk, complete_idx);
      const PhenotypeMatrix y_cc = subset_samples(y, complete_idx);
      const Eigen::MatrixXd x_cc = subset_cols(x, complete_idx);
      const PosteriorMeans est =
          fit_point_estimates(y_cc, x_cc, sk_cc, opts.estimator, opts.gibbs);
      const BlupModel model =
          make_blup_model(est.beta, SpdMatrix(est.sigma_g), SpdMatrix(est.sigma_e), sk, x);
      work = impute_phenotypes(model, y);
    }
  }
  if (static_cast<int>(usable.size()) < 2 * opts.folds)
    throw DegenerateFold("fewer than two usable individuals per fold");

  // Stratified fold assignment: permute each missingness stratum, deal
  // round-robin so fold missingness fractions match the data.
  CvReport report;
  report.fold_of.assign(n, -1);
  Rng fold_rng = Rng::stream(opts.seed, 0);
  const std::vector<bool> usable_mask = [&] {
    std::vector<bool> m(n, false);
    for (int j : usable) m[j] = true;
    return m;
  }();
  for (const auto* stratum : {&complete_idx, &incomplete_idx}) {
    std::vector<int> members;
    for (int j : *stratum)
      if (usable_mask[j]) members.push_back(j);
    shuffle_indices(members, fold_rng);
    for (std::size_t i = 0; i < members.size(); ++i)
      report.fold_of[members[i]] = static_cast<int>(i % opts.folds);
  }

  // Restrict everything to the usable samples once.
  const SpectralKinship sk_keep =
      static_cast<int>(usable.size()) == n ? sk : kinship_submatrix(sk, usable);
  const PhenotypeMatrix y_keep = subset_samples(work, usable);
  const Eigen::MatrixXd x_keep = subset_cols(x, usable);
  const int n_keep = static_cast<int>(usable.size());

  report.n_train.assign(opts.folds, 0);
  report.n_test.assign(opts.folds, 0);
  std::vector<Eigen::MatrixXd> fold_pred(opts.folds);
  std::vector<std::vector<int>> fold_test(opts.folds);
  for (int local = 0; local < n_keep; ++local) {
    const int f = report.fold_of[usable[local]];
    fold_test[f].push_back(local);
  }
  for (int f = 0; f < opts.folds; ++f) {
    if (fold_test[f].empty()) throw DegenerateFold("fold " + std::to_string(f + 1) + " is empty");
    bool any_eval = false;
    for (int local : fold_test[f])
      for (int t = 0; t < d; ++t)
        if (!original_missing(t, usable[local])) any_eval = true;
    if (!any_eval)
      throw DegenerateFold("fold " + std::to_string(f + 1) + " has no observed values");
  }

  std::vector<std::exception_ptr> errors(opts.folds);
  std::atomic<int> next{0};
  auto run_fold = [&](int f) {
    std::vector<int> train_local;
    std::vector<bool> in_test(n_keep, false);
    for (int local : fold_test[f]) in_test[local] = true;
    for (int local = 0; local < n_keep; ++local)
      if (!in_test[local]) train_local.push_back(local);
    if (static_cast<int>(train_local.size()) < 3)
      throw DegenerateFold("fold " + std::to_string(f + 1) + " leaves too few training samples");
    report.n_train[f] = static_cast<int>(train_local.size());
    report.n_test[f] = static_cast<int>(fold_test[f].size());

    const SpectralKinship sk_train = kinship_submatrix(sk_keep, train_local);
    const PhenotypeMatrix y_train = subset_samples(y_keep, train_local);
    const Eigen::MatrixXd x_train = subset_cols(x_keep, train_local);
    GibbsConfig cfg = opts.gibbs;
    cfg.seed = opts.gibbs.seed + static_cast<std::uint64_t>(f);
    const PosteriorMeans est = fit_point_estimates(y_train, x_train, sk_train, opts.estimator, cfg);

    const BlupModel model = make_blup_model(est.beta, SpdMatrix(est.sigma_g),
                                            SpdMatrix(est.sigma_e), sk_keep, x_keep);
    PhenotypeMatrix masked = y_keep;
    masked.missing_mask = BoolMatrix::Constant(d, n_keep, false);
    for (int local : fold_test[f]) masked.missing_mask.col(local).setConstant(true);
    const Eigen::MatrixXd pred = blup_predict(model, masked);
    fold_pred[f] = subset_cols(pred, fold_test[f]);
  };
  auto work_loop = [&]() {
    for (;;) {
      const int f = next.fetch_add(1);
      if (f >= opts.folds) return;
      try {
        run_fold(f);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min(opts.threads, opts.folds));
  if (workers == 1) {
    work_loop();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work_loop);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Pool per-trait (observed, predicted) pairs across folds.
  report.rmse.resize(d);
  report.corr.resize(d);
  report.corr_defined.assign(d, true);
  for (int t = 0; t < d; ++t) {
    std::vector<double> truth, pred;
    for (int f = 0; f < opts.folds; ++f)
      for (std::size_t i = 0; i < fold_test[f].size(); ++i) {
        const int global = usable[fold_test[f][i]];
        if (original_missing(t, global)) continue;
        truth.push_back(y.values(t, global));
        pred.push_back(fold_pred[f](t, static_cast<Eigen::Index>(i)));
      }
    if (truth.size() < 2) {
      report.rmse(t) = std::numeric_limits<double>::quiet_NaN();
      report.corr(t) = std::numeric_limits<double>::quiet_NaN();
      report.corr_defined[t] = false;
      continue;
    }
    Eigen::MatrixXd yt(1, static_cast<Eigen::Index>(truth.size()));
    Eigen::MatrixXd yp(1, static_cast<Eigen::Index>(pred.size()));
    for (std::size_t i = 0; i < truth.size(); ++i) {
      yt(0, static_cast<Eigen::Index>(i)) = truth[i];
      yp(0, static_cast<Eigen::Index>(i)) = pred[i];
    }
    const TraitMetrics m = rmse_and_corr(yt, yp);
    report.rmse(t) = m.rmse(0);
    report.corr(t) = m.corr(0);
    report.corr_defined[t] = m.corr_defined[0];
  }
  return report;
}

}  // namespace mvherit
