#include "mvherit/matstats.hpp"

#include <cmath>
#include <numbers>

#include "mvherit/errors.hpp"

namespace mvherit {

namespace {
constexpr double kSymTol = 1e-10;
}

SpdMatrix::SpdMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    throw DimError("SpdMatrix: matrix is " + std::to_string(m_.rows()) + "x" +
                   std::to_string(m_.cols()) + ", expected square");
  }
  const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
  const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymTol * scale) {
    throw NotSpd("SpdMatrix: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
  // symmetrize round-off before factoring
  m_ = ((m_ + m_.transpose()) / 2.0).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(m_);
  if (llt.info() != Eigen::Success) {
    throw NotSpd("SpdMatrix: Cholesky factorization failed, matrix is not positive definite");
  }
  chol_ = llt.matrixL();
}

SpdMatrix SpdMatrix::identity(int d) { return SpdMatrix(Eigen::MatrixXd::Identity(d, d)); }

double SpdMatrix::logdet() const {
  return 2.0 * chol_.diagonal().array().log().sum();
}

Eigen::MatrixXd SpdMatrix::solve(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXd y = chol_.triangularView<Eigen::Lower>().solve(rhs);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd SpdMatrix::inverse() const {
  return solve(Eigen::MatrixXd::Identity(dim(), dim()));
}

SpdMatrix SpdMatrix::inverse_spd() const { return SpdMatrix(inverse()); }

WishartPrior::WishartPrior(SpdMatrix v, double nu) : scale(std::move(v)), dof(nu) {
  if (!(dof > scale.dim() - 1)) {
    throw ImproperPrior("Wishart prior requires dof > d-1; got dof=" + std::to_string(dof) +
                        " with d=" + std::to_string(scale.dim()));
  }
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const SpdMatrix& cov) {
  if (x.size() != mean.size() || x.size() != cov.dim()) {
    throw DimError("mvn_logpdf: dimension mismatch");
  }
  const Eigen::VectorXd r = x - mean;
  const Eigen::VectorXd w = cov.chol().triangularView<Eigen::Lower>().solve(r);
  const double q = w.squaredNorm();
  const double n = static_cast<double>(x.size());
  return -0.5 * (q + cov.logdet() + n * std::log(2.0 * std::numbers::pi));
}

double matnorm_logpdf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& m, const SpdMatrix& a,
                      const SpdMatrix& b) {
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  if (m.rows() != d || m.cols() != n || a.dim() != n || b.dim() != d) {
    throw DimError("matnorm_logpdf: dimension mismatch");
  }
  // tr[A^-1 (X-M)^T B^-1 (X-M)] via triangular solves against both factors:
  // W = L_b^-1 (X-M) L_a^-T has squared Frobenius norm equal to the trace.
  const Eigen::MatrixXd r = x - m;
  const Eigen::MatrixXd lb_inv_r = b.chol().triangularView<Eigen::Lower>().solve(r);
  const Eigen::MatrixXd w =
      a.chol().triangularView<Eigen::Lower>().solve(lb_inv_r.transpose());
  const double q = w.squaredNorm();
  const double nd = static_cast<double>(n * d);
  return -0.5 * (q + nd * std::log(2.0 * std::numbers::pi)) -
         0.5 * static_cast<double>(d) * a.logdet() - 0.5 * static_cast<double>(n) * b.logdet();
}

Eigen::MatrixXd sample_matnorm(const Eigen::MatrixXd& m, const SpdMatrix& a, const SpdMatrix& b,
                               Rng& rng) {
  const Eigen::Index d = m.rows();
  const Eigen::Index n = m.cols();
  if (a.dim() != n || b.dim() != d) {
    throw DimError("sample_matnorm: dimension mismatch");
  }
  Eigen::MatrixXd g(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      g(i, j) = rng.normal();
    }
  }
  return m + b.chol() * g * a.chol().transpose();
}

SpdMatrix sample_wishart(const WishartPrior& prior, Rng& rng) {
  const int d = prior.scale.dim();
  Eigen::MatrixXd bart = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    bart(i, i) = std::sqrt(rng.chi_squared(prior.dof - i));
    for (int j = 0; j < i; ++j) {
      bart(i, j) = rng.normal();
    }
  }
  const Eigen::MatrixXd la = prior.scale.chol() * bart;
  return SpdMatrix(la * la.transpose());
}

SpdMatrix sample_inverse_wishart(const WishartPrior& prior, Rng& rng) {
  return sample_wishart(prior, rng).inverse_spd();
}

ConditionalMvn conditional_mvn(const Eigen::VectorXd& mu, const SpdMatrix& h,
                               const std::vector<int>& observed_idx,
                               const Eigen::VectorXd& y_obs) {
  const int q = h.dim();
  if (mu.size() != q) throw DimError("conditional_mvn: mean/covariance dimension mismatch");
  if (static_cast<Eigen::Index>(observed_idx.size()) != y_obs.size()) {
    throw DimError("conditional_mvn: observed index/value count mismatch");
  }
  std::vector<bool> is_obs(q, false);
  for (int idx : observed_idx) {
    if (idx < 0 || idx >= q) throw DimError("conditional_mvn: index out of range");
    is_obs[idx] = true;
  }
  std::vector<int> missing_idx;
  for (int i = 0; i < q; ++i) {
    if (!is_obs[i]) missing_idx.push_back(i);
  }
  if (observed_idx.empty() || missing_idx.empty()) {
    throw DimError("conditional_mvn: observed set must be a nonempty proper subset");
  }

  const int no = static_cast<int>(observed_idx.size());
  const int nm = static_cast<int>(missing_idx.size());
  Eigen::MatrixXd h_oo(no, no), h_mo(nm, no), h_mm(nm, nm);
  Eigen::VectorXd mu_o(no), mu_m(nm);
  for (int i = 0; i < no; ++i) {
    mu_o(i) = mu(observed_idx[i]);
    for (int j = 0; j < no; ++j) h_oo(i, j) = h.mat()(observed_idx[i], observed_idx[j]);
  }
  for (int i = 0; i < nm; ++i) {
    mu_m(i) = mu(missing_idx[i]);
    for (int j = 0; j < no; ++j) h_mo(i, j) = h.mat()(missing_idx[i], observed_idx[j]);
    for (int j = 0; j < nm; ++j) h_mm(i, j) = h.mat()(missing_idx[i], missing_idx[j]);
  }

  Eigen::LLT<Eigen::MatrixXd> llt(h_oo);
  if (llt.info() != Eigen::Success) {
    throw SingularBlock("conditional_mvn: observed block is singular");
  }
  ConditionalMvn out;
  out.mean = mu_m + h_mo * llt.solve(y_obs - mu_o);
  Eigen::MatrixXd cov = h_mm - h_mo * llt.solve(h_mo.transpose());
  out.cov = (cov + cov.transpose()) / 2.0;
  return out;
}

}  // namespace mvherit
