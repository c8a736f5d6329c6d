#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mvherit/rng.hpp"

namespace mvherit {

// Symmetric positive-definite matrix with a cached lower Cholesky factor.
// Construction validates symmetry (1e-10 relative) and strict positive
// definiteness; all solves go through the factor.
class SpdMatrix {
 public:
  explicit SpdMatrix(Eigen::MatrixXd m);
  static SpdMatrix identity(int d);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& mat() const { return m_; }
  const Eigen::MatrixXd& chol() const { return chol_; }  // lower triangular L, L*L^T = m

  double logdet() const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  // Explicit inverse; intended for small (trait-dimension) matrices only.
  Eigen::MatrixXd inverse() const;
  SpdMatrix inverse_spd() const;

 private:
  Eigen::MatrixXd m_;
  Eigen::MatrixXd chol_;
};

// Wishart prior W_d(V, nu) on a precision matrix; proper iff nu > d-1.
struct WishartPrior {
  SpdMatrix scale;
  double dof;

  WishartPrior(SpdMatrix v, double nu);
};

// Kronecker product, block (i,j) = a(i,j) * b.
Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Multivariate normal log-density at x.
double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const SpdMatrix& cov);

// Matrix normal log-density of the d-by-n matrix x with mean m, column
// covariance a (n-by-n, across columns) and row covariance b (d-by-d).
// Equals the nd-dimensional normal log-density of vec(x) with covariance
// kron(a, b), columns stacked.
double matnorm_logpdf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& m, const SpdMatrix& a,
                      const SpdMatrix& b);

// Draw from MN(m, a, b) via the two-sided Cholesky construction
// m + L_b * G * L_a^T with G iid standard normal.
Eigen::MatrixXd sample_matnorm(const Eigen::MatrixXd& m, const SpdMatrix& a, const SpdMatrix& b,
                               Rng& rng);

// Bartlett-decomposition Wishart draw; E[W] = nu * V.
SpdMatrix sample_wishart(const WishartPrior& prior, Rng& rng);

// Inverse of a Wishart(V, nu) draw. This is the distribution of a covariance
// matrix whose precision has the W_d(V, nu) prior, i.e. inverse-Wishart with
// scale V^-1 in the usual parameterization.
SpdMatrix sample_inverse_wishart(const WishartPrior& prior, Rng& rng);

struct ConditionalMvn {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Condition N_q(mu, h) on y_obs at positions observed_idx; returns the
// conditional mean and covariance of the remaining coordinates (in
// ascending index order).
ConditionalMvn conditional_mvn(const Eigen::VectorXd& mu, const SpdMatrix& h,
                               const std::vector<int>& observed_idx,
                               const Eigen::VectorXd& y_obs);

}  // namespace mvherit
