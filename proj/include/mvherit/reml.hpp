#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mvherit/kinship.hpp"

namespace mvherit {

// Single-trait maximum-likelihood baseline. In the kinship eigenbasis each
// observation is independent with variance sigma2_total * (h2 * r_j + 1 - h2),
// so the coefficients and the total variance profile out in closed form and
// only h2 needs a one-dimensional search.

struct UnivariateFit {
  double h2 = 0.0;
  double se_h2 = 0.0;      // from the curvature of the profile log-likelihood
  double sigma_g2 = 0.0;   // genetic variance, h2 * total
  double sigma_e2 = 0.0;   // environmental variance, (1 - h2) * total
  Eigen::VectorXd beta;    // one entry per covariate
  double loglik = 0.0;     // profile log-likelihood at the optimum
  bool boundary = false;   // h2 within 1e-6 of 0 or 1; se_h2 is NaN
  bool non_identifiable = false;  // kinship eigenvalues all equal; h2 is NaN
};

// Profile log-likelihood at a fixed h2 (coefficients and total variance
// maximized out). -inf when some variance weight is non-positive.
double univariate_profile_loglik(const Eigen::VectorXd& y_row, const Eigen::MatrixXd& x,
                                 const SpectralKinship& sk, double h2);

// 100-point grid on [0, 1] then golden-section refinement to 1e-8.
UnivariateFit univariate_ml(const Eigen::VectorXd& y_row, const Eigen::MatrixXd& x,
                            const SpectralKinship& sk);

}  // namespace mvherit
