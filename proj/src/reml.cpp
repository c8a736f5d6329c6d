#include "mvherit/reml.hpp"

#include <cmath>
#include <limits>

#include "mvherit/errors.hpp"

namespace mvherit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct ProfileFit {
  double loglik = kNegInf;
  double sigma2 = 0.0;
  Eigen::VectorXd beta;
};

ProfileFit profile_at(const Eigen::VectorXd& y_tilde, const Eigen::MatrixXd& x_tilde,
                      const Eigen::VectorXd& eigvals, double h2) {
  const auto n = static_cast<double>(y_tilde.size());
  const Eigen::ArrayXd w = h2 * eigvals.array() + (1.0 - h2);
  ProfileFit fit;
  if ((w <= 0.0).any()) return fit;
  const Eigen::ArrayXd u = w.inverse();

  // weighted least squares for the coefficients
  const Eigen::MatrixXd xu = x_tilde * u.matrix().asDiagonal();
  const Eigen::MatrixXd a = xu * x_tilde.transpose();
  fit.beta = a.ldlt().solve(xu * y_tilde);
  const Eigen::ArrayXd resid = (y_tilde - x_tilde.transpose() * fit.beta).array();
  fit.sigma2 = (u * resid.square()).sum() / n;
  if (fit.sigma2 <= 0.0) {
    fit.loglik = kNegInf;
    return fit;
  }
  fit.loglik = -0.5 * n * (std::log(2.0 * M_PI) + std::log(fit.sigma2) + 1.0) -
               0.5 * w.log().sum();
  return fit;
}

}  // namespace

double univariate_profile_loglik(const Eigen::VectorXd& y_row, const Eigen::MatrixXd& x,
                                 const SpectralKinship& sk, double h2) {
  if (h2 < 0.0 || h2 > 1.0) throw ValidationError("h2 must be in [0, 1]");
  const Eigen::VectorXd y_tilde = sk.eigvecs.transpose() * y_row;
  const Eigen::MatrixXd x_tilde = x * sk.eigvecs;
  return profile_at(y_tilde, x_tilde, sk.eigvals, h2).loglik;
}

UnivariateFit univariate_ml(const Eigen::VectorXd& y_row, const Eigen::MatrixXd& x,
                            const SpectralKinship& sk) {
  if (y_row.size() != sk.n()) throw DimError("trait length does not match kinship");
  if (x.cols() != sk.n()) throw DimError("covariate samples do not match kinship");
  if (y_row.size() < 3) throw InsufficientData("univariate fit needs at least 3 samples");

  const Eigen::VectorXd y_tilde = sk.eigvecs.transpose() * y_row;
  const Eigen::MatrixXd x_tilde = x * sk.eigvecs;
  const Eigen::VectorXd& r = sk.eigvals;
  auto ll = [&](double h) { return profile_at(y_tilde, x_tilde, r, h).loglik; };

  UnivariateFit out;
  const double spread = r.maxCoeff() - r.minCoeff();
  if (spread < 1e-10 * std::max(1.0, r.maxCoeff())) {
    // all variance weights coincide up to scale: the likelihood is flat in h2
    const ProfileFit flat = profile_at(y_tilde, x_tilde, r, 0.0);
    out.h2 = kNan;
    out.se_h2 = kNan;
    out.sigma_g2 = kNan;  // only the total variance is identified
    out.sigma_e2 = kNan;
    out.beta = flat.beta;
    out.loglik = flat.loglik;
    out.non_identifiable = true;
    return out;
  }

  constexpr int kGrid = 100;
  int best = 0;
  double best_ll = kNegInf;
  for (int i = 0; i < kGrid; ++i) {
    const double h = static_cast<double>(i) / (kGrid - 1);
    const double v = ll(h);
    if (v > best_ll) {
      best_ll = v;
      best = i;
    }
  }
  double a = static_cast<double>(std::max(0, best - 1)) / (kGrid - 1);
  double b = static_cast<double>(std::min(kGrid - 1, best + 1)) / (kGrid - 1);

  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = ll(x1);
  double f2 = ll(x2);
  while (b - a > 1e-8) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = ll(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = ll(x1);
    }
  }
  const double h_hat = 0.5 * (a + b);
  const ProfileFit fit = profile_at(y_tilde, x_tilde, r, h_hat);

  out.h2 = h_hat;
  out.sigma_g2 = h_hat * fit.sigma2;
  out.sigma_e2 = (1.0 - h_hat) * fit.sigma2;
  out.beta = fit.beta;
  out.loglik = fit.loglik;
  if (h_hat <= 1e-6 || h_hat >= 1.0 - 1e-6) {
    out.boundary = true;
    out.se_h2 = kNan;
    return out;
  }
  const double eps = 1e-4;
  const double curv = (ll(h_hat + eps) - 2.0 * fit.loglik + ll(h_hat - eps)) / (eps * eps);
  out.se_h2 = curv < 0.0 ? 1.0 / std::sqrt(-curv) : kNan;
  return out;
}

}  // namespace mvherit
