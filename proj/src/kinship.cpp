#include "mvherit/kinship.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mvherit/errors.hpp"
#include "mvherit/io_util.hpp"

namespace mvherit {

namespace {

constexpr Eigen::Index kSnpBlock = 512;

// Canonical eigenvector sign: first non-negligible component positive.
void fix_eigvec_signs(Eigen::MatrixXd& u) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    const double mag = u.col(c).cwiseAbs().maxCoeff();
    if (mag == 0.0) continue;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      if (std::abs(u(i, c)) > 1e-12 * mag) {
        if (u(i, c) < 0.0) u.col(c) = -u.col(c);
        break;
      }
    }
  }
}

// Decompose symmetric k; sort descending, clip round-off negatives at 0.
// Negative eigenvalues beyond tolerance indicate a broken input matrix.
void decompose(const Eigen::MatrixXd& k, Eigen::MatrixXd& eigvecs, Eigen::VectorXd& eigvals) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  if (es.info() != Eigen::Success) {
    throw NumericalBreakdown("kinship eigendecomposition failed");
  }
  const Eigen::Index n = k.rows();
  eigvals.resize(n);
  eigvecs.resize(n, n);
  // solver returns ascending order
  for (Eigen::Index i = 0; i < n; ++i) {
    eigvals(i) = es.eigenvalues()(n - 1 - i);
    eigvecs.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  const double max_eig = std::max(eigvals.maxCoeff(), 0.0);
  const double min_eig = eigvals.minCoeff();
  if (min_eig < -1e-8 * std::max(max_eig, 1.0)) {
    std::ostringstream msg;
    msg << "kinship matrix has eigenvalue " << min_eig << " below -1e-8*lambda_max (lambda_max="
        << max_eig << "); input is not positive semidefinite";
    throw NumericalBreakdown(msg.str());
  }
  eigvals = eigvals.cwiseMax(0.0);
  fix_eigvec_signs(eigvecs);
}

}  // namespace

SpectralKinship compute_kinship(const GenotypeMatrix& z) {
  if (z.has_missing()) throw NotStandardized("genotypes contain missing values");
  const Eigen::Index p = z.n_snps();
  const Eigen::Index n = z.n_samples();
  if (p < 1) throw EmptyInput("kinship needs at least one SNP");

  const double nd = static_cast<double>(n);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double mean = z.values.row(i).mean();
    const double var = (z.values.row(i).array() - mean).square().sum() / nd;
    if (std::abs(mean) > 1e-6 || std::abs(var - 1.0) > 1e-6) {
      throw NotStandardized("SNP row " + z.snp_ids[static_cast<std::size_t>(i)] +
                            " is not standardized (mean=" + std::to_string(mean) +
                            ", var=" + std::to_string(var) + ")");
    }
  }

  SpectralKinship sk;
  sk.k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index start = 0; start < p; start += kSnpBlock) {
    const Eigen::Index rows = std::min(kSnpBlock, p - start);
    const auto block = z.values.middleRows(start, rows);
    sk.k.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose(), 1.0);
  }
  sk.k = sk.k.selfadjointView<Eigen::Lower>();
  sk.k /= static_cast<double>(p);

  decompose(sk.k, sk.eigvecs, sk.eigvals);
  sk.scale = 1.0;
  sk.sample_ids = z.sample_ids;
  return sk;
}

SpectralKinship kinship_from_matrix(Eigen::MatrixXd k, std::vector<std::string> sample_ids,
                                    double scale) {
  if (k.rows() != k.cols()) throw DimError("kinship matrix must be square");
  const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(1.0, k.cwiseAbs().maxCoeff())) {
    throw NotStandardized("kinship matrix is not symmetric");
  }
  SpectralKinship sk;
  sk.k = ((k + k.transpose()) / 2.0).eval();
  decompose(sk.k, sk.eigvecs, sk.eigvals);
  sk.scale = scale;
  sk.sample_ids = std::move(sample_ids);
  if (sk.sample_ids.empty()) {
    for (Eigen::Index j = 0; j < sk.k.rows(); ++j) {
      sk.sample_ids.push_back("s" + std::to_string(j + 1));
    }
  }
  if (static_cast<Eigen::Index>(sk.sample_ids.size()) != sk.k.rows()) {
    throw DimError("sample id count does not match kinship dimension");
  }
  return sk;
}

SpectralKinship rescale_kinship(const SpectralKinship& sk, double sigma2_beta) {
  if (!(sigma2_beta > 0.0)) {
    throw InvalidScale("kinship rescale factor must be positive, got " +
                       std::to_string(sigma2_beta));
  }
  SpectralKinship out = sk;
  out.k *= sigma2_beta;
  out.eigvals *= sigma2_beta;
  out.scale = sk.scale * sigma2_beta;
  return out;
}

SpectralKinship kinship_submatrix(const SpectralKinship& sk, const std::vector<int>& idx) {
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(m, m);
  std::vector<std::string> ids;
  ids.reserve(idx.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      sub(i, j) = sk.k(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    ids.push_back(sk.sample_ids[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  }
  return kinship_from_matrix(std::move(sub), std::move(ids), sk.scale);
}

void write_kinship(const std::string& dir, const SpectralKinship& sk) {
  ensure_dir(dir);
  write_matrix_tsv(dir + "/K.tsv", sk.k, sk.sample_ids, {});

  std::ofstream out(dir + "/K.eigen.tsv");
  if (!out) throw IoError("cannot write " + dir + "/K.eigen.tsv");
  for (Eigen::Index i = 0; i < sk.eigvals.size(); ++i) {
    if (i) out << '\t';
    out << format_double(sk.eigvals(i));
  }
  out << '\n';
  for (Eigen::Index r = 0; r < sk.eigvecs.rows(); ++r) {
    for (Eigen::Index c = 0; c < sk.eigvecs.cols(); ++c) {
      if (c) out << '\t';
      out << format_double(sk.eigvecs(r, c));
    }
    out << '\n';
  }
}

SpectralKinship read_kinship(const std::string& dir) {
  std::ifstream kin(dir + "/K.tsv");
  if (!kin) throw IoError("cannot open " + dir + "/K.tsv");
  std::string line;
  if (!std::getline(kin, line)) throw EmptyInput("empty kinship file");
  std::vector<std::string> ids = split_fields(line, '\t');
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(kin, line)) throw ParseError("kinship matrix truncated", i + 2);
    std::vector<std::string> f = split_fields(line, '\t');
    if (static_cast<Eigen::Index>(f.size()) != n) {
      throw ParseError("kinship row has wrong field count", i + 2);
    }
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = std::stod(f[static_cast<std::size_t>(j)]);
  }

  std::ifstream ein(dir + "/K.eigen.tsv");
  if (!ein) {
    // eigen file optional; re-decompose
    return kinship_from_matrix(std::move(k), std::move(ids));
  }
  SpectralKinship sk;
  sk.k = std::move(k);
  sk.sample_ids = std::move(ids);
  sk.scale = 1.0;
  if (!std::getline(ein, line)) throw EmptyInput("empty eigen file");
  std::vector<std::string> f = split_fields(line, '\t');
  if (static_cast<Eigen::Index>(f.size()) != n) throw ParseError("eigenvalue count mismatch", 1);
  sk.eigvals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) sk.eigvals(i) = std::stod(f[static_cast<std::size_t>(i)]);
  sk.eigvecs.resize(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!std::getline(ein, line)) throw ParseError("eigenvector matrix truncated", r + 2);
    f = split_fields(line, '\t');
    if (static_cast<Eigen::Index>(f.size()) != n) {
      throw ParseError("eigenvector row has wrong field count", r + 2);
    }
    for (Eigen::Index c = 0; c < n; ++c) sk.eigvecs(r, c) = std::stod(f[static_cast<std::size_t>(c)]);
  }
  return sk;
}

}  // namespace mvherit
