#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mvherit/ingest.hpp"

namespace mvherit {

// Relatedness matrix K together with its spectral decomposition
// K = U diag(r) U^T, eigenvalues descending. Immutable after construction;
// safe to share across threads.
struct SpectralKinship {
  Eigen::MatrixXd k;        // n-by-n symmetric
  Eigen::MatrixXd eigvecs;  // columns are eigenvectors, orthonormal
  Eigen::VectorXd eigvals;  // nonnegative, descending
  double scale = 1.0;       // multiplier applied to the base Z^T Z / p matrix
  std::vector<std::string> sample_ids;

  Eigen::Index n() const { return k.rows(); }
};

// K = Z^T Z / p from standardized genotypes, accumulated in SNP blocks so
// peak memory stays O(n^2) + block. Rejects non-standardized input.
SpectralKinship compute_kinship(const GenotypeMatrix& z);

// Eigendecomposes an externally supplied kinship matrix (file readback,
// fold submatrices). Negative round-off eigenvalues are clipped at zero.
SpectralKinship kinship_from_matrix(Eigen::MatrixXd k, std::vector<std::string> sample_ids,
                                    double scale = 1.0);

// K -> sigma2_beta * K; eigenvectors unchanged, eigenvalues scaled.
SpectralKinship rescale_kinship(const SpectralKinship& sk, double sigma2_beta);

// Principal submatrix for the listed samples, re-decomposed.
SpectralKinship kinship_submatrix(const SpectralKinship& sk, const std::vector<int>& idx);

// K.tsv (matrix with sample-id header) and K.eigen.tsv (first row the
// eigenvalues, then U one eigenvector per column).
void write_kinship(const std::string& dir, const SpectralKinship& sk);
SpectralKinship read_kinship(const std::string& dir);

}  // namespace mvherit
