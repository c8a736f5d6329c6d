#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mvherit {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class GenotypeFormat { kDosage };

// p-by-n SNP dosage matrix. The mask is authoritative for missingness;
// masked cells carry no meaningful numeric value.
struct GenotypeMatrix {
  Eigen::MatrixXd values;
  BoolMatrix missing_mask;
  std::vector<std::string> snp_ids;
  std::vector<std::string> sample_ids;

  Eigen::Index n_snps() const { return values.rows(); }
  Eigen::Index n_samples() const { return values.cols(); }
  bool has_missing() const { return missing_mask.any(); }
};

// d-by-n trait matrix; the analysis assumes quantile-normalized traits.
struct PhenotypeMatrix {
  Eigen::MatrixXd values;
  BoolMatrix missing_mask;
  std::vector<std::string> trait_ids;
  std::vector<std::string> sample_ids;
  // set by impute_phenotypes: true where a value was filled in by BLUP
  BoolMatrix imputed_mask;

  Eigen::Index n_traits() const { return values.rows(); }
  Eigen::Index n_samples() const { return values.cols(); }
  bool has_missing() const { return missing_mask.any(); }
  std::vector<double> missing_fraction() const;
};

// Whitespace-delimited text, one SNP per row: snp_id then n dosage tokens,
// each in {0, 1, 2, NA}. The first row fixes n.
GenotypeMatrix load_genotypes(const std::string& path, GenotypeFormat format);
void save_genotypes(const std::string& path, const GenotypeMatrix& g);

// Replaces masked entries by the mean of the observed entries in their row
// and clears the mask. A fully-missing row is an error.
GenotypeMatrix impute_genotype_means(const GenotypeMatrix& g);

// Centers and scales every SNP row to mean 0, variance 1, with the
// population variance convention (divisor n). That convention makes
// trace(Z^T Z / p) = n exact, which downstream kinship relies on.
GenotypeMatrix standardize(const GenotypeMatrix& g);

// Splits off rows that standardize cannot handle (zero variance after
// imputation, or fully missing). Returns the kept matrix plus the ids of
// dropped SNPs. Pipeline-level alternative to the strict errors.
std::pair<GenotypeMatrix, std::vector<std::string>> drop_degenerate_snps(const GenotypeMatrix& g);

// TSV with a header line: sample_id column then one column per trait.
// One sample per row; NA marks missing.
PhenotypeMatrix load_phenotypes(const std::string& path);
void save_phenotypes(const std::string& path, const PhenotypeMatrix& y);

// Keep only the listed sample columns (in the given order).
PhenotypeMatrix subset_samples(const PhenotypeMatrix& y, const std::vector<int>& idx);

}  // namespace mvherit
