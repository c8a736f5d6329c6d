#include "mvherit/ingest.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mvherit/errors.hpp"
#include "mvherit/io_util.hpp"

namespace mvherit {

std::vector<double> PhenotypeMatrix::missing_fraction() const {
  std::vector<double> out(static_cast<std::size_t>(n_traits()), 0.0);
  for (Eigen::Index t = 0; t < n_traits(); ++t) {
    long miss = 0;
    for (Eigen::Index j = 0; j < n_samples(); ++j) {
      if (missing_mask(t, j)) ++miss;
    }
    out[static_cast<std::size_t>(t)] = static_cast<double>(miss) / static_cast<double>(n_samples());
  }
  return out;
}

GenotypeMatrix load_genotypes(const std::string& path, GenotypeFormat format) {
  (void)format;  // kDosage is the only format
  std::ifstream in(path);
  if (!in) throw IoError("cannot open genotype file: " + path);

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> masks;
  std::vector<std::string> snp_ids;
  Eigen::Index n = -1;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id)) continue;  // blank line
    std::vector<double> vals;
    std::vector<bool> mask;
    std::string tok;
    while (ls >> tok) {
      if (tok == "NA") {
        vals.push_back(0.0);
        mask.push_back(true);
      } else if (tok == "0" || tok == "1" || tok == "2") {
        vals.push_back(static_cast<double>(tok[0] - '0'));
        mask.push_back(false);
      } else {
        throw ParseError("genotype token '" + tok + "' is not one of {0,1,2,NA}", line_no);
      }
    }
    if (n < 0) {
      n = static_cast<Eigen::Index>(vals.size());
      if (n == 0) throw ParseError("SNP row has no dosage fields", line_no);
    } else if (static_cast<Eigen::Index>(vals.size()) != n) {
      throw ParseError("SNP row has " + std::to_string(vals.size()) + " dosages, expected " +
                           std::to_string(n),
                       line_no);
    }
    snp_ids.push_back(id);
    rows.push_back(std::move(vals));
    masks.push_back(std::move(mask));
  }
  if (rows.empty()) throw EmptyInput("genotype file has no data rows: " + path);

  GenotypeMatrix g;
  const Eigen::Index p = static_cast<Eigen::Index>(rows.size());
  g.values.resize(p, n);
  g.missing_mask.resize(p, n);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      g.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      g.missing_mask(i, j) = masks[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  g.snp_ids = std::move(snp_ids);
  g.sample_ids.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) g.sample_ids.push_back("s" + std::to_string(j + 1));
  return g;
}

void save_genotypes(const std::string& path, const GenotypeMatrix& g) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write genotype file: " + path);
  for (Eigen::Index i = 0; i < g.n_snps(); ++i) {
    out << g.snp_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < g.n_samples(); ++j) {
      out << ' ';
      if (g.missing_mask(i, j)) {
        out << "NA";
      } else {
        out << static_cast<int>(g.values(i, j));
      }
    }
    out << '\n';
  }
}

GenotypeMatrix impute_genotype_means(const GenotypeMatrix& g) {
  GenotypeMatrix out = g;
  for (Eigen::Index i = 0; i < g.n_snps(); ++i) {
    double sum = 0.0;
    long obs = 0;
    for (Eigen::Index j = 0; j < g.n_samples(); ++j) {
      if (!g.missing_mask(i, j)) {
        sum += g.values(i, j);
        ++obs;
      }
    }
    if (obs == 0) {
      throw DegenerateSnp("SNP " + g.snp_ids[static_cast<std::size_t>(i)] +
                          " has no observed genotypes");
    }
    const double mean = sum / static_cast<double>(obs);
    for (Eigen::Index j = 0; j < g.n_samples(); ++j) {
      if (g.missing_mask(i, j)) out.values(i, j) = mean;
    }
  }
  out.missing_mask.setConstant(false);
  return out;
}

GenotypeMatrix standardize(const GenotypeMatrix& g) {
  if (g.has_missing()) {
    throw MissingData("standardize requires complete genotypes; run impute_genotype_means first");
  }
  const double n = static_cast<double>(g.n_samples());
  GenotypeMatrix out = g;
  std::string degenerate;
  for (Eigen::Index i = 0; i < g.n_snps(); ++i) {
    const double mean = g.values.row(i).mean();
    const double var = (g.values.row(i).array() - mean).square().sum() / n;
    if (var <= 0.0) {
      if (!degenerate.empty()) degenerate += ", ";
      degenerate += g.snp_ids[static_cast<std::size_t>(i)];
      continue;
    }
    out.values.row(i) = (g.values.row(i).array() - mean) / std::sqrt(var);
  }
  if (!degenerate.empty()) {
    throw DegenerateSnp("zero-variance SNP rows: " + degenerate);
  }
  return out;
}

std::pair<GenotypeMatrix, std::vector<std::string>> drop_degenerate_snps(const GenotypeMatrix& g) {
  std::vector<Eigen::Index> keep;
  std::vector<std::string> dropped;
  for (Eigen::Index i = 0; i < g.n_snps(); ++i) {
    double sum = 0.0, sum2 = 0.0;
    long obs = 0;
    for (Eigen::Index j = 0; j < g.n_samples(); ++j) {
      if (!g.missing_mask(i, j)) {
        sum += g.values(i, j);
        sum2 += g.values(i, j) * g.values(i, j);
        ++obs;
      }
    }
    const bool all_missing = (obs == 0);
    const bool monomorphic =
        !all_missing && (sum2 / obs - (sum / obs) * (sum / obs)) <= 0.0;
    if (all_missing || monomorphic) {
      dropped.push_back(g.snp_ids[static_cast<std::size_t>(i)]);
    } else {
      keep.push_back(i);
    }
  }
  GenotypeMatrix out;
  out.values.resize(static_cast<Eigen::Index>(keep.size()), g.n_samples());
  out.missing_mask.resize(static_cast<Eigen::Index>(keep.size()), g.n_samples());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = g.values.row(keep[r]);
    out.missing_mask.row(static_cast<Eigen::Index>(r)) = g.missing_mask.row(keep[r]);
    out.snp_ids.push_back(g.snp_ids[static_cast<std::size_t>(keep[r])]);
  }
  out.sample_ids = g.sample_ids;
  return {std::move(out), std::move(dropped)};
}

PhenotypeMatrix load_phenotypes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open phenotype file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw EmptyInput("phenotype file is empty: " + path);
  std::vector<std::string> header = split_fields(line, '\t');
  if (header.size() < 2) {
    throw ParseError("phenotype header needs a sample-id column and at least one trait", 1);
  }
  const std::size_t d = header.size() - 1;

  std::vector<std::string> sample_ids;
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> masks;
  std::set<std::string> seen;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f = split_fields(line, '\t');
    if (f.size() != header.size()) {
      throw ParseError("row has " + std::to_string(f.size()) + " fields, expected " +
                           std::to_string(header.size()),
                       line_no);
    }
    if (!seen.insert(f[0]).second) {
      throw DuplicateSample("duplicate sample id '" + f[0] + "' in " + path);
    }
    sample_ids.push_back(f[0]);
    std::vector<double> vals(d, 0.0);
    std::vector<bool> mask(d, false);
    for (std::size_t t = 0; t < d; ++t) {
      const std::string& tok = f[t + 1];
      if (tok == "NA") {
        mask[t] = true;
      } else {
        try {
          std::size_t pos = 0;
          vals[t] = std::stod(tok, &pos);
          if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw ParseError("non-numeric phenotype token '" + tok + "'", line_no);
        }
      }
    }
    rows.push_back(std::move(vals));
    masks.push_back(std::move(mask));
  }
  if (rows.empty()) throw EmptyInput("phenotype file has no data rows: " + path);

  PhenotypeMatrix y;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  y.values.resize(static_cast<Eigen::Index>(d), n);
  y.missing_mask.resize(static_cast<Eigen::Index>(d), n);
  y.imputed_mask = BoolMatrix::Constant(static_cast<Eigen::Index>(d), n, false);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(d); ++t) {
      y.values(t, j) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
      y.missing_mask(t, j) = masks[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
    }
  }
  y.trait_ids.assign(header.begin() + 1, header.end());
  y.sample_ids = std::move(sample_ids);
  return y;
}

void save_phenotypes(const std::string& path, const PhenotypeMatrix& y) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write phenotype file: " + path);
  out << "sample_id";
  for (const auto& t : y.trait_ids) out << '\t' << t;
  out << '\n';
  for (Eigen::Index j = 0; j < y.n_samples(); ++j) {
    out << y.sample_ids[static_cast<std::size_t>(j)];
    for (Eigen::Index t = 0; t < y.n_traits(); ++t) {
      out << '\t';
      if (y.missing_mask(t, j)) {
        out << "NA";
      } else {
        out << format_double(y.values(t, j));
      }
    }
    out << '\n';
  }
}

PhenotypeMatrix subset_samples(const PhenotypeMatrix& y, const std::vector<int>& idx) {
  PhenotypeMatrix out;
  const Eigen::Index d = y.n_traits();
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  const bool has_missing_mask = y.missing_mask.size() != 0;
  const bool has_imputed_mask = y.imputed_mask.size() != 0;
  out.values.resize(d, m);
  out.missing_mask = BoolMatrix::Constant(d, m, false);
  out.imputed_mask = BoolMatrix::Constant(d, m, false);
  for (Eigen::Index j = 0; j < m; ++j) {
    const int src = idx[static_cast<std::size_t>(j)];
    if (src < 0 || src >= y.n_samples()) throw DimError("sample index out of range");
    out.values.col(j) = y.values.col(src);
    if (has_missing_mask) out.missing_mask.col(j) = y.missing_mask.col(src);
    if (has_imputed_mask) out.imputed_mask.col(j) = y.imputed_mask.col(src);
    if (!y.sample_ids.empty()) {
      out.sample_ids.push_back(y.sample_ids[static_cast<std::size_t>(src)]);
    }
  }
  out.trait_ids = y.trait_ids;
  return out;
}

}  // namespace mvherit
