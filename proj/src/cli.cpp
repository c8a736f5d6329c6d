#include "mvherit/cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"
#include "mvherit/errors.hpp"
#include "mvherit/gibbs.hpp"
#include "mvherit/ingest.hpp"
#include "mvherit/io_util.hpp"
#include "mvherit/kinship.hpp"
#include "mvherit/posterior.hpp"
#include "mvherit/predict.hpp"
#include "mvherit/priorsim.hpp"
#include "mvherit/reml.hpp"
#include "mvherit/simulate.hpp"

namespace mvherit {

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<int> match_sample_ids(const std::vector<std::string>& want,
                                  const std::vector<std::string>& have,
                                  const std::string& what) {
  std::unordered_map<std::string, int> pos;
  for (std::size_t i = 0; i < have.size(); ++i) pos.emplace(have[i], static_cast<int>(i));
  std::vector<int> idx;
  idx.reserve(want.size());
  for (const auto& id : want) {
    auto it = pos.find(id);
    if (it == pos.end()) throw ValidationError(what + " is missing sample " + id);
    idx.push_back(it->second);
  }
  return idx;
}

// Reorders phenotype columns to the kinship sample order.
PhenotypeMatrix align_phenotypes(const PhenotypeMatrix& y, const SpectralKinship& sk) {
  return subset_samples(y, match_sample_ids(sk.sample_ids, y.sample_ids, "phenotype file"));
}

struct CovarSet {
  Eigen::MatrixXd x;  // k-by-n
  std::vector<std::string> ids;
};

// Intercept row plus optional covariate file columns, aligned to sample_ids.
CovarSet build_covariates(const std::string& covar_path, bool intercept,
                          const std::vector<std::string>& sample_ids) {
  const int n = static_cast<int>(sample_ids.size());
  CovarSet out;
  int k = intercept ? 1 : 0;
  PhenotypeMatrix c;
  if (!covar_path.empty()) {
    c = load_phenotypes(covar_path);
    if (c.has_missing()) throw MissingData("covariate file must be complete");
    c = subset_samples(c, match_sample_ids(sample_ids, c.sample_ids, "covariate file"));
    k += static_cast<int>(c.n_traits());
  }
  if (k == 0) throw ValidationError("model needs an intercept or at least one covariate");
  out.x.resize(k, n);
  int row = 0;
  if (intercept) {
    out.x.row(0).setOnes();
    out.ids.push_back("intercept");
    row = 1;
  }
  if (!covar_path.empty()) {
    out.x.bottomRows(k - row) = c.values;
    out.ids.insert(out.ids.end(), c.trait_ids.begin(), c.trait_ids.end());
  }
  return out;
}

// Whitespace-delimited square numeric matrix, no headers.
Eigen::MatrixXd read_square_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged matrix row in " + path, lineno);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyInput("empty matrix file " + path);
  if (rows.size() != rows.front().size()) {
    throw ValidationError("matrix in " + path + " is not square");
  }
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_array() || j.empty()) throw IoError("malformed matrix in model file");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw IoError("ragged matrix in model file");
    }
    for (Eigen::Index jx = 0; jx < cols; ++jx) m(i, jx) = row.at(static_cast<std::size_t>(jx));
  }
  return m;
}

struct StoredModel {
  Eigen::MatrixXd beta;
  Eigen::MatrixXd sigma_g;
  Eigen::MatrixXd sigma_e;
  std::vector<std::string> trait_ids;
  std::vector<std::string> covariate_ids;
  std::string kinship_dir;
};

void write_model(const std::string& dir, const StoredModel& m) {
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["trait_ids"] = m.trait_ids;
  j["covariate_ids"] = m.covariate_ids;
  j["kinship_dir"] = m.kinship_dir;
  j["beta"] = matrix_to_json(m.beta);
  j["sigma_g"] = matrix_to_json(m.sigma_g);
  j["sigma_e"] = matrix_to_json(m.sigma_e);
  std::ofstream out(dir + "/model.json");
  if (!out) throw IoError("cannot write model.json in " + dir);
  out << j.dump(2) << "\n";
}

StoredModel read_model(const std::string& dir) {
  const std::string path = dir + "/model.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed " + path + ": " + e.what());
  }
  StoredModel m;
  m.trait_ids = j.at("trait_ids").get<std::vector<std::string>>();
  m.covariate_ids = j.at("covariate_ids").get<std::vector<std::string>>();
  m.kinship_dir = j.at("kinship_dir").get<std::string>();
  m.beta = matrix_from_json(j.at("beta"));
  m.sigma_g = matrix_from_json(j.at("sigma_g"));
  m.sigma_e = matrix_from_json(j.at("sigma_e"));
  return m;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::string fmt_or_na(double v) { return std::isnan(v) ? "NA" : format_double(v); }

// ---------------------------------------------------------------- kinship

struct KinshipArgs {
  std::string geno;
  std::string out;
};

int run_kinship(const KinshipArgs& a) {
  GenotypeMatrix g = load_genotypes(a.geno, GenotypeFormat::kDosage);
  if (g.has_missing()) g = impute_genotype_means(g);
  auto [kept, dropped] = drop_degenerate_snps(g);
  if (!dropped.empty()) {
    std::cerr << "note: dropped " << dropped.size() << " zero-variance SNP(s)\n";
  }
  GenotypeMatrix z = standardize(kept);
  SpectralKinship sk = compute_kinship(z);
  ensure_dir(a.out);
  write_kinship(a.out, sk);
  write_manifest(a.out, "kinship", {{"geno", a.geno}, {"out", a.out}}, {a.geno});
  std::cout << "kinship: " << sk.n() << " samples, " << kept.n_snps() << " SNPs ("
            << dropped.size() << " dropped) -> " << a.out << "/K.tsv\n";
  return 0;
}

// -------------------------------------------------------------------- fit

struct FitArgs {
  std::string kinship;
  std::string phenos;
  std::string covar;
  std::string wishart_scale_file;
  std::string out;
  long iter = 35000;
  long burnin = 10000;
  int thin = 5;
  int chains = 3;
  std::uint64_t seed = 1;
  int threads = 0;
  double wishart_dof = 0.0;
  double coef_prior_var = 1e4;
  bool drop_incomplete = false;
  bool no_intercept = false;
  bool traces = false;
};

std::map<std::string, std::string> fit_flags(const FitArgs& a) {
  return {{"kinship", a.kinship},
          {"phenos", a.phenos},
          {"covar", a.covar},
          {"wishart-scale", a.wishart_scale_file},
          {"out", a.out},
          {"iter", std::to_string(a.iter)},
          {"burnin", std::to_string(a.burnin)},
          {"thin", std::to_string(a.thin)},
          {"chains", std::to_string(a.chains)},
          {"seed", std::to_string(a.seed)},
          {"threads", std::to_string(a.threads)},
          {"wishart-dof", format_double(a.wishart_dof)},
          {"coef-prior-var", format_double(a.coef_prior_var)},
          {"drop-incomplete", a.drop_incomplete ? "true" : "false"},
          {"no-intercept", a.no_intercept ? "true" : "false"},
          {"traces", a.traces ? "true" : "false"}};
}

int run_fit(const FitArgs& a) {
  SpectralKinship sk = read_kinship(a.kinship);
  PhenotypeMatrix y = align_phenotypes(load_phenotypes(a.phenos), sk);
  if (y.has_missing()) {
    if (!a.drop_incomplete) {
      throw MissingData(
          "phenotypes contain missing values; pass --drop-incomplete or impute first");
    }
    std::vector<int> keep;
    for (Eigen::Index j = 0; j < y.n_samples(); ++j) {
      if (!y.missing_mask.col(j).any()) keep.push_back(static_cast<int>(j));
    }
    const long n_dropped = static_cast<long>(y.n_samples()) - static_cast<long>(keep.size());
    if (n_dropped > 0) {
      std::cerr << "note: dropped " << n_dropped << " incomplete sample(s)\n";
      y = subset_samples(y, keep);
      sk = kinship_submatrix(sk, keep);
    }
  }
  CovarSet cov = build_covariates(a.covar, !a.no_intercept, y.sample_ids);

  GibbsConfig cfg;
  cfg.n_chains = a.chains;
  cfg.n_iter = a.iter;
  cfg.burn_in = a.burnin;
  cfg.thin = a.thin;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.wishart_dof = a.wishart_dof;
  cfg.coef_prior_variance = a.coef_prior_var;
  if (!a.wishart_scale_file.empty()) {
    cfg.wishart_scale_mode = WishartScaleMode::kUserMatrix;
    cfg.wishart_scale = read_square_matrix(a.wishart_scale_file);
  }

  PosteriorDraws draws = run_chains(y, cov.x, sk, cfg);

  ensure_dir(a.out);
  write_draws(a.out, draws);
  std::vector<ParameterSummary> summaries = summarize_draws(draws);
  std::vector<ParameterSummary> h2 = heritability_summaries(draws, y.trait_ids);
  summaries.insert(summaries.end(), h2.begin(), h2.end());
  write_summaries(a.out + "/summary.tsv", summaries);
  if (a.traces) export_traces(a.out, draws);

  PosteriorMeans pm = posterior_mean_estimates(draws);
  StoredModel model{pm.beta, pm.sigma_g, pm.sigma_e, y.trait_ids, cov.ids, a.kinship};
  write_model(a.out, model);

  std::vector<std::string> inputs = {a.kinship + "/K.tsv", a.kinship + "/K.eigen.tsv", a.phenos};
  if (!a.covar.empty()) inputs.push_back(a.covar);
  if (!a.wishart_scale_file.empty()) inputs.push_back(a.wishart_scale_file);
  write_manifest(a.out, "fit", fit_flags(a), inputs);

  std::cout << "fit: " << draws.chains.size() << " chain(s) x " << draws.kept_per_chain()
            << " kept draws\n";
  for (const auto& s : h2) {
    std::cout << "  " << s.name << ": mean " << format_double(s.mean) << ", sd "
              << format_double(s.sd) << ", 95% CI [" << format_double(s.q025) << ", "
              << format_double(s.q975) << "]\n";
  }
  bool mixing_flagged = false;
  for (const auto& s : summaries) {
    if (!std::isnan(s.psrf) && s.psrf > 1.1) {
      if (!mixing_flagged) {
        std::cerr << "warning: potential scale reduction above 1.1 for:";
        mixing_flagged = true;
      }
      std::cerr << ' ' << s.name;
    }
  }
  if (mixing_flagged) std::cerr << " (consider more iterations)\n";
  return 0;
}

// ------------------------------------------------------------------ herit

struct HeritArgs {
  std::string draws;
  std::string out;
  std::vector<std::string> traits;
  bool traces = false;
};

int run_herit(const HeritArgs& a) {
  PosteriorDraws draws = read_draws(a.draws);
  std::vector<std::string> trait_ids = a.traits;
  if (trait_ids.empty() && std::filesystem::exists(a.draws + "/model.json")) {
    trait_ids = read_model(a.draws).trait_ids;
  }
  if (!trait_ids.empty() && static_cast<int>(trait_ids.size()) != draws.d) {
    throw ValidationError("trait id count does not match the fitted trait dimension");
  }
  std::vector<ParameterSummary> h2 = heritability_summaries(draws, trait_ids);

  ensure_dir(a.out);
  std::ostringstream hs;
  hs << "trait\tmean\tsd\tnaive_se\tts_se\tq2.5\tq97.5\n";
  for (int i = 0; i < draws.d; ++i) {
    const auto& s = h2[static_cast<std::size_t>(i)];
    const std::string trait =
        trait_ids.empty() ? "t" + std::to_string(i + 1) : trait_ids[static_cast<std::size_t>(i)];
    hs << trait << '\t' << format_double(s.mean) << '\t' << format_double(s.sd) << '\t'
       << format_double(s.naive_se) << '\t' << format_double(s.timeseries_se) << '\t'
       << format_double(s.q025) << '\t' << format_double(s.q975) << '\n';
  }
  write_text_file(a.out + "/heritability.tsv", hs.str());

  std::vector<ParameterSummary> summaries = summarize_draws(draws);
  summaries.insert(summaries.end(), h2.begin(), h2.end());
  write_summaries(a.out + "/summary.tsv", summaries);
  if (a.traces) export_traces(a.out, draws);

  std::vector<std::string> inputs = {a.draws + "/draws_meta.json"};
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    inputs.push_back(a.draws + "/chain_" + std::to_string(c + 1) + ".csv");
  }
  std::map<std::string, std::string> flags = {{"draws", a.draws},
                                              {"out", a.out},
                                              {"traces", a.traces ? "true" : "false"}};
  write_manifest(a.out, "herit", flags, inputs);

  for (const auto& s : h2) {
    std::cout << s.name << ": mean " << format_double(s.mean) << ", 95% CI ["
              << format_double(s.q025) << ", " << format_double(s.q975) << "]\n";
  }
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::string phenos;
  std::string covar;
  std::string kinship;  // overrides the directory stored in the model
  std::string out;
  std::string path = "auto";
};

BlupPath parse_path(const std::string& s) {
  if (s == "auto") return BlupPath::kAuto;
  if (s == "dense") return BlupPath::kDense;
  if (s == "structured") return BlupPath::kStructured;
  if (s == "iterative") return BlupPath::kIterative;
  throw ValidationError("unknown solver path " + s);
}

int run_predict(const PredictArgs& a) {
  StoredModel m = read_model(a.model);
  const std::string kdir = a.kinship.empty() ? m.kinship_dir : a.kinship;
  SpectralKinship sk = read_kinship(kdir);
  PhenotypeMatrix y = align_phenotypes(load_phenotypes(a.phenos), sk);
  if (static_cast<int>(m.trait_ids.size()) != static_cast<int>(y.n_traits())) {
    throw DimError("phenotype file trait count does not match the model");
  }

  const bool intercept_only = m.covariate_ids.size() == 1 && m.covariate_ids[0] == "intercept";
  if (!intercept_only && a.covar.empty()) {
    throw ValidationError("model was fit with covariates; pass --covar");
  }
  const bool intercept =
      !m.covariate_ids.empty() && m.covariate_ids.front() == "intercept";
  CovarSet cov = build_covariates(a.covar, intercept, y.sample_ids);
  if (cov.ids != m.covariate_ids) {
    throw ValidationError("covariate columns do not match the ones the model was fit with");
  }

  BlupModel bm = make_blup_model(m.beta, SpdMatrix(m.sigma_g), SpdMatrix(m.sigma_e), sk, cov.x);
  const long n_masked = static_cast<long>(y.missing_mask.count());
  PhenotypeMatrix filled = impute_phenotypes(bm, y, parse_path(a.path));
  save_phenotypes(a.out, filled);

  std::map<std::string, std::string> flags = {{"model", a.model},   {"phenos", a.phenos},
                                              {"covar", a.covar},   {"kinship", a.kinship},
                                              {"out", a.out},       {"path", a.path}};
  std::vector<std::string> inputs = {a.model + "/model.json", kdir + "/K.tsv",
                                     kdir + "/K.eigen.tsv", a.phenos};
  if (!a.covar.empty()) inputs.push_back(a.covar);
  write_text_file(a.out + ".manifest.json", manifest_text("predict", flags, inputs));

  std::cout << "predict: filled " << n_masked << " masked entr"
            << (n_masked == 1 ? "y" : "ies") << " -> " << a.out << "\n";
  return 0;
}

// --------------------------------------------------------------------- cv

struct CvArgs {
  std::string kinship;
  std::string phenos;
  std::string covar;
  std::string out;
  int folds = 5;
  std::string estimator = "bayes";
  std::string impute = "drop";
  std::uint64_t seed = 1;
  int threads = 1;
  bool no_intercept = false;
  long iter = 2000;
  long burnin = 500;
  int thin = 5;
  int chains = 1;
};

int run_cv(const CvArgs& a) {
  SpectralKinship sk = read_kinship(a.kinship);
  PhenotypeMatrix y = align_phenotypes(load_phenotypes(a.phenos), sk);
  CovarSet cov = build_covariates(a.covar, !a.no_intercept, y.sample_ids);

  CvOptions opts;
  opts.folds = a.folds;
  opts.estimator = a.estimator == "reml" ? CvEstimator::kReml : CvEstimator::kBayes;
  opts.impute = a.impute == "blup" ? CvImpute::kBlup : CvImpute::kDrop;
  opts.seed = a.seed;
  opts.threads = a.threads;
  opts.gibbs.n_chains = a.chains;
  opts.gibbs.n_iter = a.iter;
  opts.gibbs.burn_in = a.burnin;
  opts.gibbs.thin = a.thin;
  opts.gibbs.threads = 1;

  CvReport rep = cross_validate(y, cov.x, sk, opts);

  std::ostringstream ts;
  ts << "trait\trmse\tcorr\n";
  for (Eigen::Index i = 0; i < y.n_traits(); ++i) {
    const std::string trait = y.trait_ids[static_cast<std::size_t>(i)];
    const bool def = rep.corr_defined[static_cast<std::size_t>(i)];
    ts << trait << '\t' << format_double(rep.rmse(i)) << '\t'
       << (def ? format_double(rep.corr(i)) : "NA") << '\n';
  }
  write_text_file(a.out, ts.str());

  std::map<std::string, std::string> flags = {
      {"kinship", a.kinship},     {"phenos", a.phenos},
      {"covar", a.covar},         {"out", a.out},
      {"folds", std::to_string(a.folds)},
      {"estimator", a.estimator}, {"impute", a.impute},
      {"seed", std::to_string(a.seed)},
      {"threads", std::to_string(a.threads)},
      {"iter", std::to_string(a.iter)},
      {"burnin", std::to_string(a.burnin)},
      {"thin", std::to_string(a.thin)},
      {"chains", std::to_string(a.chains)}};
  std::vector<std::string> inputs = {a.kinship + "/K.tsv", a.kinship + "/K.eigen.tsv", a.phenos};
  if (!a.covar.empty()) inputs.push_back(a.covar);
  write_text_file(a.out + ".manifest.json", manifest_text("cv", flags, inputs));

  std::cout << "cv: " << a.folds << " folds";
  for (std::size_t f = 0; f < rep.n_test.size(); ++f) {
    std::cout << (f == 0 ? " (test sizes " : ", ") << rep.n_test[f];
  }
  if (!rep.n_test.empty()) std::cout << ")";
  std::cout << "\n";
  for (Eigen::Index i = 0; i < y.n_traits(); ++i) {
    std::cout << "  " << y.trait_ids[static_cast<std::size_t>(i)] << ": rmse "
              << format_double(rep.rmse(i)) << ", corr "
              << (rep.corr_defined[static_cast<std::size_t>(i)] ? format_double(rep.corr(i))
                                                                : std::string("NA"))
              << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- reml

struct RemlArgs {
  std::string kinship;
  std::string phenos;
  std::string covar;
  std::string out;
  bool no_intercept = false;
};

int run_reml(const RemlArgs& a) {
  SpectralKinship sk = read_kinship(a.kinship);
  PhenotypeMatrix y = align_phenotypes(load_phenotypes(a.phenos), sk);
  CovarSet cov = build_covariates(a.covar, !a.no_intercept, y.sample_ids);

  std::ostringstream ts;
  ts << "trait\th2\tse_h2\tsigma_g2\tsigma_e2\tloglik\tflags\n";
  for (Eigen::Index i = 0; i < y.n_traits(); ++i) {
    const std::string trait = y.trait_ids[static_cast<std::size_t>(i)];
    std::vector<int> idx;
    for (Eigen::Index j = 0; j < y.n_samples(); ++j) {
      if (!y.missing_mask(i, j)) idx.push_back(static_cast<int>(j));
    }
    std::string flags;
    auto add_flag = [&flags](const std::string& f) {
      if (!flags.empty()) flags += ',';
      flags += f;
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    UnivariateFit fit;
    fit.h2 = fit.se_h2 = fit.sigma_g2 = fit.sigma_e2 = fit.loglik = nan;
    try {
      Eigen::VectorXd y_row(static_cast<Eigen::Index>(idx.size()));
      Eigen::MatrixXd x_sub(cov.x.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t c = 0; c < idx.size(); ++c) {
        y_row(static_cast<Eigen::Index>(c)) = y.values(i, idx[c]);
        x_sub.col(static_cast<Eigen::Index>(c)) = cov.x.col(idx[c]);
      }
      SpectralKinship sk_sub = static_cast<Eigen::Index>(idx.size()) == y.n_samples()
                                   ? sk
                                   : kinship_submatrix(sk, idx);
      fit = univariate_ml(y_row, x_sub, sk_sub);
      if (fit.boundary) add_flag("boundary");
      if (fit.non_identifiable) add_flag("non_identifiable");
    } catch (const InsufficientData&) {
      add_flag("insufficient_data");
    }
    if (flags.empty()) flags = "-";
    ts << trait << '\t' << fmt_or_na(fit.h2) << '\t' << fmt_or_na(fit.se_h2) << '\t'
       << fmt_or_na(fit.sigma_g2) << '\t' << fmt_or_na(fit.sigma_e2) << '\t'
       << fmt_or_na(fit.loglik) << '\t' << flags << '\n';
  }
  write_text_file(a.out, ts.str());

  std::map<std::string, std::string> flags = {{"kinship", a.kinship},
                                              {"phenos", a.phenos},
                                              {"covar", a.covar},
                                              {"out", a.out}};
  std::vector<std::string> inputs = {a.kinship + "/K.tsv", a.kinship + "/K.eigen.tsv", a.phenos};
  if (!a.covar.empty()) inputs.push_back(a.covar);
  write_text_file(a.out + ".manifest.json", manifest_text("reml", flags, inputs));

  std::cout << "reml: wrote " << y.n_traits() << " trait fit(s) -> " << a.out << "\n";
  return 0;
}

// --------------------------------------------------------------- priorsim

struct PriorsimArgs {
  int d = 1;
  int p = 1;
  double sigma2_beta = 1.0;
  double dof = 2.0;
  long draws = 100000;
  std::uint64_t seed = 1;
  int ridge_n = 10;
  int ridge_p = 50;
  std::string out;
};

int run_priorsim(const PriorsimArgs& a) {
  EffectSizePriorSpec spec{a.d, WishartPrior(SpdMatrix::identity(a.d), a.dof), a.sigma2_beta,
                           a.p};
  Rng rng = Rng::stream(a.seed, 0);
  EffectPriorSample sample = sample_effect_prior(spec, a.draws, rng);

  ensure_dir(a.out);
  std::ostringstream hs;
  hs << "bin_center\tdensity\n";
  for (std::size_t b = 0; b < sample.bin_centers.size(); ++b) {
    hs << format_double(sample.bin_centers[b]) << '\t' << format_double(sample.density[b])
       << '\n';
  }
  write_text_file(a.out + "/effect_hist.tsv", hs.str());

  Rng ridge_rng = Rng::stream(a.seed, 1);
  GenotypeMatrix z = standardize(simulate_genotypes(a.ridge_n, a.ridge_p, 0.05, 0.5, ridge_rng));
  SpdMatrix sigma_beta(a.sigma2_beta * Eigen::MatrixXd::Identity(a.d, a.d));
  RidgeCheck rc = verify_ridge_equivalence(z, sigma_beta, a.draws, ridge_rng);
  std::ostringstream rs;
  rs << "max_dev\tmc_se\tworst_ratio\tpass\n"
     << format_double(rc.max_dev) << '\t' << format_double(rc.mc_se) << '\t'
     << format_double(rc.worst_ratio) << '\t' << (rc.pass ? 1 : 0) << '\n';
  write_text_file(a.out + "/ridge_check.tsv", rs.str());

  std::map<std::string, std::string> flags = {
      {"d", std::to_string(a.d)},           {"p", std::to_string(a.p)},
      {"sigma2-beta", format_double(a.sigma2_beta)},
      {"dof", format_double(a.dof)},        {"draws", std::to_string(a.draws)},
      {"seed", std::to_string(a.seed)},     {"ridge-n", std::to_string(a.ridge_n)},
      {"ridge-p", std::to_string(a.ridge_p)}, {"out", a.out}};
  write_manifest(a.out, "priorsim", flags, {});

  std::cout << "priorsim: " << sample.n_effects << " marginal effects, mean "
            << format_double(sample.mean) << ", variance " << format_double(sample.variance)
            << ", kurtosis " << format_double(sample.kurtosis) << "\n";
  std::cout << "ridge check: max deviation " << format_double(rc.max_dev) << " ("
            << format_double(rc.worst_ratio) << " MC-SE units): "
            << (rc.pass ? "PASS" : "FAIL") << "\n";
  return rc.pass ? 0 : 2;
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  int n = 400;
  int p = 2000;
  int d = 0;  // 0: follow --h2
  std::vector<double> h2;
  double rg = 0.0;
  std::vector<double> miss;
  std::vector<double> maf = {0.05, 0.5};
  std::uint64_t seed = 1;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  std::vector<double> h2 = a.h2;
  if (h2.empty()) h2.assign(a.d > 0 ? static_cast<std::size_t>(a.d) : 2, 0.5);
  if (a.d > 0 && static_cast<int>(h2.size()) != a.d) {
    throw ValidationError("--h2 must list one value per trait");
  }
  if (a.maf.size() != 2) throw ValidationError("--maf expects low,high");
  if (!a.miss.empty() && a.miss.size() != h2.size()) {
    throw ValidationError("--miss must list one fraction per trait");
  }

  Rng geno_rng = Rng::stream(a.seed, 1);
  Rng pheno_rng = Rng::stream(a.seed, 2);
  Rng mask_rng = Rng::stream(a.seed, 3);

  GenotypeMatrix geno = simulate_genotypes(a.n, a.p, a.maf[0], a.maf[1], geno_rng);
  ensure_dir(a.out);
  save_genotypes(a.out + "/genotypes.tsv", geno);
  SpectralKinship sk = compute_kinship(standardize(geno));
  write_kinship(a.out, sk);

  TraitCovariances cov = covariances_from_h2(h2, a.rg);
  PhenotypeMatrix complete =
      simulate_phenotypes(sk, cov.sigma_g, cov.sigma_e, Eigen::MatrixXd(), Eigen::MatrixXd(),
                          pheno_rng);
  save_phenotypes(a.out + "/phenotypes_complete.tsv", complete);
  PhenotypeMatrix masked = a.miss.empty() ? complete : mask_at_random(complete, a.miss, mask_rng);
  save_phenotypes(a.out + "/phenotypes.tsv", masked);
  write_matrix_tsv(a.out + "/sigma_g.tsv", cov.sigma_g.mat(), complete.trait_ids, {});
  write_matrix_tsv(a.out + "/sigma_e.tsv", cov.sigma_e.mat(), complete.trait_ids, {});

  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += format_double(v[i]);
    }
    return s;
  };
  std::map<std::string, std::string> flags = {
      {"n", std::to_string(a.n)},   {"p", std::to_string(a.p)},
      {"d", std::to_string(static_cast<int>(h2.size()))},
      {"h2", join(h2)},             {"rg", format_double(a.rg)},
      {"miss", join(a.miss)},       {"maf", join(a.maf)},
      {"seed", std::to_string(a.seed)}, {"out", a.out}};
  write_manifest(a.out, "simulate", flags, {});

  std::cout << "simulate: " << a.n << " samples, " << a.p << " SNPs, " << h2.size()
            << " trait(s) -> " << a.out << "\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"multi-trait heritability from a Bayesian matrix-variate mixed model"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  KinshipArgs ka;
  CLI::App* kin = app.add_subcommand("kinship", "build a relatedness matrix from SNP dosages");
  kin->set_config("--config");
  kin->add_option("--geno", ka.geno, "SNP dosage file (rows: snp_id then 0/1/2/NA per sample)")
      ->required()
      ->check(CLI::ExistingFile);
  kin->add_option("--out", ka.out, "output directory for K.tsv and K.eigen.tsv")->required();

  FitArgs fa;
  CLI::App* fit = app.add_subcommand("fit", "sample the model posterior by Gibbs sampling");
  fit->set_config("--config");
  fit->add_option("--kinship", fa.kinship, "kinship directory from the kinship subcommand")
      ->required()
      ->check(CLI::ExistingDirectory);
  fit->add_option("--phenos", fa.phenos, "phenotype TSV (sample_id column then one per trait)")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--covar", fa.covar, "optional covariate TSV, same layout as phenotypes")
      ->check(CLI::ExistingFile);
  fit->add_option("--out", fa.out, "output directory")->required();
  fit->add_option("--iter", fa.iter, "iterations per chain")->capture_default_str();
  fit->add_option("--burnin", fa.burnin, "burn-in iterations discarded")->capture_default_str();
  fit->add_option("--thin", fa.thin, "keep every thin-th draw")->capture_default_str();
  fit->add_option("--chains", fa.chains, "number of chains")->capture_default_str();
  fit->add_option("--seed", fa.seed, "master RNG seed")->capture_default_str();
  fit->add_option("--threads", fa.threads, "worker threads (0: one per chain)")
      ->capture_default_str();
  fit->add_option("--wishart-dof", fa.wishart_dof, "Wishart prior degrees of freedom (0: d)")
      ->capture_default_str();
  fit->add_option("--wishart-scale", fa.wishart_scale_file,
                  "optional d-by-d Wishart scale matrix file (default: identity)")
      ->check(CLI::ExistingFile);
  fit->add_option("--coef-prior-var", fa.coef_prior_var, "prior variance per coefficient")
      ->capture_default_str();
  fit->add_flag("--drop-incomplete", fa.drop_incomplete,
                "drop samples with any missing trait instead of erroring");
  fit->add_flag("--no-intercept", fa.no_intercept, "do not add an intercept covariate");
  fit->add_flag("--traces", fa.traces, "also export per-parameter trace and density files");

  HeritArgs ha;
  CLI::App* herit = app.add_subcommand("herit", "heritability summaries from stored draws");
  herit->set_config("--config");
  herit->add_option("--draws", ha.draws, "fit output directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  herit->add_option("--out", ha.out, "output directory")->required();
  herit->add_option("--traits", ha.traits, "comma-separated trait names")->delimiter(',');
  herit->add_flag("--traces", ha.traces, "also export per-parameter trace and density files");

  PredictArgs pa;
  CLI::App* pred = app.add_subcommand("predict", "fill missing phenotypes by BLUP");
  pred->set_config("--config");
  pred->add_option("--model", pa.model, "fit output directory holding model.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  pred->add_option("--phenos", pa.phenos, "phenotype TSV with NA for entries to fill")
      ->required()
      ->check(CLI::ExistingFile);
  pred->add_option("--covar", pa.covar, "covariate TSV (required if the model used covariates)")
      ->check(CLI::ExistingFile);
  pred->add_option("--kinship", pa.kinship, "kinship directory override")
      ->check(CLI::ExistingDirectory);
  pred->add_option("--out", pa.out, "output phenotype TSV")->required();
  pred->add_option("--path", pa.path, "solver path")
      ->check(CLI::IsMember({"auto", "dense", "structured", "iterative"}))
      ->capture_default_str();

  CvArgs ca;
  CLI::App* cv = app.add_subcommand("cv", "cross-validated prediction accuracy");
  cv->set_config("--config");
  cv->add_option("--kinship", ca.kinship, "kinship directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  cv->add_option("--phenos", ca.phenos, "phenotype TSV")->required()->check(CLI::ExistingFile);
  cv->add_option("--covar", ca.covar, "optional covariate TSV")->check(CLI::ExistingFile);
  cv->add_option("--out", ca.out, "output report TSV")->required();
  cv->add_option("--folds", ca.folds, "number of folds")->capture_default_str();
  cv->add_option("--estimator", ca.estimator, "per-fold estimator")
      ->check(CLI::IsMember({"bayes", "reml"}))
      ->capture_default_str();
  cv->add_option("--impute", ca.impute, "handling of incomplete training samples")
      ->check(CLI::IsMember({"drop", "blup"}))
      ->capture_default_str();
  cv->add_option("--seed", ca.seed, "master RNG seed")->capture_default_str();
  cv->add_option("--threads", ca.threads, "concurrent folds")->capture_default_str();
  cv->add_option("--iter", ca.iter, "sampler iterations per fold")->capture_default_str();
  cv->add_option("--burnin", ca.burnin, "sampler burn-in per fold")->capture_default_str();
  cv->add_option("--thin", ca.thin, "sampler thinning per fold")->capture_default_str();
  cv->add_option("--chains", ca.chains, "sampler chains per fold")->capture_default_str();
  cv->add_flag("--no-intercept", ca.no_intercept, "do not add an intercept covariate");

  RemlArgs ra;
  CLI::App* reml = app.add_subcommand("reml", "single-trait maximum-likelihood baseline");
  reml->set_config("--config");
  reml->add_option("--kinship", ra.kinship, "kinship directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  reml->add_option("--phenos", ra.phenos, "phenotype TSV")->required()->check(CLI::ExistingFile);
  reml->add_option("--covar", ra.covar, "optional covariate TSV")->check(CLI::ExistingFile);
  reml->add_option("--out", ra.out, "output TSV")->required();
  reml->add_flag("--no-intercept", ra.no_intercept, "do not add an intercept covariate");

  PriorsimArgs pra;
  CLI::App* prior = app.add_subcommand("priorsim", "effect-size prior draws and ridge check");
  prior->set_config("--config");
  prior->add_option("--d", pra.d, "trait dimension")->capture_default_str();
  prior->add_option("--p", pra.p, "SNP columns per draw")->capture_default_str();
  prior->add_option("--sigma2-beta", pra.sigma2_beta, "per-SNP effect variance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  prior->add_option("--dof", pra.dof, "Wishart degrees of freedom")->capture_default_str();
  prior->add_option("--draws", pra.draws, "Monte Carlo draws")->capture_default_str();
  prior->add_option("--seed", pra.seed, "RNG seed")->capture_default_str();
  prior->add_option("--ridge-n", pra.ridge_n, "samples in the ridge check")
      ->capture_default_str();
  prior->add_option("--ridge-p", pra.ridge_p, "SNPs in the ridge check")->capture_default_str();
  prior->add_option("--out", pra.out, "output directory")->required();

  SimulateArgs sa;
  CLI::App* sim = app.add_subcommand("simulate", "generate genotypes and phenotypes");
  sim->set_config("--config");
  sim->add_option("--n", sa.n, "samples")->capture_default_str();
  sim->add_option("--p", sa.p, "SNPs")->capture_default_str();
  sim->add_option("--d", sa.d, "traits (default: length of --h2)")->capture_default_str();
  sim->add_option("--h2", sa.h2, "per-trait heritabilities, e.g. 0.8,0.85")->delimiter(',');
  sim->add_option("--rg", sa.rg, "genetic correlation between trait pairs")
      ->capture_default_str();
  sim->add_option("--miss", sa.miss, "per-trait missing fractions, e.g. 0.27,0.18")
      ->delimiter(',');
  sim->add_option("--maf", sa.maf, "allele frequency range low,high")->delimiter(',');
  sim->add_option("--seed", sa.seed, "RNG seed")->capture_default_str();
  sim->add_option("--out", sa.out, "output directory")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    if (kin->parsed()) return run_kinship(ka);
    if (fit->parsed()) return run_fit(fa);
    if (herit->parsed()) return run_herit(ha);
    if (pred->parsed()) return run_predict(pa);
    if (cv->parsed()) return run_cv(ca);
    if (reml->parsed()) return run_reml(ra);
    if (prior->parsed()) return run_priorsim(pra);
    if (sim->parsed()) return run_simulate(sa);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace mvherit
