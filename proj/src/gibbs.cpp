#include "mvherit/gibbs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>

#include "json.hpp"

#include "mvherit/errors.hpp"
#include "mvherit/io_util.hpp"

namespace mvherit {

namespace fs = std::filesystem;

void GibbsConfig::validate(int d) const {
  if (n_chains < 1) throw InvalidConfig("n_chains must be >= 1");
  if (n_iter < 1) throw InvalidConfig("n_iter must be >= 1");
  if (burn_in < 0 || burn_in >= n_iter) throw InvalidConfig("burn_in must be in [0, n_iter)");
  if (thin < 1) throw InvalidConfig("thin must be >= 1");
  if (kept_per_chain() < 100)
    throw InvalidConfig("(n_iter - burn_in) / thin must be >= 100, got " +
                        std::to_string(kept_per_chain()));
  if (coef_prior_variance <= 0.0) throw InvalidConfig("coef_prior_variance must be > 0");
  const double dof = effective_dof(d);
  if (dof <= d - 1)
    throw ImproperPrior("Wishart dof " + format_double(dof) + " not > d - 1 = " +
                        std::to_string(d - 1));
  if (wishart_scale_mode == WishartScaleMode::kUserMatrix) {
    if (!wishart_scale) throw InvalidConfig("user Wishart scale selected but no matrix given");
    if (wishart_scale->rows() != d || wishart_scale->cols() != d)
      throw DimError("Wishart scale must be " + std::to_string(d) + "x" + std::to_string(d));
  }
}

WishartPrior GibbsConfig::make_prior(int d) const {
  Eigen::MatrixXd scale = wishart_scale_mode == WishartScaleMode::kUserMatrix
                              ? *wishart_scale
                              : Eigen::MatrixXd::Identity(d, d);
  return WishartPrior{SpdMatrix(scale), effective_dof(d)};
}

ModelState initial_state(const Eigen::MatrixXd& y_values, int k) {
  const int d = static_cast<int>(y_values.rows());
  const auto n = static_cast<double>(y_values.cols());
  Eigen::VectorXd var(d);
  for (int t = 0; t < d; ++t) {
    const double mean = y_values.row(t).mean();
    var(t) = (y_values.row(t).array() - mean).square().sum() / n;
    var(t) = std::max(var(t), 1e-8);
  }
  SpdMatrix half((0.5 * var).asDiagonal().toDenseMatrix());
  return ModelState(Eigen::MatrixXd::Zero(d, k), Eigen::MatrixXd::Zero(d, y_values.cols()),
                    half, half);
}

std::string ParamSel::name() const {
  const char* prefix = block == Block::kSigmaG ? "sigma_g" : block == Block::kSigmaE ? "sigma_e" : "beta";
  return std::string(prefix) + "_" + std::to_string(i + 1) + std::to_string(j + 1);
}

std::vector<ParamSel> covariance_selectors(int d) {
  std::vector<ParamSel> sels;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) sels.push_back({ParamSel::Block::kSigmaG, i, j});
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) sels.push_back({ParamSel::Block::kSigmaE, i, j});
  return sels;
}

std::vector<ParamSel> all_selectors(int d, int k) {
  std::vector<ParamSel> sels = covariance_selectors(d);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < d; ++i) sels.push_back({ParamSel::Block::kBeta, i, j});
  return sels;
}

long PosteriorDraws::total_kept() const {
  long total = 0;
  for (const auto& c : chains) total += static_cast<long>(c.iters.size());
  return total;
}

std::vector<std::vector<double>> PosteriorDraws::series(const ParamSel& sel) const {
  std::vector<std::vector<double>> out;
  out.reserve(chains.size());
  for (const auto& chain : chains) {
    const auto& block = sel.block == ParamSel::Block::kSigmaG   ? chain.sigma_g
                        : sel.block == ParamSel::Block::kSigmaE ? chain.sigma_e
                                                                : chain.beta;
    std::vector<double> s;
    s.reserve(block.size());
    for (const auto& m : block) s.push_back(m(sel.i, sel.j));
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> transform_data(const PhenotypeMatrix& y,
                                                           const Eigen::MatrixXd& x,
                                                           const SpectralKinship& sk) {
  if (y.missing_mask.any())
    throw MissingData("phenotypes contain missing entries; impute or drop before fitting");
  if (y.values.cols() != sk.n())
    throw DimError("phenotype samples (" + std::to_string(y.values.cols()) +
                   ") do not match kinship (" + std::to_string(sk.n()) + ")");
  if (x.cols() != sk.n())
    throw DimError("covariate samples (" + std::to_string(x.cols()) +
                   ") do not match kinship (" + std::to_string(sk.n()) + ")");
  if (!y.sample_ids.empty() && !sk.sample_ids.empty() && y.sample_ids != sk.sample_ids)
    throw ValidationError("phenotype and kinship sample ids are not aligned");
  return {y.values * sk.eigvecs, x * sk.eigvecs};
}

void update_zeta(ModelState& state, const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& x_tilde,
                 const Eigen::VectorXd& eigvals, Rng& rng) {
  const int d = static_cast<int>(y_tilde.rows());
  const Eigen::Index n = y_tilde.cols();
  const Eigen::MatrixXd sg_inv = state.sigma_g.inverse();
  const Eigen::MatrixXd se_inv = state.sigma_e.inverse();
  const Eigen::MatrixXd resid = y_tilde - state.beta * x_tilde;
  Eigen::VectorXd z(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double r = eigvals(j);
    if (r <= 0.0) {
      // zero eigenvalue: the likelihood drops out and the conditional is the
      // prior; the draw still enters the Sigma_g scatter
      for (int t = 0; t < d; ++t) z(t) = rng.normal();
      state.zeta.col(j) = state.sigma_g.chol() * z;
      continue;
    }
    const double sr = std::sqrt(r);
    Eigen::MatrixXd prec = sg_inv + r * se_inv;
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
      throw NumericalBreakdown("latent-effect precision not positive definite");
    const Eigen::VectorXd mean = llt.solve(sr * (se_inv * resid.col(j)));
    for (int t = 0; t < d; ++t) z(t) = rng.normal();
    // cov = prec^-1 = L^-T L^-1, so L^-T z has the target covariance
    state.zeta.col(j) = mean + llt.matrixU().solve(z);
  }
}

namespace {

// Scale of the inverse-Wishart full conditional: (prior scale^-1 + scatter)^-1.
// One diagonal jitter retry if the scatter-augmented matrix loses positive
// definiteness to roundoff; a second failure aborts the chain.
SpdMatrix posterior_wishart_scale(const WishartPrior& prior, const Eigen::MatrixXd& scatter) {
  const Eigen::MatrixXd a = prior.scale.inverse() + scatter;
  const int d = static_cast<int>(a.rows());
  auto invert = [d](const Eigen::MatrixXd& m) -> std::optional<SpdMatrix> {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    try {
      return SpdMatrix(0.5 * (inv + inv.transpose()));
    } catch (const NotSpd&) {
      return std::nullopt;
    }
  };
  if (auto s = invert(a)) return *std::move(s);
  const double jitter = 1e-10 * a.trace() / d;
  if (auto s = invert(a + jitter * Eigen::MatrixXd::Identity(d, d))) return *std::move(s);
  throw NumericalBreakdown("covariance full conditional not positive definite after jitter");
}

SpdMatrix draw_covariance(const WishartPrior& prior, const Eigen::MatrixXd& scatter, double n,
                          Rng& rng) {
  const WishartPrior posterior{posterior_wishart_scale(prior, scatter), prior.dof + n};
  try {
    return sample_inverse_wishart(posterior, rng);
  } catch (const NotSpd& e) {
    throw NumericalBreakdown(std::string("sampled covariance not positive definite: ") + e.what());
  }
}

}  // namespace

void update_sigma_g(ModelState& state, const WishartPrior& prior, Rng& rng) {
  const Eigen::MatrixXd scatter = state.zeta * state.zeta.transpose();
  state.sigma_g = draw_covariance(prior, scatter, static_cast<double>(state.zeta.cols()), rng);
}

void update_sigma_e(ModelState& state, const Eigen::MatrixXd& y_tilde,
                    const Eigen::MatrixXd& x_tilde, const Eigen::VectorXd& eigvals,
                    const WishartPrior& prior, Rng& rng) {
  Eigen::MatrixXd resid = y_tilde - state.beta * x_tilde;
  resid.noalias() -= state.zeta * eigvals.array().max(0.0).sqrt().matrix().asDiagonal();
  const Eigen::MatrixXd scatter = resid * resid.transpose();
  state.sigma_e = draw_covariance(prior, scatter, static_cast<double>(y_tilde.cols()), rng);
}

void update_beta(ModelState& state, const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& x_tilde,
                 const Eigen::VectorXd& eigvals, double coef_prior_variance, Rng& rng) {
  const int d = static_cast<int>(y_tilde.rows());
  const int k = static_cast<int>(x_tilde.rows());
  const Eigen::MatrixXd se_inv = state.sigma_e.inverse();
  // partial residuals with the scaled latent effects removed
  Eigen::MatrixXd w = y_tilde;
  w.noalias() -= state.zeta * eigvals.array().max(0.0).sqrt().matrix().asDiagonal();
  // precision: I/c + (X X^T) (x) Sigma_e^-1, right-hand side vec(Sigma_e^-1 W X^T)
  Eigen::MatrixXd prec = kron(x_tilde * x_tilde.transpose(), se_inv);
  prec.diagonal().array() += 1.0 / coef_prior_variance;
  const Eigen::MatrixXd rhs_mat = se_inv * w * x_tilde.transpose();
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(rhs_mat.data(), d * k);
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success)
    throw NumericalBreakdown("coefficient precision not positive definite");
  Eigen::VectorXd z(d * k);
  for (int i = 0; i < d * k; ++i) z(i) = rng.normal();
  const Eigen::VectorXd vec_beta = llt.solve(rhs) + llt.matrixU().solve(z);
  state.beta = Eigen::Map<const Eigen::MatrixXd>(vec_beta.data(), d, k);
}

namespace {

ChainDraws run_single_chain(int chain_index, const Eigen::MatrixXd& y_tilde,
                            const Eigen::MatrixXd& x_tilde, const Eigen::VectorXd& eigvals,
                            const GibbsConfig& config, const WishartPrior& prior) {
  Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(chain_index));
  ChainDraws out;
  out.seed = config.seed;
  const long kept = config.kept_per_chain();
  out.iters.reserve(kept);
  out.sigma_g.reserve(kept);
  out.sigma_e.reserve(kept);
  out.beta.reserve(kept);
  ModelState state = initial_state(y_tilde, static_cast<int>(x_tilde.rows()));
  long iter = 0;
  try {
    for (iter = 1; iter <= config.n_iter; ++iter) {
      update_zeta(state, y_tilde, x_tilde, eigvals, rng);
      update_sigma_g(state, prior, rng);
      update_sigma_e(state, y_tilde, x_tilde, eigvals, prior, rng);
      update_beta(state, y_tilde, x_tilde, eigvals, config.coef_prior_variance, rng);
      if (iter > config.burn_in && (iter - config.burn_in) % config.thin == 0) {
        out.iters.push_back(iter);
        out.sigma_g.push_back(state.sigma_g.mat());
        out.sigma_e.push_back(state.sigma_e.mat());
        out.beta.push_back(state.beta);
      }
    }
  } catch (const NumericalError& e) {
    throw NumericalBreakdown(e.what(), chain_index, iter);
  }
  return out;
}

}  // namespace

PosteriorDraws run_chains(const PhenotypeMatrix& y, const Eigen::MatrixXd& x,
                          const SpectralKinship& sk, const GibbsConfig& config) {
  const int d = static_cast<int>(y.values.rows());
  const int k = static_cast<int>(x.rows());
  if (d < 1) throw EmptyInput("no traits to fit");
  if (k < 1) throw DimError("covariate matrix must have at least one row");
  config.validate(d);
  const auto [y_tilde, x_tilde] = transform_data(y, x, sk);
  const WishartPrior prior = config.make_prior(d);

  PosteriorDraws draws;
  draws.config = config;
  draws.d = d;
  draws.k = k;
  draws.chains.resize(config.n_chains);

  int workers = config.threads > 0 ? config.threads : config.n_chains;
  workers = std::min(workers, config.n_chains);
  workers = std::max(workers, 1);

  std::vector<std::exception_ptr> errors(config.n_chains);
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= config.n_chains) return;
      try {
        draws.chains[c] = run_single_chain(c, y_tilde, x_tilde, sk.eigvals, config, prior);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return draws;
}

void write_draws(const std::string& dir, const PosteriorDraws& draws) {
  ensure_dir(dir);
  const auto sels = all_selectors(draws.d, draws.k);
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const auto& chain = draws.chains[c];
    std::ofstream out(fs::path(dir) / ("chain_" + std::to_string(c + 1) + ".csv"));
    if (!out) throw IoError("cannot write draws in " + dir);
    out << "iter";
    for (const auto& sel : sels) out << "," << sel.name();
    out << "\n";
    for (std::size_t row = 0; row < chain.iters.size(); ++row) {
      out << chain.iters[row];
      for (const auto& sel : sels) {
        const auto& block = sel.block == ParamSel::Block::kSigmaG   ? chain.sigma_g
                            : sel.block == ParamSel::Block::kSigmaE ? chain.sigma_e
                                                                    : chain.beta;
        out << "," << format_double(block[row](sel.i, sel.j));
      }
      out << "\n";
    }
  }
  nlohmann::ordered_json meta;
  meta["d"] = draws.d;
  meta["k"] = draws.k;
  meta["n_chains"] = static_cast<int>(draws.chains.size());
  meta["n_iter"] = draws.config.n_iter;
  meta["burn_in"] = draws.config.burn_in;
  meta["thin"] = draws.config.thin;
  meta["seed"] = draws.config.seed;
  meta["wishart_dof"] = draws.config.effective_dof(draws.d);
  meta["coef_prior_variance"] = draws.config.coef_prior_variance;
  std::ofstream meta_out(fs::path(dir) / "draws_meta.json");
  if (!meta_out) throw IoError("cannot write draws_meta.json in " + dir);
  meta_out << meta.dump(2) << "\n";
}

namespace {

int sym_index(int d, int i, int j) {
  // position of (i, j), i <= j, in row-major upper-triangle order
  return i * d - i * (i - 1) / 2 + (j - i);
}

}  // namespace

PosteriorDraws read_draws(const std::string& dir) {
  const fs::path meta_path = fs::path(dir) / "draws_meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw IoError("cannot read " + meta_path.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("draws_meta.json: ") + e.what(), 0);
  }
  PosteriorDraws draws;
  draws.d = meta.at("d").get<int>();
  draws.k = meta.at("k").get<int>();
  draws.config.n_iter = meta.at("n_iter").get<long>();
  draws.config.burn_in = meta.at("burn_in").get<long>();
  draws.config.thin = meta.at("thin").get<int>();
  draws.config.seed = meta.at("seed").get<std::uint64_t>();
  draws.config.wishart_dof = meta.at("wishart_dof").get<double>();
  draws.config.coef_prior_variance = meta.at("coef_prior_variance").get<double>();
  const int n_chains = meta.at("n_chains").get<int>();
  draws.config.n_chains = n_chains;

  const int d = draws.d;
  const int k = draws.k;
  const int n_cov = d * (d + 1) / 2;
  for (int c = 0; c < n_chains; ++c) {
    const fs::path path = fs::path(dir) / ("chain_" + std::to_string(c + 1) + ".csv");
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw EmptyInput("empty draws file " + path.string());
    const auto header = split_fields(line, ',');
    const std::size_t expected = 1 + 2 * n_cov + d * k;
    if (header.size() != expected)
      throw ParseError(path.string() + ": expected " + std::to_string(expected) + " columns, got " +
                           std::to_string(header.size()),
                       1);
    ChainDraws chain;
    chain.seed = draws.config.seed;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto fields = split_fields(line, ',');
      if (fields.size() != expected)
        throw ParseError(path.string() + ": ragged row", line_no);
      std::vector<double> vals(fields.size());
      try {
        for (std::size_t f = 0; f < fields.size(); ++f) vals[f] = std::stod(fields[f]);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ": non-numeric field", line_no);
      }
      chain.iters.push_back(static_cast<long>(vals[0]));
      Eigen::MatrixXd sg(d, d), se(d, d), beta(d, k);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          sg(i, j) = sg(j, i) = vals[1 + sym_index(d, i, j)];
          se(i, j) = se(j, i) = vals[1 + n_cov + sym_index(d, i, j)];
        }
      for (int jc = 0; jc < k; ++jc)
        for (int i = 0; i < d; ++i) beta(i, jc) = vals[1 + 2 * n_cov + jc * d + i];
      chain.sigma_g.push_back(std::move(sg));
      chain.sigma_e.push_back(std::move(se));
      chain.beta.push_back(std::move(beta));
    }
    draws.chains.push_back(std::move(chain));
  }
  return draws;
}

}  // namespace mvherit
