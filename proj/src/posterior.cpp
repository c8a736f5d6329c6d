#include "mvherit/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "mvherit/errors.hpp"
#include "mvherit/io_util.hpp"

namespace mvherit {

namespace fs = std::filesystem;

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyInput("quantile of empty sample");
  if (p < 0.0 || p > 1.0) throw ValidationError("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// biased autocovariances c_0..c_max (divisor N)
std::vector<double> autocovariances(const std::vector<double>& series, int max_lag) {
  const auto n = static_cast<double>(series.size());
  const double mu = mean_of(series);
  std::vector<double> c(max_lag + 1, 0.0);
  for (int lag = 0; lag <= max_lag; ++lag) {
    double s = 0.0;
    for (std::size_t t = lag; t < series.size(); ++t)
      s += (series[t] - mu) * (series[t - lag] - mu);
    c[lag] = s / n;
  }
  return c;
}

}  // namespace

double spectrum0_ar(const std::vector<double>& series) {
  const auto n = static_cast<long>(series.size());
  if (n < 2) throw InsufficientSamples("spectral density needs at least 2 draws");
  const int p_max = static_cast<int>(
      std::min<long>(n - 1, static_cast<long>(10.0 * std::log10(static_cast<double>(n)))));
  const auto c = autocovariances(series, std::max(p_max, 0));
  if (c[0] <= 0.0) return 0.0;  // constant series

  // Levinson-Durbin recursion; track AIC = N log(innovation var) + 2p.
  std::vector<double> phi(p_max + 1, 0.0), prev(p_max + 1, 0.0);
  double v = c[0];
  double best_spec = c[0];  // order 0: white noise
  double best_aic = n * std::log(v);
  for (int p = 1; p <= p_max; ++p) {
    double acc = c[p];
    for (int i = 1; i < p; ++i) acc -= prev[i] * c[p - i];
    const double k = acc / v;
    phi[p] = k;
    for (int i = 1; i < p; ++i) phi[i] = prev[i] - k * prev[p - i];
    v *= 1.0 - k * k;
    if (v <= 0.0) break;
    const double aic = n * std::log(v) + 2.0 * p;
    if (aic < best_aic) {
      best_aic = aic;
      double phi_sum = 0.0;
      for (int i = 1; i <= p; ++i) phi_sum += phi[i];
      const double denom = 1.0 - phi_sum;
      best_spec = denom != 0.0 ? v / (denom * denom) : std::numeric_limits<double>::infinity();
    }
    std::copy(phi.begin(), phi.begin() + p + 1, prev.begin());
  }
  return best_spec;
}

double spectrum0_batch(const std::vector<double>& series) {
  const auto n = static_cast<long>(series.size());
  if (n < 4) throw InsufficientSamples("batch means need at least 4 draws");
  const auto b = static_cast<long>(std::floor(std::sqrt(static_cast<double>(n))));
  const long n_batches = n / b;
  std::vector<double> means(n_batches);
  for (long i = 0; i < n_batches; ++i) {
    double s = 0.0;
    for (long t = i * b; t < (i + 1) * b; ++t) s += series[t];
    means[i] = s / static_cast<double>(b);
  }
  const double grand = mean_of(means);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return static_cast<double>(b) * ss / static_cast<double>(n_batches - 1);
}

double psrf(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw NeedsMultipleChains("PSRF needs at least 2 chains");
  const std::size_t n = chains[0].size();
  for (const auto& c : chains)
    if (c.size() != n) throw DimError("PSRF chains must have equal length");
  if (n < 2) throw InsufficientSamples("PSRF needs at least 2 draws per chain");

  const auto m = static_cast<double>(chains.size());
  const auto nd = static_cast<double>(n);
  std::vector<double> chain_means;
  chain_means.reserve(chains.size());
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = mean_of(c);
    chain_means.push_back(mu);
    double ss = 0.0;
    for (double x : c) ss += (x - mu) * (x - mu);
    w += ss / (nd - 1.0);
  }
  w /= m;
  const double grand = mean_of(chain_means);
  double b_over_n = 0.0;
  for (double mu : chain_means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= (m - 1.0);
  if (w <= 0.0) return 1.0;  // constant chains
  const double var_plus = (nd - 1.0) / nd * w + b_over_n;
  return std::max(1.0, std::sqrt(var_plus / w));
}

ParameterSummary summarize(const std::string& name,
                           const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw EmptyInput("no chains to summarize");
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  const auto n_total = static_cast<double>(pooled.size());
  if (pooled.size() < 2) throw InsufficientSamples("summary needs at least 2 draws");

  ParameterSummary s;
  s.name = name;
  s.mean = mean_of(pooled);
  double ss = 0.0;
  for (double x : pooled) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / (n_total - 1.0));
  s.naive_se = s.sd / std::sqrt(n_total);

  // time-series SE and ESS accumulate over chains
  double var_of_mean = 0.0;
  double ess = 0.0;
  for (const auto& c : chains) {
    const auto nc = static_cast<double>(c.size());
    const double spec = spectrum0_ar(c);
    var_of_mean += spec / nc;
    const double mu = mean_of(c);
    double css = 0.0;
    for (double x : c) css += (x - mu) * (x - mu);
    const double cvar = css / (nc - 1.0);
    ess += spec > 0.0 ? std::min(nc, cvar * nc / spec) : nc;
  }
  const auto m = static_cast<double>(chains.size());
  s.timeseries_se = std::sqrt(var_of_mean) / m;
  s.ess = ess;

  s.q025 = quantile_type7(pooled, 0.025);
  s.q25 = quantile_type7(pooled, 0.25);
  s.q50 = quantile_type7(pooled, 0.5);
  s.q75 = quantile_type7(pooled, 0.75);
  s.q975 = quantile_type7(pooled, 0.975);
  s.psrf = chains.size() >= 2 ? psrf(chains) : std::numeric_limits<double>::quiet_NaN();
  return s;
}

std::vector<ParameterSummary> summarize_draws(const PosteriorDraws& draws) {
  std::vector<ParameterSummary> out;
  for (const auto& sel : all_selectors(draws.d, draws.k))
    out.push_back(summarize(sel.name(), draws.series(sel)));
  return out;
}

std::vector<std::vector<double>> heritability_series(const PosteriorDraws& draws, int trait) {
  if (trait < 0 || trait >= draws.d) throw ValidationError("trait index out of range");
  std::vector<std::vector<double>> out;
  out.reserve(draws.chains.size());
  for (const auto& chain : draws.chains) {
    std::vector<double> h;
    h.reserve(chain.sigma_g.size());
    for (std::size_t i = 0; i < chain.sigma_g.size(); ++i) {
      const double g = chain.sigma_g[i](trait, trait);
      const double e = chain.sigma_e[i](trait, trait);
      h.push_back(g / (g + e));
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<ParameterSummary> heritability_summaries(const PosteriorDraws& draws,
                                                     const std::vector<std::string>& trait_ids) {
  if (!trait_ids.empty() && static_cast<int>(trait_ids.size()) != draws.d)
    throw DimError("trait id count does not match the number of traits");
  std::vector<ParameterSummary> out;
  for (int t = 0; t < draws.d; ++t) {
    const std::string name =
        "h2_" + (trait_ids.empty() ? std::to_string(t + 1) : trait_ids[t]);
    out.push_back(summarize(name, heritability_series(draws, t)));
  }
  return out;
}

void write_summaries(const std::string& path, const std::vector<ParameterSummary>& summaries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "param\tmean\tsd\tnaive_se\tts_se\tq2.5\tq25\tq50\tq75\tq97.5\tess\tpsrf\n";
  for (const auto& s : summaries) {
    out << s.name << '\t' << format_double(s.mean) << '\t' << format_double(s.sd) << '\t'
        << format_double(s.naive_se) << '\t' << format_double(s.timeseries_se) << '\t'
        << format_double(s.q025) << '\t' << format_double(s.q25) << '\t' << format_double(s.q50)
        << '\t' << format_double(s.q75) << '\t' << format_double(s.q975) << '\t'
        << format_double(s.ess) << '\t' << format_double(s.psrf) << '\n';
  }
}

std::vector<ParameterSummary> read_summaries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw EmptyInput("empty summary file " + path);
  std::vector<ParameterSummary> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 12) throw ParseError(path + ": expected 12 columns", line_no);
    ParameterSummary s;
    s.name = fields[0];
    try {
      s.mean = std::stod(fields[1]);
      s.sd = std::stod(fields[2]);
      s.naive_se = std::stod(fields[3]);
      s.timeseries_se = std::stod(fields[4]);
      s.q025 = std::stod(fields[5]);
      s.q25 = std::stod(fields[6]);
      s.q50 = std::stod(fields[7]);
      s.q75 = std::stod(fields[8]);
      s.q975 = std::stod(fields[9]);
      s.ess = std::stod(fields[10]);
      s.psrf = std::stod(fields[11]);
    } catch (const std::exception&) {
      throw ParseError(path + ": non-numeric field", line_no);
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void write_density(const fs::path& path, const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  const double mu = mean_of(values);
  double ss = 0.0;
  for (double x : values) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double iqr = quantile_type7(values, 0.75) - quantile_type7(values, 0.25);
  double bw = 0.9 * std::min(sd, iqr / 1.34) * std::pow(n, -0.2);
  if (bw <= 0.0) bw = std::max(1e-8, 1e-8 * std::abs(mu));

  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it - 3.0 * bw;
  const double hi = *hi_it + 3.0 * bw;
  constexpr int kGrid = 128;
  const double step = (hi - lo) / (kGrid - 1);
  const double norm = 1.0 / (n * bw * std::sqrt(2.0 * M_PI));

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "value,density\n";
  for (int g = 0; g < kGrid; ++g) {
    const double x = lo + g * step;
    double dens = 0.0;
    for (double v : values) {
      const double u = (x - v) / bw;
      dens += std::exp(-0.5 * u * u);
    }
    out << format_double(x) << "," << format_double(dens * norm) << "\n";
  }
}

}  // namespace

void export_traces(const std::string& dir, const PosteriorDraws& draws) {
  ensure_dir(dir);
  for (const auto& sel : all_selectors(draws.d, draws.k)) {
    const auto series = draws.series(sel);
    std::ofstream out(fs::path(dir) / ("trace_" + sel.name() + ".csv"));
    if (!out) throw IoError("cannot write traces in " + dir);
    out << "chain,iter,value\n";
    std::vector<double> pooled;
    for (std::size_t c = 0; c < series.size(); ++c) {
      for (std::size_t i = 0; i < series[c].size(); ++i) {
        out << (c + 1) << "," << draws.chains[c].iters[i] << ","
            << format_double(series[c][i]) << "\n";
        pooled.push_back(series[c][i]);
      }
    }
    if (pooled.size() >= 2)
      write_density(fs::path(dir) / ("density_" + sel.name() + ".csv"), pooled);
  }
}

}  // namespace mvherit
