#pragma once

#include <string>
#include <vector>

#include "mvherit/gibbs.hpp"

namespace mvherit {

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double naive_se = 0.0;       // sd / sqrt(N)
  double timeseries_se = 0.0;  // sqrt(S(0) / N), autocorrelation-adjusted
  double q025 = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
  double q975 = 0.0;
  double ess = 0.0;   // effective sample size, summed over chains, capped at N
  double psrf = 0.0;  // NaN when fewer than two chains
};

// Linear-interpolation quantile of the values (R type 7). p in [0, 1].
double quantile_type7(std::vector<double> values, double p);

// Spectral density of the series at frequency zero, from a Yule-Walker
// autoregressive fit with AIC order selection (order capped at
// min(N - 1, 10 log10 N)). White noise gives the series variance.
double spectrum0_ar(const std::vector<double>& series);

// Batch-means estimate of the same quantity, used as a cross-check:
// batch size floor(sqrt(N)), S(0) = b * var(batch means).
double spectrum0_batch(const std::vector<double>& series);

// Potential scale reduction factor over two or more equal-length chains,
// floored at 1 so identical chains report exactly 1.
double psrf(const std::vector<std::vector<double>>& chains);

ParameterSummary summarize(const std::string& name,
                           const std::vector<std::vector<double>>& chains);

std::vector<ParameterSummary> summarize_draws(const PosteriorDraws& draws);

// Per-draw heritability of one trait: Sigma_g_ii / (Sigma_g_ii + Sigma_e_ii).
std::vector<std::vector<double>> heritability_series(const PosteriorDraws& draws, int trait);

std::vector<ParameterSummary> heritability_summaries(const PosteriorDraws& draws,
                                                     const std::vector<std::string>& trait_ids = {});

void write_summaries(const std::string& path, const std::vector<ParameterSummary>& summaries);
std::vector<ParameterSummary> read_summaries(const std::string& path);

// Per-parameter trace CSVs (chain,iter,value) and Gaussian-kernel density
// estimates (Silverman bandwidth, 128 grid points) of the pooled draws.
void export_traces(const std::string& dir, const PosteriorDraws& draws);

}  // namespace mvherit
