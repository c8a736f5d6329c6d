#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mvherit/cli.hpp"
#include "mvherit/ingest.hpp"
#include "mvherit/io_util.hpp"
#include "mvherit/kinship.hpp"
#include "mvherit/posterior.hpp"
#include "test_helpers.hpp"

using namespace mvherit;
using test_support::TempDir;

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors and help") {
  TempDir tmp("usage");
  CHECK(dispatch({"--help"}) == 0);
  CHECK(dispatch({"simulate", "--help"}) == 0);
  CHECK(dispatch({"no-such-command"}) == 1);
  CHECK(dispatch({"fit", "--no-such-flag"}) == 1);
  CHECK(dispatch({"fit", "--kinship", "/definitely/not/there", "--phenos", "/nor/this"}) == 1);
  CHECK(dispatch({"simulate", "--h2", "1.5", "--out", tmp.str() + "/bad"}) == 1);
}

TEST_CASE("the full pipeline runs end to end") {
  TempDir tmp("pipeline");
  const std::string sim = tmp.str() + "/sim";
  const std::string kin = tmp.str() + "/kin";
  const std::string fit = tmp.str() + "/fit";

  REQUIRE(dispatch({"simulate", "--n", "120", "--p", "300", "--d", "2", "--h2", "0.6,0.7",
                    "--rg", "0.4", "--miss", "0.15,0.1", "--seed", "11", "--out", sim}) == 0);
  CHECK(fs::exists(sim + "/genotypes.tsv"));
  CHECK(fs::exists(sim + "/phenotypes.tsv"));
  CHECK(fs::exists(sim + "/phenotypes_complete.tsv"));
  CHECK(fs::exists(sim + "/manifest.json"));

  REQUIRE(dispatch({"kinship", "--geno", sim + "/genotypes.tsv", "--out", kin}) == 0);
  CHECK(fs::exists(kin + "/K.tsv"));
  CHECK(fs::exists(kin + "/K.eigen.tsv"));
  SpectralKinship sk = read_kinship(kin);
  CHECK(sk.n() == 120);
  CHECK(sk.k.trace() == doctest::Approx(120.0).epsilon(1e-8));

  REQUIRE(dispatch({"fit", "--kinship", kin, "--phenos", sim + "/phenotypes.tsv",
                    "--iter", "800", "--burnin", "200", "--thin", "2", "--chains", "2",
                    "--seed", "5", "--drop-incomplete", "--out", fit}) == 0);
  CHECK(fs::exists(fit + "/chain_1.csv"));
  CHECK(fs::exists(fit + "/chain_2.csv"));
  CHECK(fs::exists(fit + "/draws_meta.json"));
  CHECK(fs::exists(fit + "/summary.tsv"));
  CHECK(fs::exists(fit + "/model.json"));
  auto sums = read_summaries(fit + "/summary.tsv");
  bool has_h2 = false;
  for (const auto& s : sums) {
    if (s.name.rfind("h2_", 0) == 0) {
      has_h2 = true;
      CHECK(s.mean > 0.0);
      CHECK(s.mean < 1.0);
    }
  }
  CHECK(has_h2);

  const std::string herit = tmp.str() + "/herit";
  REQUIRE(dispatch({"herit", "--draws", fit, "--out", herit}) == 0);
  CHECK(fs::exists(herit + "/heritability.tsv"));
  CHECK(count_lines(herit + "/heritability.tsv") == 3);  // header + 2 traits

  const std::string pred = tmp.str() + "/pred.tsv";
  REQUIRE(dispatch({"predict", "--model", fit, "--phenos", sim + "/phenotypes.tsv",
                    "--out", pred}) == 0);
  PhenotypeMatrix filled = load_phenotypes(pred);
  CHECK_FALSE(filled.has_missing());
  CHECK(filled.n_samples() == 120);
  CHECK(fs::exists(pred + ".manifest.json"));

  const std::string remlout = tmp.str() + "/reml.tsv";
  REQUIRE(dispatch({"reml", "--kinship", kin, "--phenos", sim + "/phenotypes.tsv",
                    "--out", remlout}) == 0);
  CHECK(fs::exists(remlout));
  CHECK(count_lines(remlout) == 3);  // header + one row per trait
  CHECK(fs::exists(remlout + ".manifest.json"));

  const std::string cv = tmp.str() + "/cv_report.tsv";
  REQUIRE(dispatch({"cv", "--kinship", kin, "--phenos", sim + "/phenotypes.tsv",
                    "--folds", "3", "--estimator", "reml", "--impute", "drop",
                    "--seed", "2", "--out", cv}) == 0);
  CHECK(fs::exists(cv));
  CHECK(count_lines(cv) == 3);  // header + one row per trait
}

TEST_CASE("fit refuses incomplete phenotypes unless told to drop them") {
  TempDir tmp("fitmiss");
  const std::string sim = tmp.str() + "/sim";
  const std::string kin = tmp.str() + "/kin";
  REQUIRE(dispatch({"simulate", "--n", "60", "--p", "150", "--d", "1", "--h2", "0.5",
                    "--miss", "0.2", "--seed", "3", "--out", sim}) == 0);
  REQUIRE(dispatch({"kinship", "--geno", sim + "/genotypes.tsv", "--out", kin}) == 0);
  CHECK(dispatch({"fit", "--kinship", kin, "--phenos", sim + "/phenotypes.tsv",
                  "--iter", "300", "--burnin", "100", "--thin", "1",
                  "--out", tmp.str() + "/fit"}) == 1);
}

TEST_CASE("prior simulation writes its histogram and ridge check") {
  TempDir tmp("priorsim");
  const std::string out = tmp.str() + "/prior";
  REQUIRE(dispatch({"priorsim", "--d", "1", "--dof", "3", "--draws", "5000",
                    "--ridge-n", "6", "--ridge-p", "20", "--seed", "4", "--out", out}) == 0);
  CHECK(fs::exists(out + "/effect_hist.tsv"));
  CHECK(fs::exists(out + "/ridge_check.tsv"));
  const std::string ridge = slurp(out + "/ridge_check.tsv");
  CHECK(ridge.find("pass") != std::string::npos);
  CHECK(count_lines(out + "/effect_hist.tsv") == 1003);  // header + 1002 bins
}

TEST_CASE("identical seeds give byte-identical outputs") {
  TempDir tmp("determinism");
  const std::string sim = tmp.str() + "/sim";
  const std::string kin = tmp.str() + "/kin";
  REQUIRE(dispatch({"simulate", "--n", "50", "--p", "120", "--d", "2", "--h2", "0.5,0.6",
                    "--seed", "9", "--out", sim}) == 0);
  REQUIRE(dispatch({"kinship", "--geno", sim + "/genotypes.tsv", "--out", kin}) == 0);

  auto run_fit = [&](const std::string& out) {
    REQUIRE(dispatch({"fit", "--kinship", kin, "--phenos", sim + "/phenotypes.tsv",
                      "--iter", "300", "--burnin", "100", "--thin", "1", "--chains", "2",
                      "--seed", "13", "--out", out}) == 0);
  };
  const std::string fit = tmp.str() + "/fit";
  run_fit(fit);
  const std::string chain1 = slurp(fit + "/chain_1.csv");
  const std::string summary = slurp(fit + "/summary.tsv");
  const std::string model = slurp(fit + "/model.json");
  run_fit(fit);  // rerun into the same directory
  CHECK(slurp(fit + "/chain_1.csv") == chain1);
  CHECK(slurp(fit + "/summary.tsv") == summary);
  CHECK(slurp(fit + "/model.json") == model);
}
