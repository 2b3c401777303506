#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ccv/experiment.hpp"
#include "ccv/oracle.hpp"

namespace ex = ccv::experiment;

namespace {

const char* kMinimal = R"({
  "model": "ssep", "N": 10, "t_final": 500, "seed": 1,
  "observables": [{"kind": "site", "x": 0.5}]
})";

std::string expect_config_error(const std::string& text) {
  try {
    ex::parse_config(text);
  } catch (const ccv::ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(ParseConfig, MinimalAppliesDefaults) {
  const auto c = ex::parse_config(kMinimal);
  EXPECT_EQ(c.model, ex::ModelKind::Ssep);
  EXPECT_EQ(c.n, 10u);
  EXPECT_EQ(c.alpha, 1.0);
  EXPECT_EQ(c.batches, 32u);
  EXPECT_EQ(c.burn_in_fraction, 0.1);
  EXPECT_EQ(c.replicas, 1u);
  EXPECT_EQ(c.estimators, ex::Estimators::Both);
  EXPECT_FALSE(c.use_mean_holding_times);
  EXPECT_EQ(c.ssep.alpha, 2.0);
  EXPECT_EQ(c.ssep.beta, 0.1);
  EXPECT_EQ(c.ssep.gamma, 1.0);
  EXPECT_EQ(c.ssep.delta, 0.3);
  EXPECT_EQ(c.acf_spacing, 1.0);
  EXPECT_EQ(c.acf_cutoff, 0.05);
}

TEST(ParseConfig, KmpParameters) {
  const auto c = ex::parse_config(R"({"model": "kmp", "N": 5, "t_final": 10, "seed": 3,
    "params": {"T_L": 2, "T_R": 4}, "observables": [{"kind": "pair", "x": 0.2, "y": 0.8}]})");
  EXPECT_EQ(c.model, ex::ModelKind::Kmp);
  EXPECT_EQ(c.kmp.t_left, 2.0);
  EXPECT_EQ(c.kmp.t_right, 4.0);
  EXPECT_TRUE(c.observables[0].pair);
}

TEST(ParseConfig, UnknownKeysNamed) {
  EXPECT_NE(expect_config_error(R"({"model": "ssep", "N": 3, "t_final": 1, "seed": 1,
    "observables": [{"kind": "site", "x": 0.5}], "colour": 1})").find("colour"), std::string::npos);
  EXPECT_NE(expect_config_error(R"({"model": "ssep", "N": 3, "t_final": 1, "seed": 1,
    "params": {"T_L": 1}, "observables": [{"kind": "site", "x": 0.5}]})").find("T_L"), std::string::npos);
  EXPECT_NE(expect_config_error(R"({"model": "ssep", "N": 3, "t_final": 1, "seed": 1,
    "observables": [{"kind": "site", "x": 0.5, "z": 2}]})").find("'z'"), std::string::npos);
}

TEST(ParseConfig, OutOfRangeValuesNamed) {
  const std::string base = R"("model": "ssep", "N": 3, "seed": 1, "observables": [{"kind": "site", "x": 0.5}])";
  EXPECT_NE(expect_config_error("{" + base + R"(, "t_final": 0})").find("t_final"), std::string::npos);
  EXPECT_NE(expect_config_error("{" + base + R"(, "t_final": 1, "batches": 1})").find("batches"), std::string::npos);
  EXPECT_NE(expect_config_error("{" + base + R"(, "t_final": 1, "replicas": 0})").find("replicas"), std::string::npos);
  EXPECT_NE(expect_config_error("{" + base + R"(, "t_final": 1, "burn_in_fraction": 1.0})").find("burn_in_fraction"), std::string::npos);
  EXPECT_NE(expect_config_error("{" + base + R"(, "t_final": 1, "seed": -4})").find("seed"), std::string::npos);
  EXPECT_NE(expect_config_error("{" + base + R"(, "t_final": "long"})").find("t_final"), std::string::npos);
  EXPECT_NE(expect_config_error(R"({"model": "ising", "N": 3, "t_final": 1, "seed": 1, "observables": []})").find("model"), std::string::npos);
  EXPECT_NE(expect_config_error(R"({"model": "ssep", "N": 3, "t_final": 1, "observables": []})").find("seed"), std::string::npos);
  EXPECT_NE(expect_config_error(R"({"model": "ssep", "N": 3, "t_final": 1, "seed": 1,
    "observables": [{"kind": "site", "x": 1.5}]})").find("observables[0]"), std::string::npos);
}

TEST(ParseConfig, MalformedText) {
  EXPECT_NE(expect_config_error("{\"model\": ").find("malformed"), std::string::npos);
  expect_config_error("[1, 2]");
}

TEST(ParseConfig, CollidingPairNamesObservable) {
  const auto msg = expect_config_error(R"({"model": "ssep", "N": 10, "t_final": 1, "seed": 1,
    "observables": [{"kind": "site", "x": 0.5}, {"kind": "pair", "x": 0.31, "y": 0.39}]})");
  EXPECT_NE(msg.find("observables[1]"), std::string::npos);
  EXPECT_NE(msg.find("same site"), std::string::npos);
  expect_config_error(R"({"model": "ssep", "N": 10, "t_final": 1, "seed": 1,
    "observables": [{"kind": "pair", "x": 0.5, "y": 0.5}]})");
}

TEST(ParseConfig, SweepChecksEveryN) {
  // 0.2 and 0.3 share site 1 at N=4 but not at N=50.
  const auto msg = expect_config_error(R"({"model": "ssep", "sweep": [50, 4], "t_final": 1,
    "seed": 1, "observables": [{"kind": "pair", "x": 0.2, "y": 0.3}]})");
  EXPECT_NE(msg.find("N=4"), std::string::npos);
}

TEST(ObservableMapping, FloorOfXN) {
  EXPECT_EQ(ccv::site_index(0.2, 50), 10u);
  EXPECT_EQ(ccv::site_index(0.9, 50), 45u);
  EXPECT_EQ(ccv::site_index(0.29, 100), 29u);
  EXPECT_EQ(ccv::site_index(0.01, 50), 1u);  // clamped up from 0
  EXPECT_EQ(ccv::site_index(0.999, 3), 2u);
  const auto obs = ex::resolve({true, 0.2, 0.9}, 50, 0);
  EXPECT_EQ(ccv::label(obs), "pair:10:45");
}

TEST(RunExperiment, BothEstimatorsMatchOracleAtN3) {
  auto c = ex::parse_config(R"({"model": "ssep", "N": 3, "t_final": 1e5, "seed": 5,
    "observables": [{"kind": "site", "x": 0.34}, {"kind": "site", "x": 0.67}]})");
  const auto [point, files] = ex::run_experiment(c);
  const auto pi = ccv::oracle::stationary_distribution(
      ccv::oracle::build_ssep_generator(ccv::ssep::Params{3, 2.0, 0.1, 1.0, 0.3}));
  for (const auto& o : point.combined) {
    const double exact = ccv::oracle::exact_expectation(pi, 3, o.observable);
    EXPECT_NEAR(o.simple->value, exact, 3.0 * o.simple->se);
    EXPECT_NEAR(o.coupled->value, exact, 3.0 * o.coupled->se);
    EXPECT_NEAR(o.x_average->value, exact, 3.0 * o.x_average->se);
    ASSERT_TRUE(o.ratio.has_value());
    EXPECT_GT(o.ratio->e_n, 0.0);
  }
  EXPECT_GT(point.rejection_rate, 0.0);
  ASSERT_EQ(files.files.size(), 3u);
  EXPECT_EQ(files.files[0].first, "report.json");
  EXPECT_EQ(files.files[1].first, "batches_r0.csv");
  EXPECT_EQ(files.files[2].first, "timing.json");
}

TEST(RunExperiment, SimpleOnlyAtEquilibrium) {
  const auto c = ex::parse_config(R"({"model": "ssep", "N": 20, "t_final": 2e4, "seed": 6,
    "estimators": "simple", "params": {"alpha": 2, "beta": 3, "gamma": 3, "delta": 2},
    "observables": [{"kind": "site", "x": 0.5}]})");
  const auto [point, files] = ex::run_experiment(c);
  const auto& o = point.combined[0];
  EXPECT_NEAR(o.simple->value, 0.4, 3.0 * o.simple->se);
  EXPECT_FALSE(o.coupled.has_value());
  EXPECT_FALSE(o.ratio.has_value());
}

TEST(RunExperiment, ReplicasUseDistinctSeeds) {
  const auto c = ex::parse_config(R"({"model": "kmp", "N": 6, "t_final": 500, "seed": 7,
    "replicas": 2, "observables": [{"kind": "site", "x": 0.5}]})");
  const auto [point, files] = ex::run_experiment(c);
  ASSERT_EQ(point.replicas.size(), 2u);
  EXPECT_NE(point.replicas[0].seed, point.replicas[1].seed);
  std::string csv0, csv1;
  for (const auto& [name, content] : files.files) {
    if (name == "batches_r0.csv") csv0 = content;
    if (name == "batches_r1.csv") csv1 = content;
  }
  EXPECT_FALSE(csv0.empty());
  EXPECT_NE(csv0, csv1);
  EXPECT_EQ(csv0.substr(0, csv0.find('\n')), "observable,estimator,batch,batch_start,batch_end,mean");
}

TEST(RunExperiment, SameSeedSameBytes) {
  const auto c = ex::parse_config(R"({"model": "ssep", "N": 8, "t_final": 2000, "seed": 8,
    "replicas": 2, "observables": [{"kind": "site", "x": 0.5}, {"kind": "pair", "x": 0.2, "y": 0.8}]})");
  const auto a = ex::run_experiment(c).second;
  const auto b = ex::run_experiment(c).second;
  ASSERT_EQ(a.files.size(), b.files.size());
  for (std::size_t k = 0; k < a.files.size(); ++k) {
    if (a.files[k].first == "timing.json") continue;
    EXPECT_EQ(a.files[k].second, b.files[k].second) << a.files[k].first;
  }
}

TEST(RunExperiment, ReportEchoesConfig) {
  const auto c = ex::parse_config(kMinimal);
  const auto files = ex::run_experiment(c).second;
  const auto j = ex::Json::parse(files.files[0].second);
  EXPECT_EQ(j["config"]["alpha"], 1.0);
  EXPECT_EQ(j["config"]["batches"], 32);
  EXPECT_EQ(j["config"]["seed"], 1);
  EXPECT_TRUE(j["result"]["replicas"][0].contains("jumps"));
  EXPECT_TRUE(j["result"]["combined"][0].contains("eq_expectation"));
  EXPECT_FALSE(j["result"]["replicas"][0].contains("wall_seconds"));
}

TEST(RunSweep, CsvSchemaIsFixed) {
  const auto c = ex::parse_config(R"({"model": "ssep", "sweep": [50], "t_final": 300, "seed": 9,
    "observables": [{"kind": "pair", "x": 0.2, "y": 0.9}]})");
  const auto [points, files] = ex::run_sweep(c);
  ASSERT_EQ(files.files[0].first, "sweep.csv");
  const std::string& csv = files.files[0].second;
  const std::string golden = read_file(std::filesystem::path(CCV_TEST_DATA) / "sweep_header.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n') + 1), golden);
  EXPECT_NE(csv.find("ssep,50,pair:10:45,"), std::string::npos);
  EXPECT_EQ(points.size(), 1u);
}

TEST(RunSweep, FailingPointIsReported) {
  // Window too short for the autocorrelation analysis.
  auto c = ex::parse_config(R"({"model": "kmp", "sweep": [4], "t_final": 20, "seed": 10,
    "acf_spacing": 5, "observables": [{"kind": "site", "x": 0.5}]})");
  try {
    ex::run_sweep(c);
    FAIL() << "expected failure";
  } catch (const ex::PointError& e) {
    EXPECT_EQ(e.n(), 4u);
    EXPECT_NE(std::string(e.what()).find("N=4"), std::string::npos);
  }
}

TEST(RunSweep, RejectsEmptySweepAndPlainRunRejectsSweep) {
  const auto plain = ex::parse_config(kMinimal);
  EXPECT_THROW(ex::run_sweep(plain), ccv::ConfigError);
  const auto sweep = ex::parse_config(R"({"model": "ssep", "sweep": [5], "t_final": 10,
    "seed": 1, "observables": [{"kind": "site", "x": 0.5}]})");
  EXPECT_THROW(ex::run_experiment(sweep), ccv::ConfigError);
}

TEST(WriteOutputs, NothingWrittenOnConfigError) {
  const auto dir = std::filesystem::temp_directory_path() / "ccv_no_partial";
  std::filesystem::remove_all(dir);
  try {
    auto c = ex::parse_config(kMinimal);
    c.output = dir.string();
    c.t_final = -1.0;
    ex::run_experiment(c);
  } catch (const ccv::ConfigError&) {
  }
  EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(JsonWriter, SeventeenDigitsAndNullForNonFinite) {
  ex::Json j;
  j["a"] = 0.1;
  j["b"] = std::numeric_limits<double>::infinity();
  std::ostringstream os;
  ex::write_json(os, j);
  EXPECT_NE(os.str().find("0.10000000000000001"), std::string::npos);
  EXPECT_NE(os.str().find("\"b\": null"), std::string::npos);
  EXPECT_EQ(ex::csv_number(0.1), "0.1");
  EXPECT_EQ(ex::csv_number(1.0 / 3.0), "0.3333333333");
}

TEST(OracleReport, ExactValuesForSmallSsep) {
  const auto c = ex::parse_config(R"({"model": "ssep", "N": 3, "t_final": 1, "seed": 1,
    "observables": [{"kind": "pair", "x": 0.34, "y": 0.67}]})");
  const auto j = ex::oracle_report(c);
  EXPECT_NEAR(j["site_means"][0].get<double>(), 635.0 / 716.0, 1e-12);
  EXPECT_EQ(j["observables"][0]["label"], "pair:1:2");
  auto big = c;
  big.n = 13;
  EXPECT_THROW(ex::oracle_report(big), ccv::ConfigError);
  auto kmp = c;
  kmp.model = ex::ModelKind::Kmp;
  EXPECT_THROW(ex::oracle_report(kmp), ccv::ConfigError);
}
