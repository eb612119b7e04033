#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pompkit/harness.hpp"
#include "test_support.hpp"

using namespace pompkit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pompkit_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json small_if1(const fs::path& out) {
  auto j = json::parse(R"({
    "model": "ou2", "command": "if1", "M": 3, "J": 50, "n_times": 20,
    "pert": {"sd": {"alpha.2": 0.02, "alpha.3": 0.02}, "cooling": 0.9},
    "replicates": {"R": 3, "base_seed": 7, "start_box": {"alpha.2": [-1, 0], "alpha.3": [0, 1]}}
  })");
  j["out"] = out.string();
  return j;
}

}  // namespace

TEST(Io, DataRoundTripIsExact) {
  const auto& d = testsupport::ou2_data();
  std::stringstream ss;
  write_data_csv(ss, d, {"a comment", "two\nlines"});
  const auto back = read_data_csv(ss);
  ASSERT_EQ(back.times, d.times);
  EXPECT_EQ(back.observations, d.observations);
}

TEST(Io, DataReaderRejectsRaggedRows) {
  std::stringstream ss("time,y1,y2\n1,2,3\n2,3\n");
  EXPECT_THROW(read_data_csv(ss), ValidationError);
  std::stringstream bad("time,y1\n1,abc\n");
  EXPECT_THROW(read_data_csv(bad), ValidationError);
}

TEST(Io, ParamsJsonRoundTripAndUnknownNames) {
  const auto m = ou2_model();
  const auto th = ou2_truth();
  const auto j = params_to_json(m, th);
  EXPECT_EQ(params_from_json(m, j, ParamVector::Zero(th.size())), th);
  EXPECT_THROW(params_from_json(m, json{{"alpha.9", 1.0}}, th), ValidationError);
}

TEST(Io, TableReaderKeepsNaN) {
  std::stringstream ss("# x\na,b\n1,NaN\n2,-Inf\n");
  const auto t = read_table_csv(ss);
  ASSERT_EQ(t.rows.size(), 2U);
  EXPECT_TRUE(std::isnan(t.column("b")[0]));
  EXPECT_EQ(t.column("a")[1], 2.0);
  EXPECT_THROW(t.column("c"), ValidationError);
}

TEST(Config, CollectsEveryViolation) {
  const auto j = json::parse(R"({
    "model": "ou2", "command": "is2", "M": 0, "L": 0,
    "pert": {"sd": {"alpha.2": -1, "nope": 1}},
    "replicates": {"R": 0}
  })");
  try {
    parse_config(j);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_GE(e.violations().size(), 5U);
  }
}

TEST(Config, RejectsUnknownCommandAndModel) {
  EXPECT_THROW(parse_config(json{{"model", "ou2"}, {"command", "fly"}}), ValidationError);
  EXPECT_THROW(parse_config(json{{"model", "nope"}, {"command", "if1"}}), ValidationError);
}

TEST(Config, IntegerFieldsAcceptSignedLiterals) {
  json j{{"command", "if1"}};
  j["M"] = 20;
  j["replicates"]["R"] = 30;
  const auto c = parse_config(j);
  EXPECT_EQ(c.M, 20U);
  EXPECT_EQ(c.reps, 30U);
  j["M"] = -3;
  EXPECT_THROW(parse_config(j), ValidationError);
}

TEST(Config, AcceptsComments) {
  const auto p = scratch("comments");
  fs::create_directories(p);
  std::ofstream(p / "c.json") << "// header\n{ \"command\": \"pfilter\" /* inline */ }\n";
  EXPECT_EQ(parse_config(read_config_file((p / "c.json").string())).command, "pfilter");
}

TEST(Config, CoolingFromFinalFraction) {
  auto j = json::parse(R"({"command": "if1", "M": 20, "pert": {"sd": {"alpha.2": 0.02}, "cooling_final_fraction": 0.55}})");
  const auto c = parse_config(j);
  EXPECT_NEAR(std::pow(c.pert.cooling, 19.0), 0.55, 1e-12);
}

TEST(Harness, RunsAreByteIdenticalAcrossJobs) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  auto ja = small_if1(a), jb = small_if1(b);
  ja["jobs"] = 1;
  jb["jobs"] = 3;
  const auto ra = run(parse_config(ja));
  const auto rb = run(parse_config(jb));
  for (std::size_t r = 0; r < 3; ++r) {
    const auto name = detail::rep_name("trace", r);
    EXPECT_EQ(slurp(a / name), slurp(b / name));
    EXPECT_EQ(ra.replicates[r].final_theta, rb.replicates[r].final_theta);
  }
  EXPECT_EQ(ra.replicates[1].seed, 7U ^ 1U);
}

TEST(Harness, StartsDrawnInsideBox) {
  const auto res = run(parse_config(small_if1(scratch("box"))));
  for (const auto& r : res.replicates) {
    EXPECT_GE(r.start[ou2::alpha_2], -1.0);
    EXPECT_LE(r.start[ou2::alpha_2], 0.0);
    EXPECT_GE(r.start[ou2::alpha_3], 0.0);
    EXPECT_LE(r.start[ou2::alpha_3], 1.0);
  }
  EXPECT_NE(res.replicates[0].start[ou2::alpha_2], res.replicates[1].start[ou2::alpha_2]);
}

TEST(Harness, OracleMleIsStationaryAndCached) {
  const auto out = scratch("oracle");
  const auto res = run(parse_config(small_if1(out)));
  ASSERT_TRUE(res.oracle.has_value());
  ASSERT_TRUE(fs::exists(out / "oracle_mle.json"));
  const auto data = simulate(ou2_model(20), ou2_truth(), RngStream(1)).data;
  for (auto idx : {ou2::alpha_2, ou2::alpha_3})
    for (double d : {-1e-3, 1e-3}) {
      auto th = res.oracle->theta;
      th[idx] += d;
      EXPECT_LE(ou2_kalman_loglik(th, data), res.oracle->loglik);
    }
  const auto again = cached_ou2_oracle(res.config, data, out);
  EXPECT_EQ(again.loglik, res.oracle->loglik);
}

TEST(Summarize, FractionsAndOrdering) {
  const auto dir = scratch("summ");
  auto write = [&](const std::string& label, std::vector<double> lls) {
    json s;
    s["label"] = label;
    s["command"] = label;
    s["oracle"] = {{"loglik", 0.0}};
    for (double l : lls) s["replicates"].push_back({{"oracle_loglik", l}});
    fs::create_directories(dir / label);
    std::ofstream(dir / label / "summary.json") << s.dump();
  };
  write("worse", {-20, -9, -5, -3});
  write("better", {-1, -1.5, -3, -12});
  const auto rep = summarize(dir);
  ASSERT_EQ(rep.methods.size(), 2U);
  EXPECT_EQ(rep.methods[0].label, "better");
  EXPECT_DOUBLE_EQ(rep.methods[0].within2, 0.5);
  EXPECT_DOUBLE_EQ(rep.methods[0].within4, 0.75);
  EXPECT_DOUBLE_EQ(rep.methods[1].within10, 0.75);
  EXPECT_DOUBLE_EQ(rep.methods[1].median, -7.0);
  EXPECT_TRUE(fs::exists(dir / "report.csv"));
}

TEST(Summarize, EmptyDirectoryIsAnError) {
  const auto dir = scratch("empty");
  fs::create_directories(dir);
  EXPECT_THROW(summarize(dir), ValidationError);
  EXPECT_THROW(summarize(dir / "missing"), ValidationError);
}

TEST(Harness, SamplerSummaryCarriesEss) {
  const auto out = scratch("chain");
  auto j = json::parse(R"({
    "model": "gompertz", "command": "pmmh", "M": 60, "J": 20, "n_times": 10, "burn_in": 10,
    "proposal": {"scales": {"sigma": 0.01, "tau": 0.01}},
    "replicates": {"R": 2, "base_seed": 3}
  })");
  j["out"] = out.string();
  const auto res = run(parse_config(j));
  EXPECT_TRUE(res.summary["replicates"][0]["ess"].contains("sigma"));
  EXPECT_FALSE(res.summary["replicates"][0]["ess"].contains("r"));
  std::ifstream f(out / "chain_001.csv");
  EXPECT_EQ(read_table_csv(f).rows.size(), 60U);
}
