#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "ssn/io.hpp"

namespace {

namespace fs = std::filesystem;
using ssn::io::Json;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ssn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(SSN_LAB_PATH) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // A short training run shared by the model-consuming tests.
  std::string train_short() const {
    EXPECT_EQ(run("toy-train --rank 1 --iters 300 --pretrain-iters 500 --mc-samples 50 "
                  "--eval-lik-samples 200 --out " + path("train")),
              0);
    return path("train/model.ssnt");
  }

  fs::path dir_;
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("toy-train --rank 0 --out " + path("x")), 2);
  EXPECT_EQ(run("toy-train --mode full --out " + path("x")), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("toy-eval --help"), 0);
  EXPECT_EQ(run("toy-train --lr -1 --out " + path("x")), 2);
}

TEST_F(Cli, MissingOrMalformedFilesExitFour) {
  EXPECT_EQ(run("toy-eval --model " + path("missing.ssnt") + " --out " + path("e")), 4);
  ssn::io::write_text(dir_ / "bad.ssnt", "{\"format\":\"SSNT\"");
  EXPECT_EQ(run("toy-eval --model " + path("bad.ssnt") + " --out " + path("e")), 4);
  EXPECT_EQ(run("metrics --gt " + path("none") + " --pred " + path("none") + " --out " +
                path("m.json")),
            4);
}

TEST_F(Cli, PretrainingDivergenceExitsThree) {
  EXPECT_EQ(run("toy-train --pretrain-lr inf --out " + path("d")), 3);
}

TEST_F(Cli, ToyTrainWritesArtifacts) {
  train_short();
  const Json report = Json::parse(ssn::io::read_text(dir_ / "train/report.json"));
  for (const char* key : {"mode", "rank", "seed", "stop_reason", "final_nll_per_map",
                          "joint_iterations_run", "phase_boundary"}) {
    EXPECT_TRUE(report.contains(key)) << key;
  }
  EXPECT_EQ(report["rank"], 1);
  const std::string csv = ssn::io::read_text(dir_ / "train/loss.csv");
  EXPECT_EQ(csv.rfind("iteration,phase,loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 801);
  EXPECT_EQ(ssn::io::load_ssnt(dir_ / "train/model.ssnt").rank(), 1u);
}

TEST_F(Cli, ToyEvalWritesPlotsAndReport) {
  const auto model = train_short();
  ASSERT_EQ(run("toy-eval --model " + model + " --samples 500 --lik-samples 500 --out " +
                path("eval")),
            0);
  const Json eval = Json::parse(ssn::io::read_text(dir_ / "eval/eval.json"));
  for (const char* key : {"nll_per_map", "diversity", "histogram", "ged", "map_fraction"}) {
    EXPECT_TRUE(eval.contains(key)) << key;
  }
  const auto cov = ssn::io::read_pgm(dir_ / "eval/covariance.pgm");
  EXPECT_EQ(cov.width, 21u);
  EXPECT_EQ(cov.height, 21u);
  for (std::size_t i = 0; i < 21; ++i) {
    for (std::size_t j = 0; j < 21; ++j) EXPECT_EQ(cov.pixels[i * 21 + j], cov.pixels[j * 21 + i]);
  }
  const auto samples = ssn::io::read_pgm(dir_ / "eval/samples.pgm");
  EXPECT_EQ(samples.height, 21u);
  EXPECT_EQ(samples.width % 14, 0u);
  const Json side = Json::parse(ssn::io::read_text(dir_ / "eval/samples.pgm.json"));
  EXPECT_EQ(side["cols"], 14);
  EXPECT_TRUE(fs::exists(dir_ / "eval/mean.pgm.json"));
}

TEST_F(Cli, DeterministicModelHasZeroDiversity) {
  ssn::Tensor mean({21}), factor({21, 1}), raw({21});
  for (std::size_t i = 0; i < 21; ++i) {
    mean[i] = i < 7 ? 6.0 : -6.0;
    raw[i] = ssn::kDiagRawAtFloor;
  }
  ssn::io::save_ssnt(dir_ / "det.ssnt", ssn::LowRankGaussian(mean, factor, raw, 21, 1, 1));
  ASSERT_EQ(run("toy-eval --model " + path("det.ssnt") + " --samples 200 --lik-samples 100 --out " +
                path("eval")),
            0);
  const Json eval = Json::parse(ssn::io::read_text(dir_ / "eval/eval.json"));
  EXPECT_EQ(eval["diversity"].get<double>(), 0.0);
}

TEST_F(Cli, ManipulateIdentityIsByteIdentical) {
  const auto model = train_short();
  ASSERT_EQ(run("manipulate --model " + model +
                " --scale '{\"per_class\":[1],\"temperature\":1}' --out " + path("same.ssnt")),
            0);
  EXPECT_EQ(ssn::io::read_text(model), ssn::io::read_text(dir_ / "same.ssnt"));
  ssn::io::write_text(dir_ / "scale.json", R"({"per_class":[2.0],"temperature":0.5})");
  ASSERT_EQ(run("manipulate --model " + model + " --scale " + path("scale.json") + " --out " +
                path("scaled.ssnt")),
            0);
  EXPECT_EQ(ssn::io::load_ssnt(dir_ / "scaled.ssnt").factor(),
            ssn::io::load_ssnt(model).factor());
  EXPECT_EQ(run("manipulate --model " + model + " --scale '{\"per_class\":[1,1]}' --out " +
                path("x.ssnt")),
            2);
}

TEST_F(Cli, SampleThenMetricsOnSameDirectoryIsZero) {
  const auto model = train_short();
  ASSERT_EQ(run("sample --model " + model + " --n 12 --seed 3 --out " + path("s")), 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "s")) files += e.path().extension() == ".json";
  EXPECT_EQ(files, 12u);
  ASSERT_EQ(run("metrics --gt " + path("s") + " --pred " + path("s") + " --out " + path("m.json")),
            0);
  const Json m = Json::parse(ssn::io::read_text(dir_ / "m.json"));
  EXPECT_EQ(m["ged_squared"].get<double>(), 0.0);
  EXPECT_EQ(m["pred_samples"], 12);
}

TEST_F(Cli, RankSweepRowsAndJobsFromEnvironment) {
  const std::string flags = "rank-sweep --ranks 1,3 --seeds 2 --iters 100 --pretrain-iters 300 "
                            "--mc-samples 20 --eval-samples 100 --eval-lik-samples 100 --out ";
  ASSERT_EQ(run(flags + path("serial")), 0);
  setenv("SSN_LAB_JOBS", "2", 1);
  const int parallel = run(flags + path("parallel"));
  setenv("SSN_LAB_JOBS", "0", 1);
  const int invalid = run(flags + path("invalid"));
  unsetenv("SSN_LAB_JOBS");
  ASSERT_EQ(parallel, 0);
  EXPECT_EQ(invalid, 2);
  const std::string csv = ssn::io::read_text(dir_ / "serial/sweep.csv");
  EXPECT_EQ(csv.rfind("rank,seed,nll,diversity,ged2,stop_reason,status\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("\n3,1,"), std::string::npos);
  EXPECT_EQ(csv, ssn::io::read_text(dir_ / "parallel/sweep.csv"));
  const std::string summary = ssn::io::read_text(dir_ / "serial/summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 3);
}

TEST_F(Cli, FullLengthToyRuns) {
  ASSERT_EQ(run("toy-train --mode lowrank --rank 2 --seed 7 --out " + path("low")), 0);
  const Json low = Json::parse(ssn::io::read_text(dir_ / "low/report.json"));
  EXPECT_LE(low["final_nll_per_map"].get<double>(), 1.3);
  ASSERT_EQ(run("toy-eval --model " + path("low/model.ssnt") + " --out " + path("low/eval")), 0);
  const Json eval = Json::parse(ssn::io::read_text(dir_ / "low/eval/eval.json"));
  EXPECT_GE(eval["covariance_block_ratio"].get<double>(), 5.0);

  ASSERT_EQ(run("toy-train --mode diagonal --out " + path("diag")), 0);
  const double nll = Json::parse(ssn::io::read_text(dir_ / "diag/report.json"))["final_nll_per_map"];
  EXPECT_GE(nll, 4.3);
  EXPECT_LE(nll, 5.6);
}

TEST_F(Cli, GradcheckPasses) {
  EXPECT_EQ(run("gradcheck --trials 50 --seed 1"), 0);
  const std::string out = ssn::io::read_text(dir_ / "stdout.txt");
  EXPECT_NE(out.find("0 failures"), std::string::npos) << out;
}

}  // namespace
