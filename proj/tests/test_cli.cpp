#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <json.hpp>

#include "roughcal/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace roughcal;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(ROUGHCAL_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("roughcal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateThenAnalyze) {
  auto r = run("--seed 5 gen-terrain --gd 450 --length 100 --out " + path("p.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  r = run("--json-summary analyze " + path("p.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["gd_fitted"].get<double>(), 450.0, 0.15 * 450.0);
  EXPECT_EQ(j["class"], "C");
}

TEST_F(Cli, InvalidGdIsValidationError) {
  const auto r = run("gen-terrain --gd -5 --out " + path("p.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("gd must be positive"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(path("p.csv")));
}

TEST_F(Cli, UnknownOptionIsValidationError) {
  EXPECT_EQ(run("gen-terrain --bogus 1 --out " + path("p.csv")).code, 2);
  EXPECT_EQ(run("").code, 2);
}

TEST_F(Cli, SameSeedSameBytes) {
  ASSERT_EQ(run("--seed 9 gen-terrain --length 20 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("--seed 9 gen-terrain --length 20 --out " + path("b.csv")).code, 0);
  ASSERT_EQ(run("--seed 10 gen-terrain --length 20 --out " + path("c.csv")).code, 0);
  EXPECT_EQ(io::read_file(path("a.csv")), io::read_file(path("b.csv")));
  EXPECT_NE(io::read_file(path("a.csv")), io::read_file(path("c.csv")));
}

TEST_F(Cli, ManifestRecordsRunAndReplays) {
  ASSERT_EQ(run("--seed 3 --set terrain.spacing=0.005 gen-terrain --length 10 --out " + path("p.csv")).code, 0);
  const auto mpath = path("p.csv.manifest.json");
  ASSERT_TRUE(fs::exists(mpath));
  const auto m = json::parse(io::read_file(mpath));
  EXPECT_EQ(m["tool"], "roughcal");
  EXPECT_TRUE(m.contains("argv"));
  EXPECT_TRUE(m.contains("config"));
  EXPECT_TRUE(m["outputs"].contains(path("p.csv")));
  EXPECT_NE(m["config"].get<std::string>().find("spacing = 0.005"), std::string::npos);
  const auto r = run("replay --manifest " + mpath);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("replay identical"), std::string::npos) << r.out;
}

TEST_F(Cli, ReplayDetectsTamperedOutput) {
  ASSERT_EQ(run("--seed 3 gen-terrain --length 10 --out " + path("p.csv")).code, 0);
  const auto mpath = path("p.csv.manifest.json");
  auto m = json::parse(io::read_file(mpath));
  m["outputs"][path("p.csv")] = "0000000000000000";
  io::write_file(mpath, m.dump(2));
  EXPECT_EQ(run("replay --manifest " + mpath).code, 4);
}

TEST_F(Cli, MissingSurrogateNamesRemedy) {
  const auto r = run("run-loop --case B --artifacts " + path("none") + " --out " + path("t.csv"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("roughcal design --noise"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("roughcal train"), std::string::npos) << r.out;
}

TEST_F(Cli, BadSurrogateFileIsLoadFailure) {
  io::write_file(path("s.json"), "{\"truncated\": ");
  EXPECT_EQ(run("calibrate --surrogate " + path("s.json") + " --f 30 --v 1.2").code, 3);
}

TEST_F(Cli, CalibrateWithFixtureSurrogate) {
  fixtures::reference_surrogate(false);
  const auto surrogate = (fs::path(fixtures::fixture_dir()) / "surrogate_A.json").string();
  const auto r = run("--json-summary calibrate --surrogate " + surrogate + " --f 30 --v 1.25 --out " + path("post.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["n_samples"].get<int>(), 4000);
  EXPECT_TRUE(fs::exists(path("post.csv")));
}

TEST_F(Cli, LoopAndRmseOnShortTrack) {
  fixtures::reference_surrogate(false);
  const auto artifacts = fs::path(fixtures::fixture_dir()).string();
  const std::string common = "--seed 4 --set loop.track=30@300,30@500 run-loop --case A --artifacts " + artifacts;
  auto r = run(common + " --out " + path("t.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  r = run(common + " --out " + path("t2.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(io::read_file(path("t.csv")), io::read_file(path("t2.csv")));
  r = run("--json-summary eval-rmse --trace " + path("t.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_FALSE(j.empty());
}
