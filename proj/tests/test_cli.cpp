#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sslab/cli.hpp"

namespace fs = std::filesystem;
using sslab::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sslab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sslab_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, ClassifyHumanAndJson) {
  auto r = invoke({"classify", "--m", "6/5"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("DualSpace"), std::string::npos);
  EXPECT_NE(r.out.find("L^9"), std::string::npos);
  r = invoke({"classify", "--r", "7", "--theta", "0", "--m", "14/13", "--json"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["regimes"].size(), 2u);
  EXPECT_EQ(j["regimes"][1]["u_exponent"], "8");
  EXPECT_TRUE(j["s_m"].is_null());
}

TEST(Cli, ClassifyWorksInHighDimension) {
  const auto r = invoke({"classify", "--d", "7", "--m", "2", "--json"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out)["regimes"][0]["u_exponent"], "7");
}

TEST(Cli, InvalidParametersExitTwo) {
  EXPECT_EQ(invoke({"classify", "--gamma", "1"}).code, 2);
  EXPECT_EQ(invoke({"classify", "--m", "1.2"}).code, 2);
  EXPECT_EQ(invoke({"classify", "--d", "2"}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"solve", "--no-such-flag"}).code, 2);
  EXPECT_EQ(invoke({"solve", "--preset", "nope", "--out", scratch("bad").string()}).code, 2);
}

TEST(Cli, SolveInFourDimensionsPointsAtClassify) {
  const auto r = invoke({"solve", "--d", "4", "--out", scratch("d4").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("classify"), std::string::npos);
}

TEST(Cli, UnwritableOutputExitsFour) {
  const fs::path blocker = scratch("blocker");
  { std::ofstream(blocker) << "x"; }
  const auto r = invoke({"solve", "--n-cells", "4", "--schedule", "1", "--out", (blocker / "sub").string()});
  EXPECT_EQ(r.code, 4);
  fs::remove(blocker);
}

TEST(Cli, SolveWritesDeterministicOutputs) {
  const fs::path a = scratch("solve_a"), b = scratch("solve_b");
  const std::vector<std::string> base{"solve", "--n-cells", "6", "--schedule", "1,2,4"};
  auto args = base;
  args.insert(args.end(), {"--out", a.string()});
  ASSERT_EQ(invoke(args).code, 0);
  args = base;
  args.insert(args.end(), {"--out", b.string(), "--jobs", "2"});
  ASSERT_EQ(invoke(args).code, 0);
  for (const char* f : {"sweep.csv", "u.txt", "v.txt", "summary.json"}) ASSERT_TRUE(fs::exists(a / f)) << f;
  EXPECT_EQ(slurp(a / "sweep.csv"), slurp(b / "sweep.csv"));
  EXPECT_EQ(nlohmann::json::parse(slurp(a / "summary.json"))["all_converged"], true);
}

TEST(Cli, NonConvergenceExitsThree) {
  const auto r = invoke({"solve", "--n-cells", "6", "--schedule", "8", "--max-outer", "1", "--out",
                         scratch("nc").string()});
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, VerifyAllPassesAndCatchesCorruption) {
  const fs::path dir = scratch("verify");
  ASSERT_EQ(invoke({"solve", "--n-cells", "6", "--schedule", "1,2,4", "--out", dir.string()}).code, 0);
  auto r = invoke({"verify-all", "--n-cells", "8", "--out", (dir / "audit").string()});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "audit" / "audits.csv"));
  EXPECT_TRUE(fs::exists(dir / "audit" / "audits.json"));

  // audit the solved state, then the same state with u doubled
  r = invoke({"verify-all", "--n-cells", "6", "--load-u", (dir / "u.txt").string(), "--load-v",
              (dir / "v.txt").string(), "--level", "4", "--out", (dir / "loaded").string()});
  EXPECT_EQ(r.code, 0) << r.out;
  const auto u = sslab::load_field((dir / "u.txt").string());
  sslab::save_field(2.0 * u, (dir / "u2.txt").string());
  r = invoke({"verify-all", "--n-cells", "6", "--load-u", (dir / "u2.txt").string(), "--load-v",
              (dir / "v.txt").string(), "--level", "4", "--out", (dir / "bad").string()});
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.out.find("failures"), std::string::npos);
}

TEST(Cli, VerifyAllWithoutRegimeSaysSo) {
  const auto r = invoke({"verify-all", "--preset", "none-d3", "--n-cells", "4", "--out", scratch("none").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("no audits applicable"), std::string::npos);
}

TEST(Cli, ConfigFileAndEnvironment) {
  const fs::path dir = scratch("config");
  fs::create_directories(dir);
  { std::ofstream(dir / "run.toml") << "[solve]\nn-cells = 5\nschedule = \"1,2\"\n"; }
  ::setenv("SSLAB_OUTPUT_DIR", (dir / "from_env").string().c_str(), 1);
  auto r = invoke({"--config", (dir / "run.toml").string(), "solve"});
  ::unsetenv("SSLAB_OUTPUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("grid 5^3"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "from_env" / "sweep.csv"));
  // a flag beats the config file
  r = invoke({"--config", (dir / "run.toml").string(), "solve", "--n-cells", "4", "--out", (dir / "flag").string()});
  EXPECT_NE(r.out.find("grid 4^3"), std::string::npos);
}

TEST(Cli, MmsLinear) {
  const fs::path dir = scratch("mms");
  const auto r = invoke({"mms", "--d", "1", "--grids", "15,31", "--out", dir.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir / "mms.csv"));
  const auto at = r.out.find("order_u=");
  ASSERT_NE(at, std::string::npos);
  EXPECT_NEAR(std::stod(r.out.substr(at + 8)), 2.0, 0.2);
}

TEST(Cli, VerifyAllDualSpacePresetPasses) {
  const auto r = invoke({"verify-all", "--preset", "dual-space-d3", "--out", scratch("dual").string()});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("scaling_law"), std::string::npos);
}
