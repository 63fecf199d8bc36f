#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string g_cli;
std::string g_configs;

std::string config(const std::string& name) {
  return (fs::path(g_configs) / name).string();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("cli_test_out") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + g_cli + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << "missing " << path;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json slurp_json(const fs::path& path) { return json::parse(slurp(path)); }

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

TEST(SolvabilityCommand, PassesAndWritesReport) {
  const fs::path dir = fresh_dir("solvability");
  ASSERT_EQ(run_cli("solvability --config \"" + config("bergomi_scalar.json") +
                    "\" --out \"" + dir.string() + "\""),
            0);
  const json rep = slurp_json(dir / "solvability.json");
  EXPECT_TRUE(rep.at("pass").get<bool>());
  EXPECT_EQ(rep.at("method").get<std::string>(), "gauss_hermite");
  EXPECT_GT(rep.at("scale").get<double>(), 0.0);
  EXPECT_LE(std::abs(rep.at("value").get<double>()),
            rep.at("tolerance").get<double>() * rep.at("scale").get<double>());
}

TEST(RecoverCommand, ScalarArtifactsCarrySolutionResidualAndScan) {
  const fs::path dir = fresh_dir("recover_scalar");
  ASSERT_EQ(run_cli("recover --config \"" + config("bergomi_scalar.json") + "\" --out \"" +
                    dir.string() + "\" --require-positive"),
            0);
  const json rep = slurp_json(dir / "recover.json");
  EXPECT_EQ(rep.at("solution").at("family").get<std::string>(), "primary");
  EXPECT_LT(rep.at("forward_residual").at("max_abs").get<double>(), 1e-8);
  EXPECT_GT(rep.at("positivity").at("min_value").get<double>(), 0.0);

  const std::string csv = slurp(dir / "recover_grid.csv");
  EXPECT_EQ(first_line(csv), "x1,v,h,Q");
  // The gap column is exactly the difference of the two value columns.
  const std::string row = csv.substr(csv.find('\n') + 1);
  double x = 0.0, v = 0.0, h = 0.0, q = 0.0;
  ASSERT_EQ(std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf", &x, &v, &h, &q), 4);
  EXPECT_EQ(q, v - h);
}

TEST(RecoverCommand, PositiveScanByteDeterministicAcrossRuns) {
  const fs::path a = fresh_dir("recover_a");
  const fs::path b = fresh_dir("recover_b");
  const std::string base =
      "recover --config \"" + config("three_halves.json") + "\" --require-positive --out ";
  ASSERT_EQ(run_cli(base + "\"" + a.string() + "\""), 0);
  ASSERT_EQ(run_cli(base + "\"" + b.string() + "\""), 0);
  EXPECT_EQ(slurp(a / "recover.json"), slurp(b / "recover.json"));
  EXPECT_EQ(slurp(a / "recover_grid.csv"), slurp(b / "recover_grid.csv"));
  const json rep = slurp_json(a / "recover.json");
  EXPECT_EQ(rep.at("solution").at("basis").at("type").get<std::string>(),
            "generalized_laguerre");
}

TEST(ConsistencyCommand, AffineModelPassesAndCsvFormatAddsResidualTable) {
  const fs::path dir = fresh_dir("consistency_dn");
  ASSERT_EQ(run_cli("consistency --config \"" + config("double_nelson.json") + "\" --out \"" +
                    dir.string() + "\""),
            0);
  EXPECT_TRUE(slurp_json(dir / "consistency.json").at("pass").get<bool>());
  EXPECT_FALSE(fs::exists(dir / "consistency.csv"));

  const fs::path csv_dir = fresh_dir("consistency_csv");
  ASSERT_EQ(run_cli("consistency --config \"" + config("bergomi_scalar.json") +
                    "\" --format csv --out \"" + csv_dir.string() + "\""),
            0);
  EXPECT_EQ(first_line(slurp(csv_dir / "consistency.csv")),
            "x1,theta,drift_residual,diffusion_residual");
}

TEST(ConsistencyCommand, ProbeVerdictsDriveTheExitCode) {
  const fs::path bad = fresh_dir("probe_bad");
  EXPECT_EQ(run_cli("consistency --config \"" + config("probe_algebraic.json") +
                    "\" --out \"" + bad.string() + "\""),
            2);
  const json bad_rep = slurp_json(bad / "probe.json");
  EXPECT_FALSE(bad_rep.at("consistent").get<bool>());
  EXPECT_EQ(bad_rep.at("family").get<std::string>(), "algebraic_decay");

  const fs::path good = fresh_dir("probe_good");
  EXPECT_EQ(run_cli("consistency --config \"" + config("probe_exponential.json") +
                    "\" --out \"" + good.string() + "\""),
            0);
  EXPECT_TRUE(slurp_json(good / "probe.json").at("consistent").get<bool>());
}

TEST(HjmCommand, WritesForwardRateTable) {
  const fs::path dir = fresh_dir("hjm");
  ASSERT_EQ(run_cli("hjm --config \"" + config("bergomi_scalar.json") + "\" --out \"" +
                    dir.string() + "\""),
            0);
  const std::string csv = slurp(dir / "hjm_grid.csv");
  EXPECT_EQ(first_line(csv), "t,T,forward_rate,alpha,beta_1,nu_1");
  EXPECT_GT(std::count(csv.begin(), csv.end(), '\n'), 1);
}

TEST(SimulateCommand, SeedFlagControlsThePathBytes) {
  const fs::path a = fresh_dir("simulate_a");
  const fs::path b = fresh_dir("simulate_b");
  const fs::path c = fresh_dir("simulate_c");
  const std::string base = "simulate --config \"" + config("bergomi_scalar.json") + "\" ";
  ASSERT_EQ(run_cli(base + "--seed 7 --out \"" + a.string() + "\""), 0);
  ASSERT_EQ(run_cli(base + "--seed 7 --out \"" + b.string() + "\""), 0);
  ASSERT_EQ(run_cli(base + "--seed 8 --out \"" + c.string() + "\""), 0);
  const std::string pa = slurp(a / "paths.csv");
  EXPECT_EQ(first_line(pa), "path_id,time,x1");
  EXPECT_EQ(pa, slurp(b / "paths.csv"));
  EXPECT_NE(pa, slurp(c / "paths.csv"));
}

TEST(CurveCommand, WritesTermStructureWithOneVolatilityColumnPerDriver) {
  const fs::path dir = fresh_dir("curve");
  ASSERT_EQ(run_cli("curve --config \"" + config("double_nelson.json") + "\" --out \"" +
                    dir.string() + "\""),
            0);
  EXPECT_EQ(first_line(slurp(dir / "curve.csv")), "theta,price,roll_yield,nu_1,nu_2");
}

TEST(OracleCheckCommand, MonteCarloRoundTripStaysWithinFourSigma) {
  const fs::path dir = fresh_dir("oracle_check");
  ASSERT_EQ(run_cli("oracle-check --config \"" + config("bergomi_scalar.json") +
                    "\" --out \"" + dir.string() + "\""),
            0);
  const json rep = slurp_json(dir / "oracle_check.json");
  ASSERT_EQ(rep.at("entries").size(), 5u);
  for (const json& e : rep.at("entries"))
    EXPECT_LE(std::abs(e.at("z_score").get<double>()), 4.0);
  EXPECT_EQ(first_line(slurp(dir / "oracle_check.csv")), "x1,h2,estimate,std_error,z");
}

TEST(ErrorHandling, BadInputsExitWithInputFailure) {
  const fs::path dir = fresh_dir("errors");
  EXPECT_EQ(run_cli("solvability --config \"" + (dir / "missing.json").string() +
                    "\" --out \"" + dir.string() + "\""),
            1);
  EXPECT_EQ(run_cli("solvability --no-such-flag"), 1);
  EXPECT_EQ(run_cli("unknown-command --config x"), 1);
}

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  if (argc < 3) {
    std::fprintf(stderr, "usage: test_cli <cli-binary> <configs-dir>\n");
    return 2;
  }
  g_cli = argv[1];
  g_configs = argv[2];
  return RUN_ALL_TESTS();
}
