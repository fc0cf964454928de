#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vpharm/experiments.hpp"

using namespace vpharm;

namespace {

json square_config() {
  return json::parse(R"({
    "domain": {"kind": "rectangle", "lo": [0, 0], "hi": [1, 1]},
    "p": [2, "inf"],
    "eps": [0.25, 0.125],
    "h": [0.0625],
    "data": "affine",
    "tol_fix": 1e-11,
    "quadrature": {"radial": 3, "angular": 12}
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vpharm_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// Drops the last CSV column (wallclock seconds).
std::string without_last_column(const std::string& csv) {
  std::stringstream in(csv), out;
  std::string line;
  while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
  return out.str();
}

}  // namespace

TEST(StudyConfig, ParsesAndValidates) {
  const auto c = parse_study_config(square_config());
  EXPECT_EQ(c.dim, 2);
  ASSERT_EQ(c.p.size(), 2u);
  EXPECT_TRUE(c.p[1].is_infinite());
  EXPECT_EQ(c.eps, (std::vector<double>{0.25, 0.125}));
  EXPECT_EQ(c.radial_order, 3);
  EXPECT_EQ(c.angular_order, 12);

  auto bad = square_config();
  bad["colour"] = "red";
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad["data"] = "sine";
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad["eps"] = {0.1, 0.2};
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad["p"] = {0.5};
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad["p"] = "three";
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad["init"] = "user_field";
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad["h"] = -1;
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad["threads"] = "many";
  EXPECT_THROW(parse_study_config(bad), ConfigError);
  bad = square_config();
  bad.erase("domain");
  EXPECT_THROW(parse_study_config(bad), ConfigError);
}

TEST(StudyConfig, Domains) {
  EXPECT_EQ(domain_from_json<2>(json::parse(R"({"kind":"disk","center":[0,0],"radius":2})")).inradius(), 2.0);
  EXPECT_NO_THROW(domain_from_json<2>(json::parse(R"({"kind":"polygon","vertices":[[0,0],[2,0],[2,1],[1,1],[1,2],[0,2]]})")));
  EXPECT_THROW(domain_from_json<2>(json::parse(R"({"kind":"annulus","center":[0,0],"r_inner":2,"r_outer":1})")), ConfigError);
  EXPECT_THROW(domain_from_json<2>(json::parse(R"({"kind":"disk","center":[0,0,0],"radius":1})")), ConfigError);
  EXPECT_THROW(domain_from_json<2>(json::parse(R"({"kind":"torus"})")), ConfigError);
  EXPECT_THROW(domain_from_json<3>(json::parse(R"({"kind":"polygon","vertices":[[0,0,0]]})")), UnsupportedDimension);
}

TEST(StudyConfig, EpsMustFitTheDomain) {
  auto j = square_config();
  j["eps"] = {0.6};
  const auto c = parse_study_config(j);
  EXPECT_THROW(run_convergence_study<2>(c), ConfigError);
  EXPECT_THROW(run_amvp_study<2>(c), ConfigError);
}

TEST(StudyConfig, CriticalRadialExponentIsDerived) {
  auto j = square_config();
  j["data"] = "radial_power";
  const auto c = parse_study_config(j);
  const auto entry = study_entry<2>(c, Exponent::finite(1.5));
  EXPECT_TRUE(entry.exact_for(Exponent::finite(1.5)));
  EXPECT_NEAR(entry.probe.value({2.0, 0.0}), 0.5, 1e-15);
  EXPECT_TRUE(study_entry<2>(c, Exponent::infinity()).exact_for(Exponent::infinity()));
  EXPECT_THROW(study_entry<2>(c, Exponent::finite(2.0)), ConfigError);
}

TEST(AmvpStudy, AffineRatiosAndTargetsVanish) {
  auto j = square_config();
  j["domain"] = json::parse(R"({"kind":"disk","center":[0,0],"radius":1})");
  j["p"] = {1.5, 2, 3, "inf"};
  const auto s = run_amvp_study<2>(parse_study_config(j));
  ASSERT_EQ(s.rows.size(), 4u * 2u * 20u);
  for (const auto& r : s.rows) {
    EXPECT_EQ(r.target, 0.0);
    EXPECT_LE(std::abs(r.ratio), 1e-10);
  }
}

TEST(AmvpStudy, QuadraticTargetAtPTwo) {
  auto j = square_config();
  j["domain"] = json::parse(R"({"kind":"disk","center":[0,0],"radius":1})");
  j["p"] = {2};
  j["eps"] = {0.2, 0.1, 0.05};
  j["data"] = "quadratic";
  const auto s = run_amvp_study<2>(parse_study_config(j));
  for (const auto& r : s.rows) EXPECT_NEAR(r.target, 0.75, 1e-14);
  EXPECT_LE(s.max_error[0][2], 0.02);
  EXPECT_TRUE(s.nonincreasing[0]);
}

TEST(AmvpStudy, CriticalRadialTargetIsZero) {
  auto j = square_config();
  j["domain"] = json::parse(R"({"kind":"annulus","center":[0,0],"r_inner":1,"r_outer":2})");
  j["p"] = {1.5};
  j["data"] = "radial_power";
  const auto s = run_amvp_study<2>(parse_study_config(j));
  for (const auto& r : s.rows) EXPECT_NEAR(r.target, 0.0, 1e-14);
}

TEST(AmvpStudy, VanishingGradientPointsAreSkipped) {
  auto j = square_config();
  j["data"] = "constant";
  j["p"] = {3};
  std::ostringstream log;
  const auto s = run_amvp_study<2>(parse_study_config(j), log);
  EXPECT_TRUE(s.rows.empty());
  EXPECT_EQ(s.skipped.size(), 20u);
  EXPECT_NE(log.str().find("gradient vanishes"), std::string::npos);
}

TEST(ConvergenceStudy, AffineIsExactForEveryP) {
  const auto s = run_convergence_study<2>(parse_study_config(square_config()));
  ASSERT_EQ(s.rows.size(), 4u);
  EXPECT_TRUE(s.all_converged);
  for (const auto& r : s.rows) {
    EXPECT_LE(r.sup_error, 1e-8);
    EXPECT_EQ(r.monotone_violations, 0);
    EXPECT_GE(r.sup_error, 0.0);
  }
}

TEST(ConvergenceStudy, RejectsDataWithoutExactSolution) {
  auto j = square_config();
  j["data"] = "cubic";
  EXPECT_THROW(run_convergence_study<2>(parse_study_config(j)), ConfigError);
  j["data"] = "harmonic";
  j["p"] = {3};
  EXPECT_THROW(run_convergence_study<2>(parse_study_config(j)), ConfigError);
}

TEST(ConvergenceStudy, FlagsNonConvergedRows) {
  auto j = square_config();
  j["p"] = {2};
  j["data"] = "harmonic";
  j["max_iters"] = 2;
  const auto s = run_convergence_study<2>(parse_study_config(j));
  EXPECT_FALSE(s.all_converged);
  for (const auto& r : s.rows) EXPECT_FALSE(r.converged);
  const json summary = convergence_summary(parse_study_config(j), s);
  EXPECT_FALSE(summary["all_converged"].get<bool>());
}

TEST(Commands, WritesFilesWithStableHeaders) {
  auto j = square_config();
  const auto dir = scratch("files");
  j["out"] = dir.string();
  const auto c = parse_study_config(j);
  std::ostringstream log;
  EXPECT_TRUE(run_command("converge", c, log));
  EXPECT_EQ(slurp(dir / "convergence.csv").substr(0, 31), "p,eps,h,sup_error,iters,seconds");
  EXPECT_TRUE(run_command("amvp", c, log));
  EXPECT_EQ(slurp(dir / "amvp.csv").substr(0, 37), "p,eps,point_id,ratio,target,abs_err\n2");

  auto one = j;
  one["p"] = 2;
  one["eps"] = 0.25;
  EXPECT_TRUE(run_command("solve", parse_study_config(one), log));
  EXPECT_EQ(slurp(dir / "solution.csv").substr(0, 6), "x,y,u\n");
  const json report = json::parse(slurp(dir / "report.json"));
  for (const char* key : {"p", "eps", "h", "iterations", "converged", "residual_history", "tol_fix",
                          "fixed_point_residual", "monotone_violations", "sup_error", "seconds"})
    EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_TRUE(report["converged"].get<bool>());
  EXPECT_LE(report["sup_error"].get<double>(), 1e-8);
  EXPECT_THROW(run_command("solve", c, log), ConfigError);
  EXPECT_THROW(run_command("plot", c, log), ConfigError);
}

TEST(Commands, OutputsDoNotDependOnThreadCount) {
  auto j = square_config();
  j["data"] = "quadratic";
  j["p"] = {3.5};
  j["eps"] = {0.25};
  j["domain"] = json::parse(R"({"kind":"disk","center":[0,0],"radius":1})");
  std::string solution[2], amvp[2], report_history[2];
  for (int k = 0; k < 2; ++k) {
    const auto dir = scratch("threads" + std::to_string(k));
    j["out"] = dir.string();
    j["threads"] = k == 0 ? 1 : 4;
    const auto c = parse_study_config(j);
    std::ostringstream log;
    run_command("solve", c, log);
    run_command("amvp", c, log);
    solution[k] = slurp(dir / "solution.csv");
    amvp[k] = slurp(dir / "amvp.csv");
    report_history[k] = json::parse(slurp(dir / "report.json"))["residual_history"].dump();
  }
  EXPECT_EQ(solution[0], solution[1]);
  EXPECT_EQ(amvp[0], amvp[1]);
  EXPECT_EQ(report_history[0], report_history[1]);

  auto conv = square_config();
  std::string rows[2];
  for (int k = 0; k < 2; ++k) {
    const auto dir = scratch("conv" + std::to_string(k));
    conv["out"] = dir.string();
    conv["threads"] = k == 0 ? 1 : 3;
    std::ostringstream log;
    run_command("converge", parse_study_config(conv), log);
    rows[k] = without_last_column(slurp(dir / "convergence.csv"));
  }
  EXPECT_EQ(rows[0], rows[1]);
}

#ifdef VPHARM_CLI_PATH
namespace {

int run_cli(const std::string& args, std::string* out = nullptr) {
  const auto file = std::filesystem::temp_directory_path() / "vpharm_cli_out.txt";
  const std::string cmd = std::string(VPHARM_CLI_PATH) + " " + args + " > " + file.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  if (out) *out = slurp(file);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, PmeanExamples) {
  std::string out;
  EXPECT_EQ(run_cli("pmean --p 2 --values 1,2,3", &out), 0);
  EXPECT_EQ(out.substr(0, 2), "2\n");
  EXPECT_EQ(run_cli("pmean --p inf --values 0,10,4", &out), 0);
  EXPECT_EQ(out.substr(0, 2), "5\n");
  EXPECT_EQ(run_cli("pmean --p 1 --values 0,10,4 --weights 1,1,1", &out), 0);
  EXPECT_EQ(out.substr(0, 2), "4\n");
  EXPECT_EQ(run_cli("pmean --p 0.5 --values 1"), 2);
  EXPECT_EQ(run_cli("pmean --p 2 --values 1,x"), 2);
  EXPECT_EQ(run_cli("pmean --p 2 --values 1,2 --weights 1"), 2);
  EXPECT_EQ(run_cli("pmean --values 1"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
}

TEST(Cli, SolveExitCodes) {
  const auto dir = scratch("cli");
  std::filesystem::create_directories(dir);
  auto j = square_config();
  j["p"] = 3;
  j["eps"] = 0.25;
  j["data"] = "constant";
  j["out"] = (dir / "const").string();
  std::ofstream(dir / "constant.json") << j.dump();
  EXPECT_EQ(run_cli("solve --config " + (dir / "constant.json").string()), 0);
  const json report = json::parse(slurp(dir / "const" / "report.json"));
  EXPECT_LE(report["iterations"].get<long>(), 2);

  j["data"] = "harmonic";
  j["p"] = 2;
  j["max_iters"] = 3;
  std::ofstream(dir / "stuck.json") << j.dump();
  EXPECT_EQ(run_cli("solve --config " + (dir / "stuck.json").string()), 3);

  std::ofstream(dir / "broken.json") << "{\"p\": ";
  EXPECT_EQ(run_cli("solve --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("solve --config " + (dir / "missing.json").string()), 2);
  j["eps"] = 5.0;
  std::ofstream(dir / "wide.json") << j.dump();
  EXPECT_EQ(run_cli("converge --config " + (dir / "wide.json").string()), 2);
}
#endif
