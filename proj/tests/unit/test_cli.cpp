#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "ccrecall/cli.hpp"
#include "ccrecall/data_model.hpp"
#include "test_util.hpp"

using namespace ccrecall;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "ccrecall");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ccrecall_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_dataset(const TempDir& dir) {
  const auto d = testing::random_dataset(31, 600, 2);
  const auto path = (dir.path / "data.csv").string();
  std::ofstream f(path);
  write_csv(f, d, {});
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with the validation code") {
  CHECK(run({}).code == kExitValidation);
  CHECK(run({"frobnicate"}).code == kExitValidation);
  CHECK(run({"--version"}).code == 0);
  CHECK(run({"estimate", "--input", "/no/such/file.csv", "--boot", "0"}).code == kExitValidation);
}

TEST_CASE("estimate") {
  TempDir dir;
  const auto input = write_dataset(dir);

  SUBCASE("point estimate") {
    const auto r = run({"estimate", "--input", input, "--method", "ml", "--over-report", "0.05,0.1",
                        "--boot", "0"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["method"] == "ml");
    CHECK(j["ci"].is_null());
    CHECK(j["bias"]["direction"] == "over-reporting");
    CHECK(j["bias"]["theta_case"] == 0.1);
    CHECK(j["config"]["method"] == "ml");
    CHECK(std::exp(j["log_psi"].get<double>()) == doctest::Approx(j["psi"].get<double>()));
  }
  SUBCASE("bootstrap output is reproducible") {
    const std::vector<std::string> args{"estimate", "--input", input, "--method", "ml", "--under-report", "0.1,0.1",
                                        "--boot", "40", "--seed", "3"};
    const auto a = run(args), b = run(args);
    INFO(a.err);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto j = nlohmann::json::parse(a.out);
    CHECK(j["ci"].size() == 2);
    CHECK(j["seed"] == 3);
    CHECK(j["diagnostics"]["n_boot"] == 40);
  }
  SUBCASE("validation failures") {
    CHECK(run({"estimate", "--input", input, "--boot", "20"}).code == kExitValidation);
    CHECK(run({"estimate", "--input", input, "--boot", "0", "--over-report", "0.1,0.1", "--under-report",
               "0.1,0.1"}).code == kExitValidation);
    CHECK(run({"estimate", "--input", input, "--boot", "0", "--method", "magic"}).code == kExitValidation);
    CHECK(run({"estimate", "--input", input, "--boot", "0", "--outcome-col", "nope"}).code == kExitValidation);
  }
  SUBCASE("estimation failure names the cause") {
    const auto r = run({"estimate", "--input", input, "--method", "strat-user", "--over-report", "0.1,0.95",
                        "--boot", "0"});
    CHECK(r.code == kExitEstimation);
    CHECK(r.err.find("InfeasibleBias") != std::string::npos);
    CHECK(r.err.find("warning") != std::string::npos);
  }
}

TEST_CASE("sensitivity csv") {
  TempDir dir;
  const auto input = write_dataset(dir);
  const auto out = (dir.path / "grid.csv").string();
  const auto r = run({"sensitivity", "--input", input, "--method", "strat-propensity", "--grid", "0:0.2:0.1",
                      "--boot", "20", "--seed", "1", "--out", out});
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(out));
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("# ccrecall ", 0) == 0);
  std::getline(csv, line);
  CHECK(line.rfind("# config: {", 0) == 0);
  std::getline(csv, line);
  CHECK(line == "zeta0,zeta1,psi,log_psi,ci_low,ci_high,feasible,status");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 9);
  const auto summary = nlohmann::json::parse(slurp(out + ".summary.json"));
  CHECK(summary["cells"] == 9);

  const auto diag = run({"sensitivity", "--input", input, "--grid", "0:0.2:0.1", "--diagonal", "--boot", "20",
                         "--seed", "1", "--format", "json", "--direction", "over"});
  REQUIRE(diag.code == 0);
  CHECK(nlohmann::json::parse(diag.out)["grid"].size() == 3);
}

TEST_CASE("rfactor and check-conditions") {
  TempDir dir;
  const auto input = write_dataset(dir);
  const auto r = run({"rfactor", "--input", input, "--method", "strat-user", "--direction", "over", "--vary",
                      "case", "--boot", "30", "--seed", "2", "--scan-step", "0.05"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK((j["status"] == "found" || j["status"] == "NotFound"));
  CHECK(j["varied"] == "case-bias");

  const auto c = run({"check-conditions", "--input", input, "--over-report", "0,0.1"});
  REQUIRE(c.code == 0);
  const auto k = nlohmann::json::parse(c.out);
  CHECK(k["conditional"]["psi_le_psi_star"] == 600);
  CHECK(k["marginal"] == "psi_le_psi_star");
  CHECK(run({"check-conditions", "--input", input}).code == kExitValidation);
}

TEST_CASE("simulate") {
  TempDir dir;
  const auto scen = (dir.path / "s.ini").string();
  {
    std::ofstream f(scen);
    f << "[tiny]\nn = 320\nbeta = -1,1,-1,1,0,0\ngamma = -2,2,-2,0,1,0\ntrue_log_cor = 0.357\n"
         "over_report = 0.1,0.1\nn_reps = 3\n";
  }
  const std::vector<std::string> args{"simulate", "--scenarios", scen, "--seed", "4", "--methods",
                                      "ml,strat-prognostic"};
  const auto a = run(args), b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("scenario,n,true,crude,ml,s_prog\n\"tiny\",320,0.357,") != std::string::npos);
  CHECK(run({"simulate", "--scenarios", scen}).code == kExitValidation);

  const auto data = (dir.path / "null.csv").string();
  const auto w = run({"simulate", "--fig1", "--eta1-grid", "0:0.1:0.1", "--reps", "5", "--seed", "1",
                      "--write-data", data, "--null-design", "--eta1", "0.05"});
  REQUIRE(w.code == 0);
  CHECK(w.out.find("eta1,psi_star,ci_low,ci_high,fraction_significant\n") != std::string::npos);
  CHECK(load_csv(data, {}).n() == 2000);
}
