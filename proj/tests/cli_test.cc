#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "mmrank/io.h"
#include "mmrank/model.h"
#include "mmrank/plackett_luce.h"
#include "test_util.h"

using namespace mmrank;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int status;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "mmrank");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "mmrank_cli_test";
  fs::create_directories(dir);
  return dir;
}

ModelParams two_group_truth() {
  ModelParams p;
  p.alpha = {0.4, 0.3};
  p.fixed = {false, false};
  p.theta = {{testing::geometric_support({0, 1, 2, 3}, 0.3),
              testing::geometric_support({3, 2, 1, 0}, 0.3)},
             {testing::geometric_support({0, 1, 2}, 0.3),
              testing::geometric_support({2, 1, 0}, 0.3)}};
  return p;
}

// Writes the truth parameters and simulates a dataset through the CLI.
void simulate_inputs(const fs::path& dir, int T, std::uint64_t seed) {
  write_json(params_to_json(two_group_truth()), (dir / "truth.json").string());
  const CliRun r = run({"simulate", "--params", (dir / "truth.json").string(), "--t",
                        std::to_string(T), "--n", "2", "--seed", std::to_string(seed), "--out",
                        (dir / "data.csv").string(), "--schema-out",
                        (dir / "schema.json").string()});
  REQUIRE(r.status == 0);
}

}  // namespace

TEST_CASE("usage errors exit nonzero with a message") {
  const CliRun no_sub = run({});
  CHECK(no_sub.status != 0);

  const CliRun missing = run({"fit", "--data", "x.csv", "--k", "2"});
  CHECK(missing.status != 0);
  CHECK(missing.err.find("--schema") != std::string::npos);

  const CliRun bad_init = run({"fit", "--data", "x.csv", "--schema", "s.json", "--k", "2",
                               "--init", "spectral"});
  CHECK(bad_init.status != 0);

  const CliRun version = run({"--version"});
  CHECK(version.status == 0);
  CHECK(version.out.find(kVersion) != std::string::npos);
}

TEST_CASE("data errors exit with status 1 and name the problem") {
  const fs::path dir = work_dir() / "errors";
  fs::create_directories(dir);
  simulate_inputs(dir, 20, 5);
  std::ofstream(dir / "data.csv", std::ios::app) << "1,v9,1,1\n";
  const CliRun r = run({"fit", "--data", (dir / "data.csv").string(), "--schema",
                        (dir / "schema.json").string(), "--k", "2"});
  CHECK(r.status == 1);
  CHECK(r.err.find("mmrank: error:") == 0);
  CHECK(r.err.find("v9") != std::string::npos);

  const CliRun missing = run({"fit", "--data", (dir / "none.csv").string(), "--schema",
                              (dir / "schema.json").string(), "--k", "2"});
  CHECK(missing.status == 1);
}

TEST_CASE("fit with one subgroup reproduces the Plackett-Luce estimate") {
  const fs::path dir = work_dir() / "k1";
  fs::create_directories(dir);
  simulate_inputs(dir, 300, 11);
  const CliRun r = run({"fit", "--data", (dir / "data.csv").string(), "--schema",
                        (dir / "schema.json").string(), "--k", "1", "--outer-tol", "1e-10",
                        "--out", (dir / "fit.json").string()});
  REQUIRE(r.status == 0);

  const json doc = read_json((dir / "fit.json").string());
  REQUIRE(doc["alpha"].size() == 1);
  const LoadedDataset data =
      load_dataset((dir / "data.csv").string(), load_schema((dir / "schema.json").string()));
  std::vector<Ranking> second;
  for (int i = 0; i < data.data.num_individuals(); ++i) second.push_back(data.data.observation(i, 1));
  const auto mle = testing::grid_search_mle_v3(second);
  for (int v = 0; v < 3; ++v) {
    CHECK(std::abs(doc["theta"][1][0][v].get<double>() - mle[v]) <= 2e-3);
  }
}

TEST_CASE("fit output is identical for serial and parallel runs") {
  const fs::path dir = work_dir() / "threads";
  fs::create_directories(dir);
  simulate_inputs(dir, 120, 21);
  const std::vector<std::string> base{"fit",  "--data", (dir / "data.csv").string(),
                                      "--schema", (dir / "schema.json").string(),
                                      "--k",    "2",      "--seed",
                                      "4",    "--restarts", "3"};
  auto serial = base;
  serial.insert(serial.end(), {"--out", (dir / "serial.json").string()});
  auto parallel = base;
  parallel.insert(parallel.end(), {"--threads", "4", "--out", (dir / "parallel.json").string()});
  REQUIRE(run(serial).status == 0);
  REQUIRE(run(parallel).status == 0);
  CHECK(read_file(dir / "serial.json") == read_file(dir / "parallel.json"));

  const json doc = read_json((dir / "serial.json").string());
  CHECK(doc["manifest"]["command"] == "fit");
  CHECK(doc["manifest"]["config"]["restarts"] == 3);
  CHECK_FALSE(doc["manifest"]["config"].contains("threads"));
  CHECK_FALSE(doc["manifest"].contains("wall_clock_seconds"));
}

TEST_CASE("fixed subgroups count toward --k") {
  const fs::path dir = work_dir() / "fixed";
  fs::create_directories(dir);
  simulate_inputs(dir, 60, 31);
  const CliRun r = run({"fit", "--data", (dir / "data.csv").string(), "--schema",
                        (dir / "schema.json").string(), "--k", "3", "--fixed-uniform", "--out",
                        (dir / "fit.json").string()});
  REQUIRE(r.status == 0);
  const json doc = read_json((dir / "fit.json").string());
  REQUIRE(doc["fixed"].size() == 3);
  int fixed = 0;
  for (const auto& f : doc["fixed"]) fixed += f.get<bool>() ? 1 : 0;
  CHECK(fixed == 1);
}

TEST_CASE("simulate, fit, report and gof chain together") {
  const fs::path dir = work_dir() / "chain";
  fs::create_directories(dir);
  simulate_inputs(dir, 150, 41);
  REQUIRE(run({"fit", "--data", (dir / "data.csv").string(), "--schema",
               (dir / "schema.json").string(), "--k", "2", "--out", (dir / "fit.json").string()})
              .status == 0);

  const CliRun report = run({"report", "--fit", (dir / "fit.json").string(), "--out",
                             (dir / "report.json").string()});
  REQUIRE(report.status == 0);
  CHECK(report.out.find("relative_frequency") != std::string::npos);
  const json rep = read_json((dir / "report.json").string());
  const json fit_doc = read_json((dir / "fit.json").string());
  CHECK(rep["relative_frequency"] == fit_doc["relative_frequency"]);

  const CliRun gof = run({"gof", "--fit", (dir / "fit.json").string(), "--data",
                          (dir / "data.csv").string(), "-S", "50", "--out",
                          (dir / "gof.csv").string(), "--observed-out",
                          (dir / "observed.csv").string()});
  REQUIRE(gof.status == 0);
  CHECK(gof.out.find("band_coverage") != std::string::npos);
  std::istringstream table(read_file(dir / "gof.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(table, line)) ++rows;
  CHECK(rows == 1 + 50 * (4 + 3));
  CHECK(read_file(dir / "observed.csv").find("variable,alternative,observed_count") == 0);
}

TEST_CASE("simulated data can be regenerated from a results file") {
  const fs::path dir = work_dir() / "resim";
  fs::create_directories(dir);
  simulate_inputs(dir, 40, 51);
  REQUIRE(run({"fit", "--data", (dir / "data.csv").string(), "--schema",
               (dir / "schema.json").string(), "--k", "2", "--out", (dir / "fit.json").string()})
              .status == 0);
  const auto sim = [&](const std::string& name) {
    return run({"simulate", "--params", (dir / "fit.json").string(), "--t", "10", "--n", "2,3",
                "--seed", "9", "--out", (dir / name).string()});
  };
  REQUIRE(sim("a.csv").status == 0);
  REQUIRE(sim("b.csv").status == 0);
  CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
  const LoadedDataset again =
      load_dataset((dir / "a.csv").string(), load_schema((dir / "schema.json").string()));
  CHECK(again.data.num_individuals() == 10);
  CHECK(again.data.observation(0, 1).items.size() == 3);

  const CliRun too_long = run({"simulate", "--params", (dir / "fit.json").string(), "--t", "5",
                               "--n", "5", "--out", (dir / "c.csv").string()});
  CHECK(too_long.status != 0);
}

TEST_CASE("select-k and bootstrap add their result blocks") {
  const fs::path dir = work_dir() / "blocks";
  fs::create_directories(dir);
  simulate_inputs(dir, 80, 61);
  REQUIRE(run({"select-k", "--data", (dir / "data.csv").string(), "--schema",
               (dir / "schema.json").string(), "--k-range", "1,2", "--restarts", "2", "--out",
               (dir / "sk.json").string()})
              .status == 0);
  const json sk = read_json((dir / "sk.json").string());
  const json& block = sk["model_selection"];
  CHECK(block["table"].size() == 2);
  CHECK(block["restarts_per_k"] == 2);
  CHECK(sk["alpha"].size() == block["best_k"].get<std::size_t>());

  REQUIRE(run({"bootstrap", "--data", (dir / "data.csv").string(), "--schema",
               (dir / "schema.json").string(), "--k", "1", "--bootstrap-b", "10", "--out",
               (dir / "boot.json").string()})
              .status == 0);
  const json boot = read_json((dir / "boot.json").string());
  CHECK(boot["bootstrap"]["replicates"] == 10);
  REQUIRE(boot["bootstrap"]["theta"].size() == 2);
  const json& iv = boot["bootstrap"]["theta"][0][0][0];
  CHECK(iv[0].get<double>() <= iv[1].get<double>());
}
