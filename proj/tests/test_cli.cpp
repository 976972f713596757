#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rdmc/harness.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("rdmc_test_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json minimal_config(const fs::path& out_dir) {
  return json{
      {"target", {{"kind", "gmm"}, {"means", {{0.0, 0.0}}}}},
      {"samplers", {{{"kind", "lmc"}, {"step", 0.01}, {"iters", 10}}}},
      {"particles", 20},
      {"seed", 12345},
      {"metrics", {{"mmd_vs_reference", false}}},
      {"out_dir", out_dir.string()},
  };
}

}  // namespace

TEST_CASE("minimal run: row count and monotone counters") {
  fs::path dir = fresh_dir("minimal");
  auto rec = rdmc::harness::run_experiment(minimal_config(dir));
  REQUIRE(rec.rows.size() == 11);
  for (std::size_t i = 1; i < rec.rows.size(); ++i)
    CHECK(rec.rows[i].grad_evals >= rec.rows[i - 1].grad_evals);
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(fs::exists(dir / "config_resolved.json"));

  const std::string csv = slurp(dir / "trace.csv");
  CHECK(csv.rfind("sampler,step,grad_evals,f_evals,mmd2,moment1,moment2,"
                  "moment3,mode_dev,wall_ms\n", 0) == 0);
  CHECK(csv.find("nan") == std::string::npos);
}

TEST_CASE("identical config and seed give byte-identical trace.csv") {
  fs::path d1 = fresh_dir("rerun1");
  fs::path d2 = fresh_dir("rerun2");
  json cfg = minimal_config(d1);
  cfg["metrics"] = {{"mmd_vs_reference", true}, {"moments", {1, 2}}};
  rdmc::harness::run_experiment(cfg);
  cfg["out_dir"] = d2.string();
  rdmc::harness::run_experiment(cfg);
  CHECK(slurp(d1 / "trace.csv") == slurp(d2 / "trace.csv"));
}

TEST_CASE("config_resolved round-trips to the identical run") {
  fs::path d1 = fresh_dir("roundtrip1");
  fs::path d2 = fresh_dir("roundtrip2");
  json cfg = minimal_config(d1);
  cfg["metrics"] = {{"mmd_vs_reference", true}};
  rdmc::harness::run_experiment(cfg);
  json resolved = json::parse(slurp(d1 / "config_resolved.json"));
  resolved["out_dir"] = d2.string();
  rdmc::harness::run_experiment(resolved);
  CHECK(slurp(d1 / "trace.csv") == slurp(d2 / "trace.csv"));
}

TEST_CASE("config errors name the problem") {
  fs::path dir = fresh_dir("badcfg");

  json no_samplers = minimal_config(dir);
  no_samplers.erase("samplers");
  CHECK_THROWS_WITH_AS(rdmc::harness::run_experiment(no_samplers),
                       doctest::Contains("samplers"),
                       rdmc::harness::ConfigError);

  json no_seed = minimal_config(dir);
  no_seed.erase("seed");
  CHECK_THROWS_WITH_AS(rdmc::harness::run_experiment(no_seed),
                       doctest::Contains("seed"), rdmc::harness::ConfigError);

  json inexact = minimal_config(dir);
  inexact["target"] = {{"kind", "sublinear"}, {"a", 0.25}, {"dim", 2}};
  inexact["metrics"] = {{"mmd_vs_reference", true}};
  CHECK_THROWS_WITH_AS(rdmc::harness::run_experiment(inexact),
                       doctest::Contains("no exact reference sampler"),
                       rdmc::harness::ConfigError);

  json bad_kind = minimal_config(dir);
  bad_kind["target"]["kind"] = "nope";
  CHECK_THROWS_AS(rdmc::harness::run_experiment(bad_kind),
                  rdmc::harness::ConfigError);
}

TEST_CASE("rdmc beats lmc on mmd for a separated 2-mode gmm") {
  fs::path dir = fresh_dir("gmm_compare");
  json cfg{
      {"target",
       {{"kind", "gmm"}, {"means", {{0.0, 0.0}, {4.0, 0.0}}}}},
      {"schedule", {{"T", 2.0}, {"eta", 0.1}}},
      {"estimator",
       {{"kind", "is_init_ula"}, {"sample_count", 32}, {"inner_steps", 10},
        {"is_pool", 128}}},
      {"samplers",
       {{{"kind", "rdmc"}},
        {{"kind", "lmc"}, {"step", 0.01}, {"iters", 200}}}},
      {"particles", 300},
      {"seed", 99},
      {"metrics",
       {{"mmd_vs_reference", true},
        {"mode_weights", {{0.0, 0.0}, {4.0, 0.0}}}}},
      {"out_dir", dir.string()},
  };
  auto rec = rdmc::harness::run_experiment(cfg);
  double rdmc_final = -1.0, lmc_final = -1.0;
  for (const auto& row : rec.rows) {
    if (row.sampler == "rdmc") rdmc_final = *row.mmd2;
    if (row.sampler == "lmc") lmc_final = *row.mmd2;
  }
  REQUIRE(rdmc_final >= 0.0);
  REQUIRE(lmc_final >= 0.0);
  CHECK(rdmc_final < lmc_final);
  CHECK(fs::exists(dir / "mmd.svg"));
}

TEST_CASE("score_check table") {
  json cfg{
      {"target", {{"kind", "ill_gaussian"}, {"mean", {0.0, 0.0}}, {"diag_cov", {1.0, 1.0}}}},
      {"x", {2.0, 0.0}},
      {"tau", 0.5},
      {"seed", 7},
      {"budgets", {1, 100, 10000}},
      {"estimators", {{{"kind", "importance"}}}},
  };
  auto rows = rdmc::harness::score_check(cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].budget == 1);
  CHECK(std::isfinite(rows[0].error));
  CHECK(rows[2].error < 0.1);

  auto rows2 = rdmc::harness::score_check(cfg);
  for (std::size_t i = 0; i < rows.size(); ++i)
    CHECK(rows[i].error == rows2[i].error);

  json bad = cfg;
  bad["target"] = {{"kind", "funnel"}, {"dim", 3}};
  bad["x"] = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(rdmc::harness::score_check(bad), rdmc::harness::ConfigError);
}

TEST_CASE("cli binary subcommands and exit codes") {
  const char* bin = std::getenv("RDMC_CLI_BIN");
  REQUIRE(bin != nullptr);
  const std::string b(bin);

  CHECK(std::system((b + " version > /dev/null").c_str()) == 0);

  fs::path dir = fresh_dir("cli_run");
  fs::path cfg_path = dir / "cfg.json";
  {
    std::ofstream out(cfg_path);
    out << minimal_config(dir / "out").dump(2);
  }
  CHECK(std::system((b + " run --config " + cfg_path.string() + " > /dev/null").c_str()) == 0);
  CHECK(fs::exists(dir / "out" / "trace.csv"));

  // config error -> exit 2
  fs::path bad_path = dir / "bad.json";
  {
    std::ofstream out(bad_path);
    json bad = minimal_config(dir / "out2");
    bad.erase("seed");
    out << bad.dump(2);
  }
  const int rc = std::system((b + " run --config " + bad_path.string() + " 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  const int rc_missing =
      std::system((b + " run --config /nonexistent.json 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc_missing) == 2);
}
