// Command-line front end for the reverse diffusion Monte Carlo toolkit.
//
//   rdmc run --config cfg.json [--seed N] [--out-dir D]
//   rdmc score-check --config cfg.json
//   rdmc version
//
// Exit codes: 0 success, 2 config error, 3 runtime error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "rdmc/harness.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw rdmc::harness::ConfigError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw rdmc::harness::ConfigError(std::string("config parse error: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reverse diffusion Monte Carlo experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  auto* run_cmd = app.add_subcommand("run", "run a configured experiment");
  run_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
  std::uint64_t seed_val = 0;
  bool seed_set = false;
  run_cmd->add_option("--seed", seed_val, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  std::string out_dir_val;
  run_cmd->add_option("--out-dir", out_dir_val, "override the output directory");

  auto* check_cmd = app.add_subcommand("score-check",
                                       "estimator error vs oracle study");
  std::string check_config;
  check_cmd->add_option("--config", check_config, "score-check config (JSON)")->required();

  auto* version_cmd = app.add_subcommand("version", "print version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (version_cmd->parsed()) {
      std::cout << "rdmc " << kVersion << "\n";
      return 0;
    }
    if (run_cmd->parsed()) {
      if (seed_set) seed = seed_val;
      if (!out_dir_val.empty()) out_dir = out_dir_val;
      auto record = rdmc::harness::run_experiment(load_config(config_path),
                                                  out_dir, seed);
      std::cout << "wrote " << (record.out_dir / "trace.csv").string() << " ("
                << record.rows.size() << " rows)\n";
      return 0;
    }
    if (check_cmd->parsed()) {
      auto rows = rdmc::harness::score_check(load_config(check_config));
      std::cout << rdmc::harness::score_check_table(rows);
      return 0;
    }
  } catch (const rdmc::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
