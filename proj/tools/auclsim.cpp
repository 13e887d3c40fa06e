// Command-line driver: single runs, seed sweeps and cross-run comparison.

#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aucl/harness.hpp"

namespace fs = std::filesystem;

namespace {

bool parse_seed_range(const std::string& expr, std::uint64_t& lo,
                      std::uint64_t& hi) {
  const auto pos = expr.find("..");
  if (pos == std::string::npos) return false;
  try {
    lo = std::stoull(expr.substr(0, pos));
    hi = std::stoull(expr.substr(pos + 2));
  } catch (...) {
    return false;
  }
  return hi >= lo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative localization simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::vector<std::string> overrides;

  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("--config", config_path, "Scenario config (JSON)")
      ->required();
  run_cmd->add_option("--seed", seed, "RNG seed (overrides config)");
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--set", overrides,
                      "Config override as dotted.path=value (repeatable)");

  std::vector<std::string> compare_dirs;
  auto* compare_cmd = app.add_subcommand("compare", "Aggregate run outputs");
  compare_cmd->add_option("dirs", compare_dirs, "Run output directories")
      ->required();

  std::string seeds_expr = "0..9";
  unsigned jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a range of seeds");
  sweep_cmd->add_option("--config", config_path, "Scenario config (JSON)")
      ->required();
  sweep_cmd->add_option("--seeds", seeds_expr, "Seed range a..b");
  sweep_cmd->add_option("--out", out_dir, "Output directory")->required();
  sweep_cmd->add_option("--jobs", jobs, "Parallel runs");
  sweep_cmd->add_option("--set", overrides,
                        "Config override as dotted.path=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) {
    if (!run_cmd->count("--seed")) {
      try {
        seed = aucl::load_world_config(config_path, overrides).seed;
      } catch (const aucl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
      }
    }
    return aucl::run(config_path, seed, out_dir, overrides);
  }

  if (compare_cmd->parsed()) {
    try {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      aucl::print_compare_table(aucl::compare(dirs), std::cout);
    } catch (const std::exception& e) {
      std::cerr << "compare failed: " << e.what() << '\n';
      return 2;
    }
    return 0;
  }

  // sweep
  std::uint64_t lo = 0, hi = 0;
  if (!parse_seed_range(seeds_expr, lo, hi)) {
    std::cerr << "config error: bad --seeds range '" << seeds_expr << "'\n";
    return 1;
  }
  try {
    aucl::load_world_config(config_path, overrides);
  } catch (const aucl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  std::vector<fs::path> dirs;
  int worst = 0;
  const unsigned parallel = std::max(1u, jobs);
  for (std::uint64_t s = lo; s <= hi;) {
    std::vector<std::future<int>> batch;
    std::vector<fs::path> batch_dirs;
    for (unsigned k = 0; k < parallel && s <= hi; ++k, ++s) {
      fs::path dir = fs::path(out_dir) / ("seed_" + std::to_string(s));
      batch_dirs.push_back(dir);
      batch.push_back(std::async(std::launch::async, [=]() {
        return aucl::run(config_path, s, dir, overrides);
      }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const int rc = batch[k].get();
      worst = std::max(worst, rc);
      if (rc == 0) dirs.push_back(batch_dirs[k]);
    }
  }
  if (worst != 0) return worst;
  aucl::print_compare_table(aucl::compare(dirs), std::cout);
  return 0;
}
