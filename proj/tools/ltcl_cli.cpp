// Command-line front end: run, gradcheck, score, sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ltcl/config.hpp"
#include "ltcl/gradcheck.hpp"
#include "ltcl/harness.hpp"
#include "ltcl/persist.hpp"

namespace fs = std::filesystem;

namespace {

void print_summary(const std::string& name, const ltcl::RunRecord& record) {
  for (const auto& mm : record.modes) {
    std::printf("%s %-8s ACC=%.2f BWT=%.2f\n", name.c_str(), ltcl::to_string(mm.mode).c_str(),
                mm.acc, mm.bwt);
  }
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out_dir) {
  ltcl::ExperimentConfig config = ltcl::load_config(config_path);
  if (seed) config.reseed(*seed);
  if (out_dir) config.output_dir = *out_dir;
  const ltcl::RunOutput run = ltcl::run_experiment(config);
  const fs::path dir = fs::path(config.output_dir) / config.run_name;
  ltcl::write_run(run, dir);
  print_summary(config.run_name, run.record);
  std::printf("wrote %s (%.1f s)\n", dir.string().c_str(), run.record.wall_clock_seconds);
  return 0;
}

int cmd_gradcheck(int configs, std::uint64_t seed, double epsilon) {
  constexpr double kTolerance = 1e-4;
  bool ok = true;
  for (auto term : {ltcl::LossTerm::kMce, ltcl::LossTerm::kKd, ltcl::LossTerm::kProto,
                    ltcl::LossTerm::kTotal}) {
    double worst = 0.0;
    for (int i = 0; i < configs; ++i) {
      const auto problem = ltcl::random_gradcheck_problem(ltcl::derive_seed(seed, {std::uint64_t(i)}));
      worst = std::max(worst, ltcl::check_loss_term(term, problem, epsilon).max_relative_error);
    }
    const bool pass = worst < kTolerance;
    ok = ok && pass;
    std::printf("%-6s max_rel_err=%.3e over %d configs  %s\n", ltcl::to_string(term).c_str(), worst,
                configs, pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_score(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out_file) {
  ltcl::ExperimentConfig config = ltcl::load_config(config_path);
  if (seed) config.reseed(*seed);
  const ltcl::RunOutput run = ltcl::run_experiment(config, /*always_score=*/true);
  if (out_file) {
    std::ofstream out(*out_file);
    if (!out) throw ltcl::Error("cannot write " + *out_file);
    ltcl::write_scores_csv(out, run.scores);
  } else {
    ltcl::write_scores_csv(std::cout, run.scores);
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& grid_path,
              std::optional<std::string> out_dir) {
  const ltcl::ExperimentConfig base = ltcl::load_config(config_path);
  const auto combos = ltcl::expand_grid(ltcl::load_grid(grid_path));
  const fs::path root = fs::path(out_dir ? *out_dir : base.output_dir);
  fs::create_directories(root);
  std::ofstream table(root / "sweep.csv");
  table << "run_name";
  for (const auto& [key, value] : combos.front()) table << ',' << key;
  table << ",mode,ACC,BWT\n";
  for (const auto& combo : combos) {
    ltcl::ExperimentConfig config = base;
    std::string name = base.run_name;
    for (const auto& [key, value] : combo) {
      ltcl::apply_setting(config, key, value);
      name += "_" + key + "-" + value;
    }
    config.run_name = name;
    config.validate();
    const ltcl::RunOutput run = ltcl::run_experiment(config);
    ltcl::write_run(run, root / name);
    print_summary(name, run.record);
    for (const auto& mm : run.record.modes) {
      table << name;
      for (const auto& [key, value] : combo) table << ',' << value;
      char nums[64];
      std::snprintf(nums, sizeof(nums), ",%.2f,%.2f", mm.acc, mm.bwt);
      table << ',' << ltcl::to_string(mm.mode) << nums << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-tailed continual learning lab"};
  app.require_subcommand(1);

  std::string config_path, grid_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  run->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the run seed");
  run->add_option("--out", out, "Output root directory");

  int configs = 20;
  std::uint64_t grad_seed = 1;
  double epsilon = 1e-5;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--configs", configs, "Random configurations per loss term");
  grad->add_option("--seed", grad_seed, "Seed for the random configurations");
  grad->add_option("--epsilon", epsilon, "Central-difference step");

  auto* score = app.add_subcommand("score", "Dump per-sample uncertainty scores at every task end");
  score->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  score->add_option("--seed", seed, "Override the run seed");
  score->add_option("--out", out, "Output CSV (stdout when omitted)");

  auto* sweep = app.add_subcommand("sweep", "Run the Cartesian product of a grid file");
  sweep->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid_path, "Grid file, key=v1,v2,...")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output root directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, seed, out);
    if (*grad) return cmd_gradcheck(configs, grad_seed, epsilon);
    if (*score) return cmd_score(config_path, seed, out);
    if (*sweep) return cmd_sweep(config_path, grid_path, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
