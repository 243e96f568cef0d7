// Command-line runner: run, landscape, compare and verify subcommands.
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "roed/errors.hpp"
#include "roed/experiment.hpp"
#include "roed/log.hpp"
#include "roed/parallel.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed_override;
  int workers = 1;
  std::string log_level = "info";
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Experiment config (JSON)")->required()->check(
      CLI::ExistingFile);
  cmd->add_option("--out", opts.out, "Output directory (overrides ROED_OUTPUT_DIR and the config)");
  cmd->add_option("--seed-override", opts.seed_override, "Replace the config's top-level seed");
  cmd->add_option("--workers", opts.workers, "Worker threads for per-sample work")
      ->check(CLI::Range(1, 1024));
  cmd->add_option("--log-level", opts.log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-constrained robust sensor placement for an elliptic inverse problem"};
  app.require_subcommand(1);
  CommonOptions opts;
  auto* run = app.add_subcommand("run", "Optimize the design and write results.json");
  auto* landscape = app.add_subcommand("landscape", "Evaluate U over a theta grid");
  auto* compare = app.add_subcommand("compare", "Compare the optimum with random designs");
  auto* verify = app.add_subcommand("verify", "Recompute and check a previous run");
  for (auto* cmd : {run, landscape, compare, verify}) add_common(cmd, opts);
  CLI11_PARSE(app, argc, argv);

  try {
    roed::log::set_level(roed::log::level_from_string(opts.log_level));
    const roed::ExperimentConfig config = roed::load_config(opts.config, opts.seed_override);
    const auto out_dir = roed::resolve_output_dir(config, opts.out);

    if (run->parsed()) {
      const auto art = roed::run_experiment(config, out_dir, opts.workers);
      std::printf("design %s  robust utility %.10g  |theta_bar| %zu  (%s)\n",
                  roed::design_string(art.result.design).c_str(), art.result.value,
                  art.result.theta_bar.size(), art.result.stop_reason.c_str());
      std::printf("wrote %s\n", art.results.string().c_str());
    } else if (landscape->parsed()) {
      roed::ProblemConfig pc = config.problem;
      if (!pc.cache_dir) pc.cache_dir = out_dir / "cache";
      pc.workers = opts.workers;
      roed::PdeProblem problem(pc);
      const auto rows = roed::evaluate_landscape(config, problem);
      const auto path = roed::write_landscape(config, rows, out_dir);
      std::printf("wrote %zu rows to %s\n", rows.size(), path.string().c_str());
    } else if (compare->parsed()) {
      const auto rep = roed::compare_random_designs(config, out_dir, opts.workers);
      std::printf("optimal design utility %.10g; at or above %d of %zu random designs\n",
                  rep.optimal_value, rep.beaten, rep.rows.size() - 1);
      std::printf("wrote %s\n", rep.table.string().c_str());
    } else if (verify->parsed()) {
      const auto rep = roed::verify_results(config, out_dir, opts.workers);
      for (const auto& line : rep.lines) std::printf("%s\n", line.c_str());
      if (!rep.ok) return 1;
    }
  } catch (const roed::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
