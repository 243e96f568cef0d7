#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "roed/optimizer.hpp"
#include "roed/problem.hpp"

namespace roed {

struct LandscapeConfig {
  std::vector<Design> designs;  // empty: every design over the sensors
  int points_per_axis = 5;
  long max_points = 10000;
  int max_sensors = 8;
  bool empty_design_constant = false;  // otherwise the empty design reports NaN
};

struct CompareConfig {
  int count = 64;
  std::uint64_t seed = 7;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  ProblemConfig problem;
  OptimizerConfig optimizer;
  LandscapeConfig landscape;
  CompareConfig compare;
  std::string output_dir = "roed_output";
  std::string canonical;  // normalized JSON text of the input, after overrides

  std::string hash() const;
};

// JSON config; unknown keys and out-of-range values raise ConfigError before
// any solve. The seed override replaces the top-level seed.
ExperimentConfig parse_config(const std::string& text,
                              std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt);

// Output directory precedence: explicit flag, then ROED_OUTPUT_DIR, then the config.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config,
                                         const std::optional<std::string>& flag);

struct RunArtifacts {
  std::filesystem::path results;
  std::filesystem::path trajectory;
  std::filesystem::path policy_steps;
  RoedResult result;
  Vector reference_theta_bar;
};

RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                            int workers = 1);

struct LandscapeRow {
  Design design;
  Vector theta;
  double value = 0.0;
};

std::vector<Vector> theta_grid(const Box& box, int points_per_axis);
std::vector<LandscapeRow> evaluate_landscape(const ExperimentConfig& config, PdeProblem& problem);
std::filesystem::path write_landscape(const ExperimentConfig& config,
                                      const std::vector<LandscapeRow>& rows,
                                      const std::filesystem::path& out_dir);

struct CompareRow {
  std::string kind;  // "optimal" or "random"
  int index = 0;
  Design design;
  double value = 0.0;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  double optimal_value = 0.0;
  int beaten = 0;            // random designs with value <= optimal
  double percentile = 0.0;   // fraction of random designs at or below the optimum
  std::filesystem::path table;
};

// Uniformly random designs of the configured budget.
std::vector<Design> random_designs(int num_sensors, int budget, int count, std::uint64_t seed);

// Reads results.json from out_dir and evaluates random designs at theta_opt.
CompareReport compare_random_designs(const ExperimentConfig& config,
                                     const std::filesystem::path& out_dir, int workers = 1);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> lines;
};

// Recomputes the recorded robust value of the optimal design and checks the
// provenance block, feasibility and the parameter sample.
VerifyReport verify_results(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                            int workers = 1);

std::string design_string(const Design& design);
Design parse_design(const std::string& bits);
std::string format_double(double v);

}  // namespace roed
