#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roed/fem.hpp"
#include "roed/forward.hpp"
#include "roed/inverse.hpp"
#include "roed/noise.hpp"
#include "roed/optimizer.hpp"
#include "roed/prior.hpp"
#include "roed/utility.hpp"

namespace roed {

// Sensors at the cell centres of an nx x ny partition of the unit square,
// ordered row by row from the bottom left.
std::vector<Eigen::Vector2d> sensor_grid(int nx, int ny);

struct ProblemConfig {
  int nx = 32;
  int ny = 32;
  fem::SolverMethod solver = fem::SolverMethod::kDirect;
  PriorParams prior;
  double prior_mean = 0.0;
  std::vector<Eigen::Vector2d> sensors;
  NoiseVariant variant = NoiseVariant::kTwoSensorCorrelated;
  Box box;
  Matrix fixed_covariance;  // kFixed only
  int n_saa = 32;
  std::uint64_t data_seed = 1;
  MapOptions map;
  UtilityOptions utility;
  double refresh_threshold = 0.25;
  std::optional<std::filesystem::path> cache_dir;
  int workers = 1;

  // Canonical description of everything that determines the fixed MAP points
  // apart from theta_bar.
  std::string key() const;
};

NoiseModel make_noise_model(const ProblemConfig& config);

// The PDE-backed robust utility: prior, forward model, synthetic data and
// fixed MAP points at a reference theta_bar. The fixed MAP points are
// recomputed when the average robust parameter moves by more than
// refresh_threshold relative to the reference.
class PdeProblem : public RobustUtility {
 public:
  explicit PdeProblem(ProblemConfig config, std::optional<Vector> theta_bar = std::nullopt);

  int num_sensors() const override { return forward_->num_sensors(); }
  const Box& box() const override { return noise_->box(); }
  double value(const Design& design, const Vector& theta) override;
  std::pair<double, Vector> value_and_gradient(const Design& design,
                                               const Vector& theta) override;
  bool update_theta_bar(const Vector& theta_bar) override;

  // Rebuilds the fixed MAP points at exactly this theta_bar.
  void set_theta_bar(const Vector& theta_bar);
  const Vector& theta_bar() const { return theta_bar_; }

  const ProblemConfig& config() const { return config_; }
  const UtilityEvaluator& evaluator() const { return *evaluator_; }
  std::shared_ptr<const fem::Grid> grid() const { return grid_; }
  std::shared_ptr<const GaussianPrior> prior() const { return prior_; }
  std::shared_ptr<const ForwardProblem> forward() const { return forward_; }
  std::shared_ptr<const NoiseModel> noise() const { return noise_; }
  const SyntheticDataset& dataset() const { return dataset_; }
  const std::vector<MapResult>& map_results() const { return maps_; }
  int refreshes() const { return refreshes_; }
  bool loaded_from_cache() const { return from_cache_; }
  const SolveCounts& totals() const { return totals_; }
  double mean_constant() const;

 private:
  void rebuild(const Vector& theta_bar);

  ProblemConfig config_;
  std::shared_ptr<const fem::Grid> grid_;
  std::shared_ptr<const GaussianPrior> prior_;
  std::shared_ptr<const ForwardProblem> forward_;
  std::shared_ptr<const NoiseModel> noise_;
  SyntheticDataset dataset_;
  bool have_dataset_ = false;
  std::vector<MapResult> maps_;
  std::unique_ptr<UtilityEvaluator> evaluator_;
  Vector theta_bar_;
  int refreshes_ = 0;
  bool from_cache_ = false;
  SolveCounts totals_;
};

}  // namespace roed
