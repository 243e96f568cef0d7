#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "roed/design.hpp"
#include "roed/noise.hpp"
#include "roed/utility.hpp"

namespace roed {

// U(xi, theta) as seen by the optimizer.
class RobustUtility {
 public:
  virtual ~RobustUtility() = default;
  virtual int num_sensors() const = 0;
  virtual const Box& box() const = 0;
  virtual double value(const Design& design, const Vector& theta) = 0;
  virtual std::pair<double, Vector> value_and_gradient(const Design& design,
                                                       const Vector& theta) = 0;
  // Notifies the utility of a new average robust parameter. Returns true if
  // previously computed values are no longer valid.
  virtual bool update_theta_bar(const Vector& theta_bar) {
    (void)theta_bar;
    return false;
  }
};

// Memoized front end to a RobustUtility that also audits every design it sees.
class MemoizedUtility {
 public:
  explicit MemoizedUtility(RobustUtility& utility) : utility_(&utility) {}

  double value(const Design& design, const Vector& theta);
  std::pair<double, Vector> value_and_gradient(const Design& design, const Vector& theta);
  void invalidate() { memo_.clear(); }

  RobustUtility& utility() { return *utility_; }
  long evaluations() const { return evaluations_; }
  long hits() const { return hits_; }

 private:
  RobustUtility* utility_;
  UtilityMemo memo_;
  long evaluations_ = 0;
  long hits_ = 0;
};

using UtilityFn = std::function<double(const Design&, const Vector&)>;

struct RobustMin {
  double value = 0.0;
  int index = 0;  // into theta_bar; earliest on ties
};

// Exact minimum over a finite parameter sample.
RobustMin robust_min_utility(const Design& design, const std::vector<Vector>& theta_bar,
                             const UtilityFn& utility);

// Sample estimates of the baseline E[U |g|^2] / E[|g|^2] that minimizes the
// variance of the score-function gradient, g the score of a design.
enum class BaselineEstimator {
  kDiagonal,  // sum_i U_i |g_i|^2 in the numerator
  kPaired,    // sum_ij U_i <g_i, g_j> in the numerator
};

std::string to_string(BaselineEstimator estimator);
BaselineEstimator baseline_estimator_from_string(const std::string& name);

// max(0, b*) with b* = numerator / (N sum_k (1 + w_k)^4 / w_k^2 (pi_k - pi_k^2)).
// Returns 0 when the denominator vanishes.
double optimal_baseline(const std::vector<Design>& designs, const std::vector<double>& utilities,
                        const ConditionalBernoulli& dist,
                        BaselineEstimator estimator = BaselineEstimator::kDiagonal);

// (1/N) sum_i (U_i - b) grad log P(xi_i)
Vector stochastic_gradient(const std::vector<Design>& designs,
                           const std::vector<double>& utilities,
                           const ConditionalBernoulli& dist, double baseline);

// Clamps p onto [0, 1]^n and, if the clamp leaves more than `budget` ones or
// more than n - budget zeros, moves the surplus back just inside the box
// (keeping the entries with the most extreme targets on the bound).
Vector project_policy(const Vector& target, int budget);

struct OptimizerConfig {
  int budget = 1;
  int ensemble = 16;
  int final_ensemble = 0;  // defaults to ensemble
  double learning_rate = 0.5;
  int halving_patience = 5;
  int max_outer_iterations = 20;
  int max_policy_iterations = 100;
  double policy_tolerance = 1e-12;
  bool use_baseline = true;
  BaselineEstimator baseline_estimator = BaselineEstimator::kDiagonal;
  int max_inner_iterations = 100;
  double inner_tolerance = 1e-6;
  int lbfgs_memory = 10;
  double stagnation_tolerance = 1e-8;
  double duplicate_tolerance = 1e-10;
  std::uint64_t seed = 0;
  std::optional<Vector> initial_policy;  // defaults to budget / Nd
  std::vector<Vector> initial_theta;     // defaults to the box midpoint
};

struct PolicyStepRecord {
  int outer = 0;
  int step = 0;
  Vector policy;  // before the step
  std::vector<Design> designs;
  std::vector<double> utilities;  // min over the parameter sample
  double objective = 0.0;         // sample mean of utilities
  double baseline = 0.0;
  double gradient_norm = 0.0;
  double step_norm = 0.0;
  double learning_rate = 0.0;
  long new_evaluations = 0;
  int theta_count = 0;
};

struct PolicyResult {
  Vector policy;
  int iterations = 0;
  bool converged = false;
  std::vector<PolicyStepRecord> steps;
};

struct InnerResult {
  Vector theta;
  double value = 0.0;
  double initial_value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool line_search_failed = false;
  double projected_gradient = 0.0;
};

struct OuterRecord {
  int outer = 0;
  Vector policy;
  Design incumbent;
  double incumbent_value = 0.0;  // min over the parameter sample before expansion
  Vector theta_start;
  Vector theta_new;
  double theta_value = 0.0;
  int inner_iterations = 0;
  bool inner_converged = false;
  bool appended = false;
  std::string note;
  int theta_count = 0;  // after this iteration
  int policy_iterations = 0;
};

struct RoedResult {
  Design design;
  Vector policy;
  Vector theta_opt;
  double value = 0.0;  // min over the final parameter sample
  std::vector<Vector> theta_bar;
  std::vector<Design> final_samples;
  std::vector<double> final_utilities;
  std::vector<OuterRecord> outer;
  std::vector<PolicyStepRecord> policy_steps;
  long sampled_designs = 0;
  long infeasible_designs = 0;
  long utility_evaluations = 0;
  long memo_hits = 0;
  int theta_bar_refreshes = 0;
  bool converged = false;
  std::string stop_reason;
};

// Max-min robust design by alternating stochastic policy ascent over the
// conditional Bernoulli policy and box-constrained descent in theta.
class RoedOptimizer {
 public:
  RoedOptimizer(RobustUtility& utility, OptimizerConfig config);

  PolicyResult policy_opt(const Vector& p0, const std::vector<Vector>& theta_bar, int outer);
  InnerResult inner_step(const Design& design, const Vector& theta_start);
  RoedResult run();

  // Draws designs and audits their size.
  std::vector<Design> draw(const ConditionalBernoulli& dist, int count, std::uint32_t a,
                           std::uint32_t b);
  double robust_value(const Design& design, const std::vector<Vector>& theta_bar,
                      int* argmin = nullptr);

  MemoizedUtility& memo() { return memo_; }
  const OptimizerConfig& config() const { return config_; }
  long sampled_designs() const { return sampled_; }
  long infeasible_designs() const { return infeasible_; }

 private:
  RobustUtility& utility_;
  OptimizerConfig config_;
  MemoizedUtility memo_;
  long sampled_ = 0;
  long infeasible_ = 0;
};

Vector average_theta(const std::vector<Vector>& theta_bar);

}  // namespace roed
