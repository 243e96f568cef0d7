#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "roed/forward.hpp"
#include "roed/noise.hpp"
#include "roed/prior.hpp"

namespace roed {

struct RandomizedEigOptions {
  int rank = 1;
  int oversample = 10;
  int power_iterations = 0;
  std::uint64_t seed = 0;
  // Ritz values below truncation * lambda_1 are reported as exactly zero.
  double truncation = 1e-10;
};

// Dominant eigenpairs of the prior-preconditioned Hessian
// H~ = C^{1/2} H C^{1/2} = A^{-1} H_form A^{-1} M, with M-orthonormal vectors.
struct EigenPairs {
  Vector values;  // descending, nonnegative
  Matrix omega;   // eigenvectors, one per column
  Matrix psi;     // C^{1/2} omega
  bool degenerate = false;  // two retained eigenvalues closer than 1e-10 lambda_1

  int size() const { return static_cast<int>(values.size()); }
  // Zero for indices past the computed rank.
  double eigenvalue(int n) const { return n < size() ? values[n] : 0.0; }
};

// Action of the Hessian bilinear form H_form on a field, returning a dual vector.
using HessianFormApply = std::function<Vector(const Field&)>;

// Randomized range finder followed by a Rayleigh-Ritz step in the M inner product:
// (oversample + rank) * (2 + power_iterations) Hessian actions. Throws BreakdownInQR
// if the sketch is not finite after one retry with a fresh seed.
EigenPairs randomized_eigs(const HessianFormApply& hessian_form, const GaussianPrior& prior,
                           const RandomizedEigOptions& options, SolveCounter* counter = nullptr);

// 1/2 sum_n [log(1 + lambda_n) - lambda_n / (1 + lambda_n)] + constant
double info_gain_low_rank(const Vector& eigenvalues, double constant);
double info_gain_low_rank(const EigenPairs& eigs, double constant);

// One SAA sample frozen at its fixed MAP point.
struct FixedMapPoint {
  std::shared_ptr<const Linearization> linearization;
  Vector data;
  double constant = 0.0;  // 1/2 |m_post - m_pr|^2_{C^{-1}}
};

struct UtilityOptions {
  int oversample = 10;
  int power_iterations = 0;
  std::optional<int> rank;  // defaults to the number of active sensors
  std::uint64_t eig_seed = 0x5eed;
  double truncation = 1e-10;
  int workers = 1;
};

struct SolveCounts {
  long forward_solves = 0;
  long prior_solves = 0;
  long hessian_applies = 0;
};

struct UtilityValue {
  double value = 0.0;
  Vector per_sample;  // information gains including C_i
  Vector constants;   // C_i
  SolveCounts counts;
};

struct UtilityGradient {
  Vector gradient;
  Matrix per_sample;  // dim(theta) x N_SAA
  bool degenerate = false;
  SolveCounts counts;
};

struct UtilityValueAndGradient {
  UtilityValue value;
  UtilityGradient gradient;
};

// Low-rank expected information gain with fixed MAP points, and its gradient in
// theta. Per-sample work runs on options.workers threads; results are reduced in
// sample order so they do not depend on the worker count.
class UtilityEvaluator {
 public:
  UtilityEvaluator(std::shared_ptr<const ForwardProblem> forward,
                   std::shared_ptr<const GaussianPrior> prior,
                   std::shared_ptr<const NoiseModel> noise, std::vector<FixedMapPoint> samples,
                   UtilityOptions options = {});

  static std::vector<FixedMapPoint> freeze(const ForwardProblem& forward,
                                           const GaussianPrior& prior,
                                           const std::vector<Field>& map_points,
                                           const std::vector<Vector>& data, int workers = 1);

  UtilityValue value(const Design& design, const Vector& theta) const;
  UtilityGradient gradient(const Design& design, const Vector& theta) const;
  // Shares each sample's eigendecomposition between value and gradient.
  UtilityValueAndGradient value_and_gradient(const Design& design, const Vector& theta) const;

  EigenPairs eigenpairs(int sample, const MaskedPrecision& precision,
                        SolveCounter* counter = nullptr) const;

  int num_samples() const { return static_cast<int>(samples_.size()); }
  const std::vector<FixedMapPoint>& samples() const { return samples_; }
  const NoiseModel& noise() const { return *noise_; }
  const ForwardProblem& forward() const { return *forward_; }
  const GaussianPrior& prior() const { return *prior_; }
  const UtilityOptions& options() const { return options_; }

 private:
  struct SampleResult {
    double value = 0.0;
    Vector gradient;
    bool degenerate = false;
  };
  SampleResult evaluate_sample(int i, const MaskedPrecision& precision, const Vector& theta,
                               bool want_gradient, SolveCounter* counter) const;
  UtilityValueAndGradient value_and_gradient_impl(const Design& design, const Vector& theta,
                                                 bool want_gradient) const;

  std::shared_ptr<const ForwardProblem> forward_;
  std::shared_ptr<const GaussianPrior> prior_;
  std::shared_ptr<const NoiseModel> noise_;
  std::vector<FixedMapPoint> samples_;
  UtilityOptions options_;
};

// Thread-safe memo of utility values keyed by design bits and theta quantized at 1e-12.
class UtilityMemo {
 public:
  static std::string key(const Design& design, const Vector& theta);

  std::optional<double> find(const std::string& key) const;
  void insert(const std::string& key, double value);
  void clear();
  long size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, double> values_;
};

}  // namespace roed
