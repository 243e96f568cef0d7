#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "roed/forward.hpp"
#include "roed/noise.hpp"
#include "roed/prior.hpp"

namespace roed {

struct SyntheticDataset {
  std::uint64_t seed = 0;
  Vector theta_bar;
  std::vector<Field> parameters;        // m_i drawn from the prior
  std::vector<Vector> standard_normals; // z_i with eta_i = L(theta_bar) z_i
  std::vector<Vector> noise;            // eta_i
  std::vector<Vector> data;             // y_i = F(m_i) + eta_i

  int size() const { return static_cast<int>(data.size()); }
};

// Draws m_i from the prior and eta_i ~ N(0, Gamma(theta_bar)) with every sensor
// observed. Sample i uses streams derived from (seed, i) only, so the dataset
// does not depend on the worker count.
SyntheticDataset synthesize_data(const GaussianPrior& prior, const ForwardProblem& forward,
                                 const NoiseModel& noise, const Vector& theta_bar, int count,
                                 std::uint64_t seed, int workers = 1);

// Re-colors an existing dataset's noise for a new theta_bar, keeping m_i and z_i.
SyntheticDataset recolor_noise(const SyntheticDataset& dataset, const NoiseModel& noise,
                               const Vector& theta_bar);

// Phi(m) = 1/2 |y - F(m)|^2_{Gamma^+} + w/2 |m - m_pr|^2_{C^{-1}}
class MapObjective {
 public:
  MapObjective(const ForwardProblem& forward, const GaussianPrior& prior, Matrix precision,
               Vector data, double prior_weight = 1.0);

  struct Evaluation {
    double misfit = 0.0;
    double regularization = 0.0;
    double value() const { return misfit + regularization; }
  };
  struct Gradient {
    Vector prior;   // dual vector w R (m - m_pr)
    Vector misfit;  // dual vector B(u)^T p
    Vector dual() const { return prior + misfit; }
  };

  Evaluation evaluate(const Field& m) const;
  Evaluation evaluate(const Linearization& lin) const;
  Gradient gradient_parts(const Linearization& lin) const;
  // M-Riesz representative of the gradient.
  Field gradient(const Linearization& lin) const;
  // (H_GN + w R) v as a dual vector.
  Vector hessian_apply(const Linearization& lin, const Field& v) const;

  const Matrix& precision() const { return precision_; }
  const Vector& data() const { return data_; }
  const GaussianPrior& prior() const { return *prior_; }
  const ForwardProblem& forward() const { return *forward_; }
  double prior_weight() const { return prior_weight_; }

 private:
  const ForwardProblem* forward_;
  const GaussianPrior* prior_;
  Matrix precision_;
  Vector data_;
  double prior_weight_;
};

// M-Riesz gradient of Phi at m.
Field gradient_map_objective(const ForwardProblem& forward, const GaussianPrior& prior,
                             const Field& m, const Vector& data, const MaskedPrecision& noise);

struct MapOptions {
  int max_iterations = 25;
  double gradient_tolerance = 1e-8;  // relative to max(1, |grad(m0)|_M)
  double armijo_c = 1e-4;
  int max_backtracks = 20;
  int max_cg_iterations = 200;
};

struct MapResult {
  Field m_post;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double initial_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

// Inexact Gauss-Newton-CG with Armijo backtracking, prior-preconditioned CG and
// forcing term min(0.5, sqrt(|g| / |g0|)).
MapResult solve_map(const ForwardProblem& forward, const GaussianPrior& prior,
                    const MaskedPrecision& noise, const Vector& data, const Field& m0,
                    const MapOptions& options = {});
MapResult solve_map(const MapObjective& objective, const Field& m0,
                    const MapOptions& options = {});

// MAP points for every sample at the all-sensors design and theta_bar.
std::vector<MapResult> compute_fixed_maps(const GaussianPrior& prior,
                                          const ForwardProblem& forward,
                                          const NoiseModel& noise,
                                          const SyntheticDataset& dataset,
                                          const MapOptions& options = {}, int workers = 1);

// Fixed-MAP cache file: {"format": "roed-fixed-maps/1", "key": ..., "num_nodes": n,
// "maps": [[...], ...]} with values printed at 17 significant digits.
void save_fixed_maps(const std::filesystem::path& path, const std::string& key,
                     const std::vector<Field>& maps);
std::optional<std::vector<Field>> load_fixed_maps(const std::filesystem::path& path,
                                                  const std::string& key, int num_nodes);

}  // namespace roed
