#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>

#include "roed/fem.hpp"

namespace roed {

struct PriorParams {
  double gamma = 0.04;
  double delta = 0.2;
  Eigen::Matrix2d K = (Eigen::Matrix2d() << 1.25, 0.75, 0.75, 1.25).finished();
  // Robin coefficient; defaults to sqrt(gamma * delta / 2) when unset.
  std::optional<double> robin;
};

// Gaussian prior N(mean, C) with C = A^{-2}, A = -gamma div(K grad) + delta
// with a Robin condition on the whole boundary. On nodal vectors the covariance
// operator is C = A_h^{-1} M A_h^{-1} M, which is self-adjoint in the M inner
// product, with square root A_h^{-1} M and precision form A_h M^{-1} A_h.
class GaussianPrior {
 public:
  GaussianPrior(std::shared_ptr<const fem::Grid> grid, const PriorParams& params,
                std::optional<Field> mean = std::nullopt);

  const fem::Grid& grid() const { return *grid_; }
  std::shared_ptr<const fem::Grid> grid_ptr() const { return grid_; }
  double gamma() const { return gamma_; }
  double delta() const { return delta_; }
  double robin() const { return beta_; }
  const Field& mean() const { return mean_; }
  const SparseMatrix& operator_matrix() const { return A_; }
  const SparseMatrix& mass() const { return M_; }

  // A_h^{-1} M v
  Field apply_sqrt_cov(const Field& v) const;
  // A_h^{-1} M A_h^{-1} M v
  Field apply_cov(const Field& v) const;
  // A_h M^{-1} A_h x: the Cameron-Martin form as a matrix acting on x.
  Vector apply_precision(const Field& x) const;
  // A_h^{-1} M A_h^{-1} g: inverse of apply_precision.
  Field apply_precision_inverse(const Vector& g) const;
  Field solve_operator(const Vector& rhs) const;
  Field solve_mass(const Vector& rhs) const;

  double cm_inner(const Field& x, const Field& y) const;
  double cm_norm_sq(const Field& x) const { return cm_inner(x, x); }

  Field sample(std::uint64_t seed) const;
  // mean + A_h^{-1} b where b ~ N(0, M) is assembled from per-cell square roots
  // of the local mass matrices.
  template <class Rng>
  Field sample(Rng& rng) const;

  long operator_solves() const { return operator_solves_.load(); }

 private:
  Vector white_noise(const Vector& standard_normals) const;

  std::shared_ptr<const fem::Grid> grid_;
  double gamma_;
  double delta_;
  double beta_;
  Field mean_;
  SparseMatrix M_;
  SparseMatrix A_;
  std::unique_ptr<fem::LinearSolver> A_solver_;
  std::unique_ptr<fem::LinearSolver> M_solver_;
  Eigen::Matrix4d local_mass_factor_;
  mutable std::atomic<long> operator_solves_{0};
};

}  // namespace roed

#include <random>

namespace roed {

template <class Rng>
Field GaussianPrior::sample(Rng& rng) const {
  std::normal_distribution<double> normal;
  Vector z(4 * grid_->num_cells());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
  return mean_ + solve_operator(white_noise(z));
}

}  // namespace roed
