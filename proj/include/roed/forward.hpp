#pragma once

#include <atomic>
#include <memory>
#include <vector>

#include "roed/fem.hpp"
#include "roed/noise.hpp"

namespace roed {

// Thread-safe tallies of linear solves, exported per utility call.
struct SolveCounter {
  std::atomic<long> forward_solves{0};   // state, adjoint, incremental solves
  std::atomic<long> prior_solves{0};     // A_h solves of the prior operator
  std::atomic<long> hessian_applies{0};  // Gauss-Newton Hessian actions

  void reset() {
    forward_solves = 0;
    prior_solves = 0;
    hessian_applies = 0;
  }
};

// Rows evaluate the bilinear interpolant at each sensor.
class ObservationOperator {
 public:
  ObservationOperator(const fem::Grid& grid, const std::vector<Eigen::Vector2d>& sensors);

  int num_sensors() const { return static_cast<int>(Q_.rows()); }
  const SparseMatrix& matrix() const { return Q_; }
  Vector apply(const Field& u) const { return Q_ * u; }
  Field apply_transpose(const Vector& r) const { return Q_.transpose() * r; }

 private:
  SparseMatrix Q_;
};

class Linearization;

// -div(exp(m) grad u) = 0 on the unit square, u = 0 at y = 0, u = 1 at y = 1,
// homogeneous Neumann on x = 0 and x = 1, observed at a set of interior sensors.
class ForwardProblem {
 public:
  ForwardProblem(std::shared_ptr<const fem::Grid> grid, std::vector<Eigen::Vector2d> sensors,
                 fem::SolverMethod method = fem::SolverMethod::kDirect);

  const fem::Grid& grid() const { return *grid_; }
  const std::vector<Eigen::Vector2d>& sensors() const { return sensors_; }
  const ObservationOperator& observation() const { return obs_; }
  int num_sensors() const { return obs_.num_sensors(); }
  const fem::Dirichlet& dirichlet() const { return dirichlet_; }
  fem::SolverMethod method() const { return method_; }

  Field solve_state(const Field& m, SolveCounter* counter = nullptr) const;
  Vector observe(const Field& u) const { return obs_.apply(u); }
  Vector parameter_to_observable(const Field& m) const { return observe(solve_state(m)); }

  // Factorizes the operator at m and solves the state; the result is immutable.
  std::shared_ptr<const Linearization> linearize(const Field& m,
                                                 SolveCounter* counter = nullptr) const;

 private:
  std::shared_ptr<const fem::Grid> grid_;
  std::vector<Eigen::Vector2d> sensors_;
  ObservationOperator obs_;
  fem::Dirichlet dirichlet_;
  fem::SolverMethod method_;
};

// Frozen linearization point (m, u(m)) with its factorized operator. The state
// operator is linear in u and self-adjoint, so state, adjoint and incremental
// solves all reuse the one factorization.
class Linearization {
 public:
  Linearization(const ForwardProblem& problem, Field m, SolveCounter* counter);

  const Field& parameter() const { return m_; }
  const Field& state() const { return u_; }
  const ForwardProblem& problem() const { return *problem_; }
  int num_sensors() const { return problem_->num_sensors(); }

  // Solves K p = Q^T r with homogeneous Dirichlet data, r = Gamma^+ (y - Q u).
  Field solve_adjoint(const Vector& residual_weighted, SolveCounter* counter = nullptr) const;

  // Coefficient derivative integral exp(m) phi_k grad u . grad p, as a dual vector.
  Vector coefficient_gradient(const Field& p) const { return B_.transpose() * p; }

  // uhat = -K^{-1} B(u) mhat: the state sensitivity along mhat.
  Field incremental_state(const Field& mhat, SolveCounter* counter = nullptr) const;
  // phat = K^{-1} Q^T Gamma^+ Q uhat.
  Field incremental_adjoint(const Field& uhat, const Matrix& precision,
                            SolveCounter* counter = nullptr) const;

  Vector jacobian_apply(const Field& mhat, SolveCounter* counter = nullptr) const;
  // J^T r as a dual vector.
  Vector jacobian_transpose_apply(const Vector& r, SolveCounter* counter = nullptr) const;

  // J^T Gamma^+ J mhat as a dual vector (the bilinear form of the Hessian).
  Vector gn_hessian_form_apply(const Matrix& precision, const Field& mhat,
                               SolveCounter* counter = nullptr) const;
  // As above, returning the incremental fields for reuse.
  Vector gn_hessian_form_apply(const Matrix& precision, const Field& mhat, Field* uhat,
                               Field* phat, SolveCounter* counter) const;

  const SparseMatrix& stiffness() const { return K_; }
  const SparseMatrix& coefficient_sensitivity() const { return B_; }

 private:
  Field solve_homogeneous(const Vector& rhs, SolveCounter* counter) const;

  const ForwardProblem* problem_;
  Field m_;
  SparseMatrix K_;
  SparseMatrix B_;
  std::unique_ptr<fem::LinearSolver> solver_;
  Field u_;
};

// Operator form M^{-1} J^T Gamma^+ J mhat of the Gauss-Newton Hessian; needs the mass matrix.
Field gn_hessian_apply(const Linearization& lin, const MaskedPrecision& precision,
                       const fem::LinearSolver& mass_solver, const Field& mhat,
                       SolveCounter* counter = nullptr);

}  // namespace roed
