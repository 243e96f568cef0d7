#include "roed/prior.hpp"

#include <cmath>

#include "roed/errors.hpp"

namespace roed {

GaussianPrior::GaussianPrior(std::shared_ptr<const fem::Grid> grid, const PriorParams& params,
                             std::optional<Field> mean)
    : grid_(std::move(grid)), gamma_(params.gamma), delta_(params.delta) {
  if (!(gamma_ > 0) || !(delta_ > 0)) throw InvalidArgument("gamma and delta must be positive");
  const Eigen::Matrix2d& K = params.K;
  if (std::abs(K(0, 1) - K(1, 0)) > 1e-14 || K(0, 0) <= 0 || K.determinant() <= 0) {
    throw InvalidArgument("K must be symmetric positive definite");
  }
  beta_ = params.robin.value_or(std::sqrt(gamma_ * delta_ / 2.0));
  const int n = grid_->num_nodes();
  mean_ = mean.value_or(Field::Zero(n));
  if (mean_.size() != n) throw InvalidArgument("prior mean has the wrong length");

  M_ = fem::assemble_mass(*grid_);
  const auto ones = fem::QuadratureField::Ones(4 * grid_->num_cells());
  const SparseMatrix S = fem::assemble_weighted_stiffness(*grid_, ones, K);
  A_ = gamma_ * S + delta_ * M_ + beta_ * fem::assemble_boundary_mass(*grid_);
  A_solver_ = std::make_unique<fem::LinearSolver>(A_, std::vector<int>{});
  M_solver_ = std::make_unique<fem::LinearSolver>(M_, std::vector<int>{});

  // Every cell has the same local mass matrix on a uniform grid.
  Eigen::Matrix4d local;
  const double h = grid_->hx() * grid_->hy();
  local << 4, 2, 2, 1,  //
      2, 4, 1, 2,       //
      2, 1, 4, 2,       //
      1, 2, 2, 4;
  local *= h / 36.0;
  local_mass_factor_ = Eigen::LLT<Eigen::Matrix4d>(local).matrixL();
}

Field GaussianPrior::solve_operator(const Vector& rhs) const {
  ++operator_solves_;
  return A_solver_->solve(rhs);
}

Field GaussianPrior::solve_mass(const Vector& rhs) const { return M_solver_->solve(rhs); }

Field GaussianPrior::apply_sqrt_cov(const Field& v) const { return solve_operator(M_ * v); }

Field GaussianPrior::apply_cov(const Field& v) const {
  return apply_sqrt_cov(apply_sqrt_cov(v));
}

Vector GaussianPrior::apply_precision(const Field& x) const {
  return A_ * solve_mass(A_ * x);
}

Field GaussianPrior::apply_precision_inverse(const Vector& g) const {
  return solve_operator(M_ * solve_operator(g));
}

double GaussianPrior::cm_inner(const Field& x, const Field& y) const {
  return (A_ * x).dot(solve_mass(A_ * y));
}

Field GaussianPrior::sample(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  return sample(rng);
}

Vector GaussianPrior::white_noise(const Vector& z) const {
  const auto& g = *grid_;
  Vector b = Vector::Zero(g.num_nodes());
  for (int cj = 0; cj < g.ny(); ++cj) {
    for (int ci = 0; ci < g.nx(); ++ci) {
      const int c = cj * g.nx() + ci;
      const Eigen::Vector4d local = local_mass_factor_ * z.segment<4>(4 * c);
      const auto nodes = g.cell_nodes(ci, cj);
      for (int a = 0; a < 4; ++a) b[nodes[a]] += local[a];
    }
  }
  return b;
}

}  // namespace roed
