#include "roed/forward.hpp"

#include <cmath>
#include <limits>

#include "roed/errors.hpp"

namespace roed {
namespace {

void count(SolveCounter* counter, long n = 1) {
  if (counter) counter->forward_solves += n;
}

}  // namespace

ObservationOperator::ObservationOperator(const fem::Grid& grid,
                                         const std::vector<Eigen::Vector2d>& sensors) {
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const auto& p = sensors[s];
    if (!(p.x() > 0 && p.x() < 1 && p.y() > 0 && p.y() < 1)) {
      throw SensorOutsideDomain("sensor " + std::to_string(s) + " is not strictly inside (0,1)^2");
    }
    const auto loc = grid.locate(p);
    const auto nodes = grid.cell_nodes(loc.ci, loc.cj);
    const auto w = fem::Grid::basis(loc.xi, loc.eta);
    for (int a = 0; a < 4; ++a) {
      if (w[a] != 0.0) t.emplace_back(static_cast<int>(s), nodes[a], w[a]);
    }
  }
  Q_.resize(static_cast<Eigen::Index>(sensors.size()), grid.num_nodes());
  Q_.setFromTriplets(t.begin(), t.end());
  Q_.makeCompressed();
}

ForwardProblem::ForwardProblem(std::shared_ptr<const fem::Grid> grid,
                               std::vector<Eigen::Vector2d> sensors, fem::SolverMethod method)
    : grid_(std::move(grid)), sensors_(std::move(sensors)), obs_(*grid_, sensors_),
      method_(method) {
  dirichlet_.nodes = grid_->dirichlet_nodes();
  dirichlet_.values.reserve(dirichlet_.nodes.size());
  for (int k : dirichlet_.nodes) {
    dirichlet_.values.push_back(grid_->tag(k) == fem::BoundaryTag::kDirichletTop ? 1.0 : 0.0);
  }
}

Field ForwardProblem::solve_state(const Field& m, SolveCounter* counter) const {
  return Linearization(*this, m, counter).state();
}

std::shared_ptr<const Linearization> ForwardProblem::linearize(const Field& m,
                                                               SolveCounter* counter) const {
  return std::make_shared<const Linearization>(*this, m, counter);
}

Linearization::Linearization(const ForwardProblem& problem, Field m, SolveCounter* counter)
    : problem_(&problem), m_(std::move(m)) {
  const auto& grid = problem.grid();
  if (m_.size() != grid.num_nodes()) throw InvalidArgument("parameter field has the wrong length");
  if (!m_.allFinite()) throw InvalidArgument("parameter field is not finite");
  const fem::QuadratureField kappa = fem::to_quadrature(grid, m_).array().exp();
  if ((kappa.array() < std::numeric_limits<double>::min()).any()) {
    throw NonPositiveCoefficient("diffusion coefficient exp(m) underflows");
  }
  K_ = fem::assemble_weighted_stiffness(grid, kappa);
  solver_ = std::make_unique<fem::LinearSolver>(K_, problem.dirichlet().nodes, problem.method());
  u_ = solver_->solve(Vector::Zero(grid.num_nodes()), problem.dirichlet().values);
  count(counter);
  B_ = fem::assemble_coefficient_sensitivity(grid, kappa, u_);
}

Field Linearization::solve_homogeneous(const Vector& rhs, SolveCounter* counter) const {
  count(counter);
  return solver_->solve(rhs);
}

Field Linearization::solve_adjoint(const Vector& residual_weighted, SolveCounter* counter) const {
  return solve_homogeneous(problem_->observation().apply_transpose(residual_weighted), counter);
}

Field Linearization::incremental_state(const Field& mhat, SolveCounter* counter) const {
  return solve_homogeneous(-(B_ * mhat), counter);
}

Field Linearization::incremental_adjoint(const Field& uhat, const Matrix& precision,
                                         SolveCounter* counter) const {
  const auto& obs = problem_->observation();
  return solve_homogeneous(obs.apply_transpose(precision * obs.apply(uhat)), counter);
}

Vector Linearization::jacobian_apply(const Field& mhat, SolveCounter* counter) const {
  return problem_->observation().apply(incremental_state(mhat, counter));
}

Vector Linearization::jacobian_transpose_apply(const Vector& r, SolveCounter* counter) const {
  return -(B_.transpose() * solve_adjoint(r, counter));
}

Vector Linearization::gn_hessian_form_apply(const Matrix& precision, const Field& mhat,
                                            SolveCounter* counter) const {
  return gn_hessian_form_apply(precision, mhat, nullptr, nullptr, counter);
}

Vector Linearization::gn_hessian_form_apply(const Matrix& precision, const Field& mhat,
                                            Field* uhat_out, Field* phat_out,
                                            SolveCounter* counter) const {
  if (counter) ++counter->hessian_applies;
  Field uhat = incremental_state(mhat, counter);
  Field phat = incremental_adjoint(uhat, precision, counter);
  Vector out = -(B_.transpose() * phat);
  if (uhat_out) *uhat_out = std::move(uhat);
  if (phat_out) *phat_out = std::move(phat);
  return out;
}

Field gn_hessian_apply(const Linearization& lin, const MaskedPrecision& precision,
                       const fem::LinearSolver& mass_solver, const Field& mhat,
                       SolveCounter* counter) {
  return mass_solver.solve(lin.gn_hessian_form_apply(precision.matrix(), mhat, counter));
}

}  // namespace roed
