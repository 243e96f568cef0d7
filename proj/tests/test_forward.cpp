#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "roed/errors.hpp"
#include "roed/forward.hpp"
#include "roed/problem.hpp"

using namespace roed;

namespace {

std::shared_ptr<const fem::Grid> grid(int n) { return std::make_shared<fem::Grid>(n, n); }

}  // namespace

TEST_SUITE("forward") {
  TEST_CASE("observation operator") {
    fem::Grid g(8, 8);
    ObservationOperator Q(g, {{0.5, 0.25}, {0.5, 0.75}, {0.31, 0.77}});
    const Vector sums = Matrix(Q.matrix()).rowwise().sum();
    for (int i = 0; i < 3; ++i) CHECK(sums[i] == doctest::Approx(1.0).epsilon(1e-14));
    const Field u = g.interpolate([](double, double y) { return y; });
    const Vector obs = Q.apply(u);
    CHECK(std::abs(obs[0] - 0.25) <= 1e-12);
    CHECK(std::abs(obs[1] - 0.75) <= 1e-12);
    CHECK(Q.apply(Field::Zero(g.num_nodes())).norm() == 0.0);
    std::mt19937_64 rng(1);
    const Field r = oracle::random_vector(g.num_nodes(), rng);
    CHECK(Q.apply(r)[0] == r[g.node(4, 2)]);
    CHECK_THROWS_AS(ObservationOperator(g, {{0.0, 0.5}}), SensorOutsideDomain);
    CHECK_THROWS_AS(ObservationOperator(g, {{0.5, 1.2}}), SensorOutsideDomain);
  }

  TEST_CASE("state solve") {
    auto g = grid(8);
    ForwardProblem fwd(g, {{0.5, 0.25}, {0.5, 0.75}});
    const int n = g->num_nodes();
    const Field u0 = fwd.solve_state(Field::Zero(n));
    for (int k = 0; k < n; ++k) CHECK(std::abs(u0[k] - g->coordinate(k).y()) <= 1e-10);
    const Field uc = fwd.solve_state(Field::Constant(n, 1.7));
    CHECK((uc - u0).cwiseAbs().maxCoeff() <= 1e-10);
    const Field u = fwd.solve_state(oracle::smooth_field(*g, 1.5));
    CHECK(u.minCoeff() >= -1e-10);
    CHECK(u.maxCoeff() <= 1.0 + 1e-10);
    const Vector y = fwd.parameter_to_observable(Field::Zero(n));
    CHECK(std::abs(y[0] - 0.25) <= 1e-12);
    CHECK(std::abs(y[1] - 0.75) <= 1e-12);
    CHECK_THROWS_AS(fwd.solve_state(Field::Constant(n, -1000.0)), NonPositiveCoefficient);
  }

  TEST_CASE("adjoint linearity and dot-product test") {
    auto g = grid(8);
    ForwardProblem fwd(g, sensor_grid(3, 3));
    const auto lin = fwd.linearize(oracle::smooth_field(*g));
    std::mt19937_64 rng(7);
    const int n = g->num_nodes();
    const Vector r1 = oracle::random_vector(9, rng);
    const Vector r2 = oracle::random_vector(9, rng);
    CHECK(lin->solve_adjoint(Vector::Zero(9)).norm() == 0.0);
    const Field sum = lin->solve_adjoint(r1 + r2);
    CHECK((sum - lin->solve_adjoint(r1) - lin->solve_adjoint(r2)).norm() <= 1e-10 * sum.norm());
    for (int t = 0; t < 5; ++t) {
      const Field v = oracle::random_vector(n, rng);
      const Vector r = oracle::random_vector(9, rng);
      const double a = lin->jacobian_apply(v).dot(r);
      const double b = v.dot(lin->jacobian_transpose_apply(r));
      CHECK(oracle::rel_err(a, b) <= 1e-8);
    }
  }

  TEST_CASE("Jacobian matches finite differences of the forward map") {
    auto g = grid(8);
    ForwardProblem fwd(g, sensor_grid(2, 2));
    const Field m = oracle::smooth_field(*g);
    const auto lin = fwd.linearize(m);
    const Field dir = g->interpolate([](double x, double y) { return std::cos(2 * x + y); });
    const double h = 1e-5;
    const Vector fd =
        (fwd.parameter_to_observable(m + h * dir) - fwd.parameter_to_observable(m - h * dir)) /
        (2 * h);
    const Vector jv = lin->jacobian_apply(dir);
    CHECK((fd - jv).norm() <= 1e-7 * jv.norm());
  }

  TEST_CASE("Gauss-Newton Hessian: symmetry, PSD and dense oracle") {
    auto g = grid(8);
    const auto sensors = sensor_grid(2, 2);
    ForwardProblem fwd(g, sensors);
    const auto lin = fwd.linearize(oracle::smooth_field(*g));
    const int n = g->num_nodes();
    std::mt19937_64 rng(9);
    Matrix P = Matrix::Identity(4, 4);
    const fem::LinearSolver mass_solver(fem::assemble_mass(*g), {});
    const MaskedPrecision ones(Matrix::Identity(4, 4), Design(4, 1));
    const SparseMatrix M = fem::assemble_mass(*g);

    CHECK(gn_hessian_apply(*lin, ones, mass_solver, Field::Zero(n)).norm() == 0.0);
    for (int t = 0; t < 5; ++t) {
      const Field v = oracle::random_vector(n, rng);
      const Field w = oracle::random_vector(n, rng);
      const double a = v.dot(M * gn_hessian_apply(*lin, ones, mass_solver, w));
      const double b = w.dot(M * gn_hessian_apply(*lin, ones, mass_solver, v));
      CHECK(oracle::rel_err(a, b) <= 1e-8);
      CHECK(v.dot(M * gn_hessian_apply(*lin, ones, mass_solver, v)) >= -1e-12);
    }

    // Dense J^T J from adjoint rows vs the incremental-solve Hessian action.
    const Matrix H = oracle::dense_hessian_form(*lin, P);
    Matrix Hcols(n, n);
    for (int k = 0; k < n; ++k) {
      Field e = Field::Zero(n);
      e[k] = 1.0;
      Hcols.col(k) = lin->gn_hessian_form_apply(P, e);
    }
    const double scale = H.cwiseAbs().maxCoeff();
    CHECK((H - Hcols).cwiseAbs().maxCoeff() <= 1e-8 * scale);
  }

  TEST_CASE("rank of the Gauss-Newton Hessian is bounded by the active sensors") {
    auto g = grid(8);
    ForwardProblem fwd(g, sensor_grid(3, 3));
    GaussianPrior prior(g, PriorParams{});
    const auto lin = fwd.linearize(oracle::smooth_field(*g));
    Design xi(9, 0);
    xi[0] = xi[4] = xi[7] = 1;
    const MaskedPrecision P(0.01 * Matrix::Identity(9, 9), xi);
    const Matrix S = oracle::symmetric_preconditioned_hessian(
        prior, oracle::dense_hessian_form(*lin, P.matrix()));
    const Vector lambda = oracle::descending_eigenvalues(S);
    CHECK(lambda[3] <= 1e-10 * lambda[0]);
    CHECK(lambda[2] > 1e-6 * lambda[0]);
  }

  TEST_CASE("solve counter") {
    auto g = grid(4);
    ForwardProblem fwd(g, {{0.5, 0.5}});
    SolveCounter c;
    const auto lin = fwd.linearize(Field::Zero(g->num_nodes()), &c);
    CHECK(c.forward_solves == 1);
    lin->gn_hessian_form_apply(Matrix::Identity(1, 1), Field::Ones(g->num_nodes()), &c);
    CHECK(c.forward_solves == 3);
    CHECK(c.hessian_applies == 1);
  }
}
