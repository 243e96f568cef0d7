#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "roed/errors.hpp"
#include "roed/fem.hpp"

using namespace roed;
using namespace roed::fem;

namespace {

double max_asymmetry(const SparseMatrix& A) {
  const Matrix D(A);
  return (D - D.transpose()).cwiseAbs().maxCoeff() / D.cwiseAbs().maxCoeff();
}

QuadratureField constant_q(const Grid& g, double c) {
  return QuadratureField::Constant(4 * g.num_cells(), c);
}

Dirichlet harmonic_bc(const Grid& g) {
  Dirichlet bc;
  bc.nodes = g.dirichlet_nodes();
  for (int n : bc.nodes) bc.values.push_back(g.coordinate(n).y() > 0.5 ? 1.0 : 0.0);
  return bc;
}

}  // namespace

TEST_SUITE("fem") {
  TEST_CASE("grid numbering and boundary tags") {
    Grid g(4, 3);
    CHECK(g.num_nodes() == 20);
    CHECK(g.num_cells() == 12);
    int tagged = 0;
    for (int n = 0; n < g.num_nodes(); ++n) {
      const auto p = g.coordinate(n);
      const bool on_boundary = p.x() == 0.0 || p.x() == 1.0 || p.y() == 0.0 || p.y() == 1.0;
      CHECK((g.tag(n) != BoundaryTag::kInterior) == on_boundary);
      if (p.y() == 0.0) CHECK(g.tag(n) == BoundaryTag::kDirichletBottom);
      if (p.y() == 1.0) CHECK(g.tag(n) == BoundaryTag::kDirichletTop);
      if (on_boundary) ++tagged;
    }
    CHECK(tagged == 14);
    CHECK(g.tag(g.node(0, 1)) == BoundaryTag::kNeumannLeft);
    CHECK(g.tag(g.node(4, 2)) == BoundaryTag::kNeumannRight);
    CHECK(g.dirichlet_nodes().size() == 10u);
    CHECK_THROWS_AS(Grid(0, 2), InvalidArgument);
  }

  TEST_CASE("locate uses the lower-left cell on edges") {
    Grid g(4, 4);
    auto loc = g.locate({0.5, 0.25});
    CHECK(loc.ci == 1);
    CHECK(loc.cj == 0);
    CHECK(loc.xi == doctest::Approx(1.0));
    CHECK(loc.eta == doctest::Approx(1.0));
    loc = g.locate({0.0, 0.0});
    CHECK(loc.ci == 0);
    CHECK(loc.xi == doctest::Approx(0.0));
  }

  TEST_CASE("mass matrix") {
    Grid one(1, 1);
    CHECK(Matrix(assemble_mass(one)).sum() == doctest::Approx(1.0).epsilon(1e-15));
    Grid g(2, 2);
    const SparseMatrix M = assemble_mass(g);
    CHECK(max_asymmetry(M) <= 1e-12);
    const Vector c = Vector::Constant(g.num_nodes(), 3.0);
    CHECK(c.dot(M * c) == doctest::Approx(9.0).epsilon(1e-13));
    Grid g7(7, 5);
    CHECK(Matrix(assemble_mass(g7)).sum() == doctest::Approx(1.0).epsilon(1e-13));
    Eigen::LLT<Matrix> llt{Matrix(assemble_mass(g7))};
    CHECK(llt.info() == Eigen::Success);
  }

  TEST_CASE("boundary mass integrates the perimeter") {
    Grid g(5, 3);
    CHECK(Matrix(assemble_boundary_mass(g)).sum() == doctest::Approx(4.0).epsilon(1e-13));
  }

  TEST_CASE("weighted stiffness") {
    Grid g(4, 4);
    const SparseMatrix S1 = assemble_weighted_stiffness(g, constant_q(g, 1.0));
    const SparseMatrix S2 = assemble_weighted_stiffness(g, constant_q(g, 2.0));
    CHECK(max_asymmetry(S1) <= 1e-12);
    CHECK((S1 * Vector::Constant(g.num_nodes(), 1.7)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Matrix(S2) - 2.0 * Matrix(S1)).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::Matrix2d K;
    K << 1.25, 0.75, 0.75, 1.25;
    const SparseMatrix SK = assemble_weighted_stiffness(g, constant_q(g, 1.0), K);
    const Field f = g.interpolate([](double x, double y) { return x + y; });
    CHECK(f.dot(SK * f) == doctest::Approx(4.0).epsilon(1e-10));

    QuadratureField bad = constant_q(g, 1.0);
    bad[5] = 0.0;
    CHECK_THROWS_AS(assemble_weighted_stiffness(g, bad), NonPositiveCoefficient);
  }

  TEST_CASE("linear solves") {
    const int n = 6;
    SparseMatrix I(n, n);
    I.setIdentity();
    Vector e = Vector::Zero(n);
    e[2] = 1.0;
    CHECK((solve(I, e, {}) - e).norm() == doctest::Approx(0.0));

    Grid g(8, 8);
    const SparseMatrix S = assemble_weighted_stiffness(g, constant_q(g, 1.0));
    for (SolverMethod method : {SolverMethod::kDirect, SolverMethod::kConjugateGradient}) {
      const Vector u = solve(S, Vector::Zero(g.num_nodes()), harmonic_bc(g), method);
      for (int k = 0; k < g.num_nodes(); ++k) CHECK(std::abs(u[k] - g.coordinate(k).y()) <= 1e-10);
    }

    std::mt19937_64 rng(3);
    const SparseMatrix A = S + assemble_mass(g);
    const Vector v = oracle::random_vector(g.num_nodes(), rng);
    const Vector back = solve(A, A * v, {});
    CHECK((back - v).norm() <= 1e-8 * v.norm());
    for (int t = 0; t < 5; ++t) {
      const Vector b = oracle::random_vector(g.num_nodes(), rng);
      CHECK(solve(A, b, {}).dot(b) >= 0.0);
    }
  }

  TEST_CASE("constrained solve keeps Dirichlet values and small residual") {
    Grid g(6, 6);
    std::mt19937_64 rng(5);
    const QuadratureField kappa =
        to_quadrature(g, oracle::smooth_field(g)).array().exp().matrix();
    const SparseMatrix K = assemble_weighted_stiffness(g, kappa);
    const Vector rhs = oracle::random_vector(g.num_nodes(), rng);
    const Dirichlet bc = harmonic_bc(g);
    const Vector u = solve(K, rhs, bc);
    std::vector<bool> fixed(g.num_nodes(), false);
    for (std::size_t k = 0; k < bc.nodes.size(); ++k) {
      CHECK(u[bc.nodes[k]] == bc.values[k]);
      fixed[bc.nodes[k]] = true;
    }
    Vector res = K * u - rhs;
    for (int k = 0; k < g.num_nodes(); ++k)
      if (fixed[k]) res[k] = 0.0;
    CHECK(res.norm() <= 1e-10 * rhs.norm());
  }

  TEST_CASE("manufactured solutions") {
    // u = y is reproduced exactly at every level.
    for (int n : {8, 16, 32}) {
      Grid g(n, n);
      const Vector u = solve(assemble_weighted_stiffness(g, constant_q(g, 1.0)),
                             Vector::Zero(g.num_nodes()), harmonic_bc(g));
      double err = 0.0;
      for (int k = 0; k < g.num_nodes(); ++k) err = std::max(err, std::abs(u[k] - g.coordinate(k).y()));
      CHECK(err <= 1e-10);
    }
    // u = y + sin(pi y) cos(pi x) with -lap u = 2 pi^2 sin(pi y) cos(pi x).
    auto exact = [](double x, double y) { return y + std::sin(M_PI * y) * std::cos(M_PI * x); };
    auto source = [](double x, double y) {
      return 2.0 * M_PI * M_PI * std::sin(M_PI * y) * std::cos(M_PI * x);
    };
    std::vector<double> errors;
    for (int n : {8, 16, 32}) {
      Grid g(n, n);
      const SparseMatrix M = assemble_mass(g);
      const Vector u = solve(assemble_weighted_stiffness(g, constant_q(g, 1.0)),
                             M * g.interpolate(source), harmonic_bc(g));
      const Vector e = u - g.interpolate(exact);
      errors.push_back(std::sqrt(e.dot(M * e)));
    }
    const double rate1 = std::log2(errors[0] / errors[1]);
    const double rate2 = std::log2(errors[1] / errors[2]);
    CHECK(errors[1] < errors[0]);
    CHECK(errors[2] < errors[1]);
    CHECK(rate1 >= 1.9);
    CHECK(rate2 >= 1.9);
  }

  TEST_CASE("interpolation and quadrature") {
    Grid g(5, 4);
    const Field f = g.interpolate([](double x, double y) { return 2.0 * x - y + 0.5; });
    CHECK(g.evaluate(f, {0.33, 0.71}) == doctest::Approx(2.0 * 0.33 - 0.71 + 0.5));
    CHECK(fem::integrate(g, to_quadrature(g, f)) == doctest::Approx(1.0));
  }
}
