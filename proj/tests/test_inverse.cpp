#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "roed/errors.hpp"
#include "roed/inverse.hpp"
#include "roed/problem.hpp"

using namespace roed;

namespace {

struct Setup {
  std::shared_ptr<const fem::Grid> grid;
  GaussianPrior prior;
  ForwardProblem forward;
  explicit Setup(int n, std::vector<Eigen::Vector2d> sensors)
      : grid(std::make_shared<fem::Grid>(n, n)),
        prior(grid, PriorParams{}),
        forward(grid, std::move(sensors)) {}
};

NoiseModel isotropic(int nd, double sigma) {
  Box b{Vector::Constant(1, sigma), Vector::Constant(1, sigma)};
  return NoiseModel::isotropic(nd, b);
}

}  // namespace

TEST_SUITE("inverse") {
  TEST_CASE("synthetic data") {
    Setup s(6, sensor_grid(2, 2));
    const NoiseModel tiny = isotropic(4, 1e-8);
    const Vector tb = Vector::Constant(1, 1e-8);
    const SyntheticDataset ds = synthesize_data(s.prior, s.forward, tiny, tb, 5, 99);
    for (int i = 0; i < ds.size(); ++i) {
      CHECK((ds.data[i] - s.forward.parameter_to_observable(ds.parameters[i]))
                .cwiseAbs()
                .maxCoeff() <= 1e-6);
    }
    const SyntheticDataset again = synthesize_data(s.prior, s.forward, tiny, tb, 5, 99, 3);
    for (int i = 0; i < ds.size(); ++i) CHECK((ds.data[i] - again.data[i]).norm() == 0.0);
  }

  TEST_CASE("synthetic noise covariance") {
    Setup s(4, {{0.5, 0.25}, {0.5, 0.75}});
    const NoiseModel m = NoiseModel::two_sensor(
        Box{(Vector(3) << 0.05, 0.05, 0.0).finished(), (Vector(3) << 0.15, 0.15, 0.99).finished()});
    const Vector tb = (Vector(3) << 0.1, 0.06, 0.5).finished();
    const SyntheticDataset ds = synthesize_data(s.prior, s.forward, m, tb, 500, 5);
    Matrix C = Matrix::Zero(2, 2);
    for (const Vector& e : ds.noise) C += e * e.transpose();
    C /= 500.0;
    const Matrix G = m.covariance(tb);
    CHECK(std::abs(C(0, 0) - G(0, 0)) <= 0.25 * G(0, 0));
    CHECK(std::abs(C(1, 1) - G(1, 1)) <= 0.25 * G(1, 1));

    const Vector tb2 = (Vector(3) << 0.14, 0.14, 0.0).finished();
    const SyntheticDataset re = recolor_noise(ds, m, tb2);
    for (int i = 0; i < 3; ++i) {
      CHECK((re.data[i] - re.noise[i] - (ds.data[i] - ds.noise[i])).norm() <= 1e-14);
      CHECK((re.standard_normals[i] - ds.standard_normals[i]).norm() == 0.0);
    }
  }

  TEST_CASE("MAP objective gradient") {
    Setup s(8, sensor_grid(3, 3));
    const int n = s.grid->num_nodes();
    const MaskedPrecision P(0.01 * Matrix::Identity(9, 9), Design(9, 1));
    const Field m_pr = s.prior.mean();

    // Noiseless self-consistent data at the prior mean: stationary.
    const Vector y0 = s.forward.parameter_to_observable(m_pr);
    CHECK(gradient_map_objective(s.forward, s.prior, m_pr, y0, P).norm() <= 1e-10);

    std::mt19937_64 rng(21);
    const Field m = s.prior.sample(3);
    const Vector y = s.forward.parameter_to_observable(s.prior.sample(4)) +
                     oracle::random_vector(9, rng, 0.1);
    MapObjective obj(s.forward, s.prior, P.matrix(), y);
    const auto lin = s.forward.linearize(m);
    const Vector dual = obj.gradient_parts(*lin).dual();
    const double h = 1e-5;
    for (int t = 0; t < 10; ++t) {
      const Field dir = s.prior.apply_sqrt_cov(oracle::random_vector(n, rng));
      const double fd = (obj.evaluate(Field(m + h * dir)).value() -
                         obj.evaluate(Field(m - h * dir)).value()) /
                        (2 * h);
      CHECK(oracle::rel_err(fd, dual.dot(dir)) <= 1e-5);
    }

    MapObjective doubled(s.forward, s.prior, P.matrix(), y, 2.0);
    const auto a = obj.gradient_parts(*lin);
    const auto b = doubled.gradient_parts(*lin);
    CHECK((b.prior - 2.0 * a.prior).norm() <= 1e-12 * a.prior.norm());
    CHECK((b.misfit - a.misfit).norm() == 0.0);
  }

  TEST_CASE("MAP solver") {
    Setup s(8, sensor_grid(3, 3));
    const int n = s.grid->num_nodes();
    const MaskedPrecision P(1e-4 * Matrix::Identity(9, 9), Design(9, 1));

    const Vector y0 = s.forward.parameter_to_observable(s.prior.mean());
    const MapResult at_mean = solve_map(s.forward, s.prior, P, y0, s.prior.mean());
    CHECK(at_mean.converged);
    CHECK((at_mean.m_post - s.prior.mean()).norm() <= 1e-8);

    const Field m_true = s.prior.sample(17);
    const Vector y = s.forward.parameter_to_observable(m_true);
    const MapResult r = solve_map(s.forward, s.prior, P, y, s.prior.mean());
    MapObjective obj(s.forward, s.prior, P.matrix(), y);
    CHECK(r.objective <= obj.evaluate(m_true).value());
    CHECK(r.objective <= obj.evaluate(s.prior.mean()).value());
    CHECK((r.converged || r.iterations == MapOptions{}.max_iterations || r.line_search_failed));
    if (r.converged) CHECK(r.gradient_norm <= 1e-8 * std::max(1.0, r.initial_gradient_norm));

    // Misfit at the MAP never exceeds the misfit at the prior mean.
    const MaskedPrecision Pn(0.01 * Matrix::Identity(9, 9), Design(9, 1));
    std::mt19937_64 rng(2);
    for (int k = 0; k < 10; ++k) {
      const Vector yk = s.forward.parameter_to_observable(s.prior.sample(100 + k)) +
                        oracle::random_vector(9, rng, 0.1);
      MapObjective ok(s.forward, s.prior, Pn.matrix(), yk);
      const MapResult rk = solve_map(ok, s.prior.mean());
      CHECK(ok.evaluate(rk.m_post).misfit <= ok.evaluate(s.prior.mean()).misfit);

      // Laplace approximation: the Hessian at the MAP is positive definite.
      const auto lin = s.forward.linearize(rk.m_post);
      const Field v = oracle::random_vector(n, rng);
      CHECK(v.dot(ok.hessian_apply(*lin, v)) > 0.0);
    }
  }

  TEST_CASE("fixed MAP cache round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "roed_test_cache";
    std::filesystem::remove_all(dir);
    std::mt19937_64 rng(6);
    std::vector<Field> maps = {oracle::random_vector(25, rng), oracle::random_vector(25, rng)};
    save_fixed_maps(dir / "maps.json", "key-1", maps);
    const auto back = load_fixed_maps(dir / "maps.json", "key-1", 25);
    REQUIRE(back);
    for (std::size_t i = 0; i < maps.size(); ++i) {
      CHECK(((*back)[i] - maps[i]).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_FALSE(load_fixed_maps(dir / "maps.json", "key-2", 25));
    CHECK_FALSE(load_fixed_maps(dir / "maps.json", "key-1", 24));
    CHECK_FALSE(load_fixed_maps(dir / "missing.json", "key-1", 25));
    std::filesystem::remove_all(dir);
  }
}
