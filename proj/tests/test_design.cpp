#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "roed/design.hpp"
#include "roed/errors.hpp"

using namespace roed;

namespace {

double binomial(int n, int k) {
  return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)));
}

Vector random_policy(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Vector p(n);
  for (int i = 0; i < n; ++i) p[i] = u(rng);
  return p;
}

}  // namespace

TEST_SUITE("design") {
  TEST_CASE("elementary symmetric polynomial") {
    const Vector w = (Vector(3) << 0.25, 1.0, 4.0).finished();
    CHECK(r_poly(0, w) == 1.0);
    CHECK(r_poly(2, w) == doctest::Approx(5.25).epsilon(1e-15));
    CHECK(r_poly(4, w) == 0.0);
    CHECK_THROWS_AS(r_poly(-1, w), InvalidArgument);
    for (int n : {1, 5, 12}) {
      for (int k = 0; k <= n; ++k) CHECK(r_poly(k, Vector::Ones(n)) == binomial(n, k));
    }
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 10.0);
    for (int n : {4, 9, 15}) {
      Vector v(n);
      for (int i = 0; i < n; ++i) v[i] = u(rng);
      for (int k = 0; k <= n; ++k) CHECK(oracle::rel_err(r_poly(k, v), oracle::brute_r(k, v)) <= 1e-12);
    }
  }

  TEST_CASE("probability mass function") {
    ConditionalBernoulli sym(Vector::Constant(3, 0.5), 2);
    for (const Design& d : oracle::all_designs(3, 2)) CHECK(sym.pmf(d) == doctest::Approx(1.0 / 3.0));
    CHECK(sym.pmf({1, 0, 0}) == 0.0);
    CHECK(sym.pmf({1, 1, 1}) == 0.0);
    CHECK(sym.log_pmf({0, 0, 1}) == -std::numeric_limits<double>::infinity());

    ConditionalBernoulli d((Vector(3) << 0.2, 0.5, 0.8).finished(), 2);
    CHECK(d.pmf({1, 1, 0}) == doctest::Approx(1.0 / 21.0).epsilon(1e-13));
    CHECK(d.pmf({1, 0, 1}) == doctest::Approx(4.0 / 21.0).epsilon(1e-13));
    CHECK(d.pmf({0, 1, 1}) == doctest::Approx(16.0 / 21.0).epsilon(1e-13));
  }

  TEST_CASE("exhaustive normalization with forced entries") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 6; ++trial) {
      const int n = 4 + 2 * trial % 9;
      Vector p = random_policy(n, rng);
      p[0] = 0.0;
      if (n > 5) p[3] = 1.0;
      const int z = 1 + trial % 3 + (n > 5 ? 1 : 0);
      ConditionalBernoulli dist(p, z);
      double total = 0.0;
      int support = 0;
      for (const Design& xi : oracle::all_designs(n, z)) {
        const double v = dist.pmf(xi);
        if (v > 0.0) ++support;
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
      CHECK(support == static_cast<int>(dist.support_size()));
    }
  }

  TEST_CASE("empty supports are rejected") {
    CHECK_THROWS_AS(ConditionalBernoulli((Vector(3) << 1.0, 1.0, 0.5).finished(), 1),
                    EmptyDistribution);
    CHECK_THROWS_AS(ConditionalBernoulli((Vector(3) << 0.0, 0.0, 0.5).finished(), 2),
                    EmptyDistribution);
    CHECK_THROWS_AS(ConditionalBernoulli(Vector::Constant(3, 1.5), 1), InvalidArgument);
    CHECK_THROWS_AS(ConditionalBernoulli(Vector::Constant(3, 0.5), 4), EmptyDistribution);
  }

  TEST_CASE("degenerate policy samples the unique design") {
    const Vector p = (Vector(5) << 1, 0, 1, 0, 0).finished();
    ConditionalBernoulli dist(p, 2);
    for (const Design& xi : dist.sample(9, 50)) CHECK(xi == Design{1, 0, 1, 0, 0});
    CHECK(dist.grad_log_pmf({1, 0, 1, 0, 0}).norm() == 0.0);
    CHECK(dist.pmf({1, 0, 1, 0, 0}) == doctest::Approx(1.0));
  }

  TEST_CASE("sampling matches the exact distribution") {
    std::mt19937_64 rng(2);
    const Vector p = random_policy(6, rng);
    ConditionalBernoulli dist(p, 3);
    const int draws = 20000;
    std::map<Design, int> counts;
    for (const Design& xi : dist.sample(4242, draws)) {
      REQUIRE(active_count(xi) == 3);
      ++counts[xi];
    }
    double chi2 = 0.0;
    const auto designs = oracle::all_designs(6, 3);
    for (const Design& xi : designs) {
      const double expected = draws * dist.pmf(xi);
      const double diff = counts[xi] - expected;
      chi2 += diff * diff / expected;
    }
    CHECK(designs.size() == 20);
    CHECK(oracle::chi_square_sf(chi2, 19) >= 1e-3);

    // Inclusion frequencies within 3 sigma binomial bands.
    const Vector& pi = dist.inclusion_probs();
    for (int i = 0; i < 6; ++i) {
      int hits = 0;
      for (const auto& [xi, c] : counts) hits += xi[i] * c;
      const double sd = std::sqrt(pi[i] * (1.0 - pi[i]) / draws);
      CHECK(std::abs(hits / double(draws) - pi[i]) <= 3.0 * sd);
    }
  }

  TEST_CASE("inclusion probabilities") {
    ConditionalBernoulli uniform(Vector::Constant(8, 0.3), 2);
    for (int i = 0; i < 8; ++i) CHECK(uniform.inclusion_probs()[i] == doctest::Approx(0.25).epsilon(1e-13));

    std::mt19937_64 rng(5);
    Vector p = random_policy(7, rng);
    p[2] = 1.0;
    p[5] = 0.0;
    ConditionalBernoulli dist(p, 3);
    const Vector& pi = dist.inclusion_probs();
    CHECK(std::abs(pi.sum() - 3.0) <= 1e-12);
    CHECK(pi[2] == 1.0);
    CHECK(pi[5] == 0.0);
    // Against enumeration.
    Vector brute = Vector::Zero(7);
    for (const Design& xi : oracle::all_designs(7, 3)) {
      const double v = dist.pmf(xi);
      for (int i = 0; i < 7; ++i) brute[i] += xi[i] * v;
    }
    CHECK((pi - brute).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("score function") {
    std::mt19937_64 rng(8);
    const Vector p = random_policy(6, rng);
    ConditionalBernoulli dist(p, 3);
    const double h = 1e-7;
    for (const Design& xi : oracle::all_designs(6, 3)) {
      const Vector g = dist.grad_log_pmf(xi);
      for (int i = 0; i < 6; ++i) {
        Vector pp = p, pm = p;
        pp[i] += h;
        pm[i] -= h;
        const double fd = (ConditionalBernoulli(pp, 3).log_pmf(xi) -
                           ConditionalBernoulli(pm, 3).log_pmf(xi)) / (2.0 * h);
        CHECK(std::abs(fd - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])));
      }
    }

    ConditionalBernoulli sym(Vector::Constant(6, 0.4), 2);
    for (const Design& xi : oracle::all_designs(6, 2)) CHECK(std::abs(sym.grad_log_pmf(xi).sum()) <= 1e-12);

    Vector forced = Vector::Constant(4, 0.5);
    forced[1] = 1.0;
    ConditionalBernoulli with_one(forced, 2);
    CHECK(with_one.grad_log_pmf({1, 1, 0, 0})[1] == 0.0);
  }

  TEST_CASE("extreme weights stay finite") {
    Vector p(6);
    p << 1e-9, 1.0 - 1e-9, 0.5, 1e-9, 1.0 - 1e-9, 0.3;
    ConditionalBernoulli dist(p, 3);
    double total = 0.0;
    for (const Design& xi : oracle::all_designs(6, 3)) {
      const double v = dist.pmf(xi);
      CHECK(std::isfinite(v));
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(std::abs(dist.inclusion_probs().sum() - 3.0) <= 1e-12);
    for (const Design& xi : dist.sample(1, 100)) CHECK(active_count(xi) == 3);
  }

  TEST_CASE("sampling is deterministic") {
    ConditionalBernoulli dist(Vector::Constant(10, 0.4), 4);
    CHECK(dist.sample(17, 30) == dist.sample(17, 30));
    CHECK(dist.sample(17, 30) != dist.sample(18, 30));
  }
}
