#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "otcr/error.hpp"
#include "otcr/ot_exact.hpp"
#include "otcr/rng.hpp"
#include "test_util.hpp"

using namespace otcr;
using otcr::testing::random_simplex;
using otcr::testing::uniform_mass;

namespace {

std::size_t nonzeros(const Matrix& p) {
  return static_cast<std::size_t>(
      std::count_if(p.values().begin(), p.values().end(), [](double v) { return v > 1e-14; }));
}

}  // namespace

TEST_CASE("zero-cost matching is found") {
  Matrix d{{0.0, 1.0}, {1.0, 0.0}};
  auto r = solve_exact_ot(d, uniform_mass(2), uniform_mass(2));
  CHECK(r.cost == 0.0);
  CHECK(r.plan(0, 0) == doctest::Approx(0.5));
  CHECK(r.plan(1, 1) == doctest::Approx(0.5));
  CHECK(r.plan(0, 1) == 0.0);
}

TEST_CASE("single source has a forced plan") {
  Matrix d{{2.0, 4.0}};
  std::vector<double> a{1.0};
  auto r = solve_exact_ot(d, a, uniform_mass(2));
  CHECK(r.plan(0, 0) == doctest::Approx(0.5));
  CHECK(r.plan(0, 1) == doctest::Approx(0.5));
  CHECK(r.cost == doctest::Approx(3.0));
}

TEST_CASE("brute force assignment trivial cases") {
  auto r = brute_force_assignment(Matrix{{0.0, 9.0}, {9.0, 0.0}});
  CHECK(r.perm == std::vector<std::size_t>{0, 1});
  CHECK(r.cost == 0.0);
  auto s = brute_force_assignment(Matrix{{5.0}});
  CHECK(s.perm == std::vector<std::size_t>{0});
  CHECK(s.cost == 5.0);
  CHECK_THROWS_AS(brute_force_assignment(Matrix(9, 9)), OracleLimitError);
}

TEST_CASE("brute force breaks ties lexicographically") {
  auto r = brute_force_assignment(Matrix(3, 3, 1.0));
  CHECK(r.perm == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("uniform square instances match the permutation oracle") {
  SeededRng rng(2024);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.below(6);
    Matrix d = rng.uniform_matrix(n, n);
    auto lp = solve_exact_ot(d, uniform_mass(n), uniform_mass(n));
    auto bf = brute_force_assignment(d);
    CHECK(std::abs(lp.cost - bf.cost / static_cast<double>(n)) <= 1e-8);
    CHECK(max_marginal_violation(lp.plan, uniform_mass(n), uniform_mass(n)) <= 1e-6);
    CHECK(nonzeros(lp.plan) <= 2 * n - 1);
  }
}

TEST_CASE("5x5 instance equals the best scaled permutation") {
  SeededRng rng(5);
  Matrix d = rng.uniform_matrix(5, 5, 0.0, 10.0);
  auto lp = solve_exact_ot(d, uniform_mass(5), uniform_mass(5));
  CHECK(lp.cost == doctest::Approx(brute_force_assignment(d).cost / 5.0).epsilon(1e-12));
}

TEST_CASE("general marginals: feasible, basic, and no worse than random feasible plans") {
  SeededRng rng(77);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.below(7), m = 1 + rng.below(7);
    Matrix d = rng.uniform_matrix(n, m);
    auto a = random_simplex(rng, n);
    auto b = random_simplex(rng, m);
    auto lp = solve_exact_ot(d, a, b);
    CHECK(max_marginal_violation(lp.plan, a, b) <= 1e-6);
    CHECK(nonzeros(lp.plan) <= n + m - 1);
    CHECK(std::abs(lp.cost - frobenius_dot(d, lp.plan)) <= 1e-8);
    // The independent product plan a b^T is feasible; the optimum cannot exceed it.
    double product = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) product += d(i, j) * a[i] * b[j];
    CHECK(lp.cost <= product + 1e-12);
  }
}

TEST_CASE("adding a constant shifts the optimum by that constant") {
  SeededRng rng(8);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + rng.below(5), m = 2 + rng.below(5);
    Matrix d = rng.uniform_matrix(n, m);
    auto a = random_simplex(rng, n);
    auto b = random_simplex(rng, m);
    const double c = rng.uniform(-3.0, 3.0);
    Matrix shifted = d;
    for (double& v : shifted.values()) v += c;
    auto base = solve_exact_ot(d, a, b);
    auto moved = solve_exact_ot(shifted, a, b);
    CHECK(std::abs(moved.cost - base.cost - c) <= 1e-8);
    // The original optimal plan is still optimal for the shifted costs.
    CHECK(std::abs(frobenius_dot(shifted, base.plan) - moved.cost) <= 1e-8);
  }
}

TEST_CASE("mismatched masses are rejected") {
  std::vector<double> a{0.5, 0.5};
  std::vector<double> b{0.6, 0.5};
  CHECK_THROWS_AS(solve_exact_ot(Matrix(2, 2), a, b), InfeasibleMarginals);
  CHECK_THROWS_AS(solve_exact_ot(Matrix(2, 3), a, a), DimensionError);
}

TEST_CASE("negligible masses are dropped") {
  Matrix d{{1.0, 0.0, 5.0}, {0.0, 1.0, 5.0}};
  std::vector<double> a{0.5, 0.5};
  std::vector<double> b{0.5, 0.5, 1e-14};
  auto r = solve_exact_ot(d, a, b);
  CHECK(r.cost == doctest::Approx(0.0));
  CHECK(r.plan(0, 2) == 0.0);
  CHECK(r.plan(1, 2) == 0.0);
}

TEST_CASE("large uniform instance stays feasible") {
  SeededRng rng(1);
  Matrix x = rng.gaussian(200, 4), y = rng.gaussian(150, 4);
  Matrix d = pairwise_sq_dist(x, y);
  auto lp = solve_exact_ot(d, uniform_mass(200), uniform_mass(150));
  CHECK(max_marginal_violation(lp.plan, uniform_mass(200), uniform_mass(150)) <= 1e-9);
  CHECK(nonzeros(lp.plan) <= 349);
}
