#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "otcr/error.hpp"
#include "otcr/isp.hpp"
#include "otcr/rng.hpp"
#include "test_util.hpp"

using namespace otcr;
using otcr::testing::max_abs_diff;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

double orthonormality_error(const Matrix& u) {
  return max_abs_diff(matmul_tn(u, u), Matrix::identity(u.cols()));
}

// Gram-Schmidt on a Gaussian d x k matrix.
Matrix random_orthonormal(SeededRng& rng, std::size_t d, std::size_t k) {
  Eigen::MatrixXd g = to_eigen(rng.gaussian(d, k));
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    for (Eigen::Index p = 0; p < j; ++p) g.col(j) -= g.col(p).dot(g.col(j)) * g.col(p);
    g.col(j).normalize();
  }
  return from_eigen(g);
}

}  // namespace

TEST_CASE("projector rank rounds half up and never hits zero") {
  CHECK(projector_rank(5, 0.4) == 2);
  CHECK(projector_rank(5, 0.5) == 3);
  CHECK(projector_rank(4, 0.125) == 1);
  CHECK(projector_rank(3, 0.01) == 1);
  CHECK(projector_rank(7, 1.0) == 7);
  CHECK_THROWS_AS(projector_rank(4, 0.0), ConfigError);
  CHECK_THROWS_AS(projector_rank(4, 1.5), ConfigError);
}

TEST_CASE("points on a line project onto the diagonal") {
  Matrix r{{1, 1}, {-2, -2}, {0.5, 0.5}, {3, 3}};
  Projector p = fit_projector(r, 0.5);
  REQUIRE(p.output_dim() == 1);
  CHECK(std::abs(std::abs(p.basis(0, 0)) - 1 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(p.basis(0, 0) - p.basis(1, 0)) < 1e-12);
  CHECK(p.residual < 1e-12);
  CHECK_FALSE(p.rank_deficient);
}

TEST_CASE("full ratio is an isometry") {
  SeededRng rng(3);
  Matrix r = rng.gaussian(20, 6);
  Projector p = fit_projector(r, 1.0);
  CHECK(p.output_dim() == 6);
  CHECK(p.residual <= 1e-8);
  CHECK(orthonormality_error(p.basis) < 1e-8);
  CHECK(max_abs_diff(matmul_nt(p.basis, p.basis), Matrix::identity(6)) < 1e-8);
  Matrix a = rng.gaussian(7, 6), b = rng.gaussian(9, 6);
  CHECK(max_abs_diff(pairwise_sq_dist(project(a, p), project(b, p)), pairwise_sq_dist(a, b)) < 1e-8);
}

TEST_CASE("residual equals the discarded spectrum of a full SVD") {
  SeededRng rng(11);
  Matrix r = rng.gaussian(50, 5);
  Projector p = fit_projector(r, 0.4);
  REQUIRE(p.output_dim() == 2);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(r), Eigen::ComputeThinV);
  auto s = svd.singularValues();
  CHECK(std::abs(p.residual - (s(2) * s(2) + s(3) * s(3) + s(4) * s(4))) < 1e-8);
  CHECK(std::abs(p.residual - reconstruction_residual(r, p.basis)) < 1e-8);
  // Same span as the oracle's leading right vectors.
  Matrix vk = from_eigen(svd.matrixV().leftCols(2));
  CHECK(max_abs_diff(matmul_nt(vk, vk), matmul_nt(p.basis, p.basis)) < 1e-8);
  CHECK(orthonormality_error(p.basis) < 1e-8);
}

TEST_CASE("canonical basis projector truncates coordinates") {
  Projector p;
  p.basis = Matrix{{1, 0}, {0, 1}, {0, 0}};
  Matrix r{{1, 2, 3}, {4, 5, 6}};
  CHECK(project(r, p) == Matrix{{1, 2}, {4, 5}});
  CHECK_THROWS_AS(project(Matrix(2, 4), p), DimensionError);
}

TEST_CASE("rank-deficient data completes the basis") {
  Matrix r{{1, 0, 0, 0}, {2, 0, 0, 0}, {-1, 0, 0, 0}};
  Projector p = fit_projector(r, 0.75);
  CHECK(p.output_dim() == 3);
  CHECK(p.rank_deficient);
  CHECK(p.residual == 0.0);
  CHECK(orthonormality_error(p.basis) < 1e-8);
  CHECK(std::abs(std::abs(p.basis(0, 0)) - 1.0) < 1e-12);

  // Fewer rows than k.
  SeededRng rng(2);
  Matrix wide = rng.gaussian(2, 6);
  Projector q = fit_projector(wide, 0.5);
  CHECK(q.output_dim() == 3);
  CHECK(q.rank_deficient);
  CHECK(q.residual < 1e-10);
  CHECK(orthonormality_error(q.basis) < 1e-8);
}

TEST_CASE("fitted residual beats random orthonormal candidates") {
  SeededRng rng(29);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t n = 30 + 10 * inst, d = 4 + inst;
    Matrix r = rng.gaussian(n, d);
    Projector p = fit_projector(r, 0.5);
    for (int c = 0; c < 200; ++c) {
      Matrix u = random_orthonormal(rng, d, p.output_dim());
      CHECK(p.residual <= reconstruction_residual(r, u) + 1e-10);
    }
  }
}

TEST_CASE("residual depends only on the span") {
  SeededRng rng(5);
  Matrix r = rng.gaussian(40, 6);
  Projector p = fit_projector(r, 0.5);
  for (int t = 0; t < 10; ++t) {
    Matrix q = random_orthonormal(rng, 3, 3);
    CHECK(std::abs(reconstruction_residual(r, matmul(p.basis, q)) - p.residual) < 1e-8);
  }
}

TEST_CASE("residual is non-increasing in k") {
  SeededRng rng(8);
  Matrix r = rng.gaussian(25, 8);
  double prev = INFINITY;
  for (std::size_t k = 1; k <= 8; ++k) {
    Projector p = fit_projector(r, static_cast<double>(k) / 8.0);
    CHECK(p.output_dim() == k);
    CHECK(p.residual <= prev + 1e-12);
    prev = p.residual;
  }
}

TEST_CASE("projection contracts pairwise distances") {
  SeededRng rng(17);
  for (int t = 0; t < 20; ++t) {
    Matrix a = rng.gaussian(12, 7), b = rng.gaussian(9, 7);
    Matrix both(21, 7);
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 7; ++j) both(i, j) = a(i, j);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 7; ++j) both(12 + i, j) = b(i, j);
    Projector p = fit_projector(both, 0.3 + 0.1 * (t % 5));
    Matrix full = pairwise_sq_dist(a, b);
    Matrix proj = pairwise_sq_dist(project(a, p), project(b, p));
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 9; ++j) CHECK(proj(i, j) <= full(i, j) + 1e-9);
  }
}

TEST_CASE("centered mode fits principal directions of the shifted cloud") {
  SeededRng rng(41);
  Matrix r = rng.gaussian(60, 3);
  for (std::size_t i = 0; i < r.rows(); ++i) {
    r(i, 0) *= 5.0;
    r(i, 2) += 100.0;
  }
  Projector unc = fit_projector(r, 0.34);
  Projector cen = fit_projector(r, 0.34, true);
  CHECK(std::abs(unc.basis(2, 0)) > 0.9);
  CHECK(std::abs(cen.basis(0, 0)) > 0.9);
  CHECK(cen.center.size() == 3);
}

TEST_CASE("empty input rejected") {
  CHECK_THROWS_AS(fit_projector(Matrix(0, 3), 0.5), DimensionError);
}
