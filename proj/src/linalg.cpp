#include "otcr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otcr/error.hpp"

namespace otcr {

namespace {

using Column = std::vector<double>;

double dot(const Column& x, const Column& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

// Jacobi on the columns of a tall (n >= d) matrix.
SvdResult svd_tall(const Matrix& a, std::size_t max_sweeps) {
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<Column> w(d, Column(n));
  std::vector<Column> v(d, Column(d, 0.0));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) w[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  constexpr double tol = 1e-15;
  double frob2 = 0.0;
  for (const auto& col : w) frob2 += dot(col, col);
  // Columns below this squared norm are numerically zero; rotating them only
  // shuffles rounding noise.
  const double negligible = frob2 * 1e-30;
  std::size_t sweep = 0;
  bool rotated = true;
  while (rotated) {
    if (sweep == max_sweeps) throw ConvergenceError("svd_thin: Jacobi sweeps exhausted", sweep);
    ++sweep;
    rotated = false;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double alpha = dot(w[p], w[p]);
        const double beta = dot(w[q], w[q]);
        const double gamma = dot(w[p], w[q]);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        if (alpha <= negligible || beta <= negligible) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = w[p][i], y = w[q][i];
          w[p][i] = c * x - s * y;
          w[q][i] = s * x + c * y;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double x = v[p][i], y = v[q][i];
          v[p][i] = c * x - s * y;
          v[q][i] = s * x + c * y;
        }
      }
    }
  }

  std::vector<double> norms(d);
  for (std::size_t j = 0; j < d; ++j) norms[j] = std::sqrt(dot(w[j], w[j]));
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  const double smax = d == 0 ? 0.0 : norms[order[0]];
  const double zero_tol =
      static_cast<double>(std::max(n, d)) * std::numeric_limits<double>::epsilon() * smax;

  SvdResult out;
  out.sweeps = sweep;
  out.s.resize(d);
  out.v = Matrix(d, d);
  std::size_t rank = 0;
  for (std::size_t r = 0; r < d; ++r) {
    const std::size_t j = order[r];
    out.s[r] = norms[j];
    for (std::size_t i = 0; i < d; ++i) out.v(i, r) = v[j][i];
    if (norms[j] > zero_tol && norms[j] > 0.0) ++rank;
  }
  Matrix u(n, rank);
  for (std::size_t r = 0; r < rank; ++r) {
    const std::size_t j = order[r];
    for (std::size_t i = 0; i < n; ++i) u(i, r) = w[j][i] / norms[j];
  }
  out.u = complete_orthonormal(u, d);
  return out;
}

}  // namespace

Matrix complete_orthonormal(const Matrix& q, std::size_t target) {
  const std::size_t n = q.rows();
  if (target > n || q.cols() > target) {
    throw DimensionError("complete_orthonormal: cannot reach " + std::to_string(target) +
                         " columns in dimension " + std::to_string(n));
  }
  std::vector<Column> basis;
  basis.reserve(target);
  for (std::size_t c = 0; c < q.cols(); ++c) {
    Column col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = q(i, c);
    basis.push_back(std::move(col));
  }
  while (basis.size() < target) {
    // Pick the canonical vector with the largest residual after projection.
    Column best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < n; ++e) {
      Column cand(n, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) {
          const double proj = dot(b, cand);
          for (std::size_t i = 0; i < n; ++i) cand[i] -= proj * b[i];
        }
      }
      const double nrm = std::sqrt(dot(cand, cand));
      if (nrm > best_norm) {
        best_norm = nrm;
        best = std::move(cand);
      }
    }
    for (double& x : best) x /= best_norm;
    basis.push_back(std::move(best));
  }
  Matrix out(n, target);
  for (std::size_t c = 0; c < target; ++c)
    for (std::size_t i = 0; i < n; ++i) out(i, c) = basis[c][i];
  return out;
}

SvdResult svd_thin(const Matrix& a, std::size_t max_sweeps) {
  a.require_finite("svd_thin");
  if (a.rows() >= a.cols()) return svd_tall(a, max_sweeps);
  SvdResult t = svd_tall(a.transpose(), max_sweeps);
  std::swap(t.u, t.v);
  return t;
}

}  // namespace otcr
