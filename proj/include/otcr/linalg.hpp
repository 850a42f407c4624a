#pragma once

#include <cstddef>
#include <vector>

#include "otcr/matrix.hpp"

namespace otcr {

struct SvdResult {
  Matrix u;                  // n x r, orthonormal columns
  std::vector<double> s;     // r singular values, non-increasing
  Matrix v;                  // d x r, orthonormal columns
  std::size_t sweeps = 0;    // Jacobi sweeps used
};

// Thin SVD, r = min(n, d), by one-sided (Hestenes) Jacobi rotations.
// Left singular vectors belonging to (numerically) zero singular values are
// completed to an orthonormal set. Throws ConvergenceError past `max_sweeps`.
SvdResult svd_thin(const Matrix& a, std::size_t max_sweeps = 100);

// Extend the orthonormal columns of `q` (n x k, k <= target <= n) to
// `target` orthonormal columns by Gram-Schmidt against the canonical basis.
Matrix complete_orthonormal(const Matrix& q, std::size_t target);

}  // namespace otcr
