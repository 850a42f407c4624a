#pragma once

#include <cstddef>
#include <vector>

#include "otcr/matrix.hpp"

namespace otcr {

// Orthonormal d x k projector onto the leading right-singular subspace of a
// representation matrix.
struct Projector {
  Matrix basis;          // U, d x k, orthonormal columns
  double ratio = 1.0;    // requested k / d
  double residual = 0.0; // ||R - R U U^T||_F^2 on the fitting data
  bool rank_deficient = false;  // columns beyond rank(R) were completed arbitrarily
  bool centered = false;
  std::vector<double> center;   // column means subtracted before fitting (centered mode)

  std::size_t input_dim() const noexcept { return basis.rows(); }
  std::size_t output_dim() const noexcept { return basis.cols(); }
};

// k = max(1, round_half_up(ratio * d)). Throws ConfigError unless 0 < ratio <= 1.
std::size_t projector_rank(std::size_t d, double ratio);

// Minimise ||R - R U U^T||_F^2 over orthonormal U (d x k) by truncated SVD
// of R itself (uncentered). With `centered`, the column means are removed
// first (classic PCA); the residual then refers to the centered data.
Projector fit_projector(const Matrix& r, double ratio, bool centered = false);

// R U. Throws DimensionError when R's width does not match the projector.
// Centering (if any) only affects how U was fitted, not the projection:
// distances are translation invariant.
Matrix project(const Matrix& r, const Projector& proj);

// ||R - R U U^T||_F^2 for an arbitrary orthonormal U.
double reconstruction_residual(const Matrix& r, const Matrix& basis);

}  // namespace otcr
