#pragma once

#include <cstddef>
#include <vector>

#include "otcr/matrix.hpp"
#include "otcr/transport.hpp"

namespace otcr {

// Fused Gromov-Wasserstein problem between a source cloud (n units) and a
// target cloud (m units):
//
//   min_P  kappa * <D, P> + (1 - kappa) * sum_{i,j,k,l} (C0[i][k] - C1[j][l])^2 P[i][j] P[k][l]
//
// over couplings P with marginals (a, b).
struct FgwProblem {
  Matrix cost;  // D, n x m cross-cloud cost
  Matrix c0;    // n x n within-source cost, symmetric, zero diagonal
  Matrix c1;    // m x m within-target cost, symmetric, zero diagonal
  std::vector<double> a;
  std::vector<double> b;
  double kappa = 0.5;

  // Throws DimensionError / InfeasibleMarginals / ConfigError on a broken
  // invariant.
  void validate() const;
};

struct FgwOptions {
  std::size_t max_iters = 100;
  double tol = 1e-7;  // relative objective drop
};

struct FgwResult {
  TransportPlan plan;
  double objective = 0.0;
  std::vector<double> objective_trace;  // objective at the start and after each step
  std::size_t lmo_calls = 0;
  bool converged = false;
};

// Quartic contraction by direct summation, O(n^2 m^2). Test oracle; refuses
// n*m > 10^4.
double gw_cost_naive(const Matrix& c0, const Matrix& c1, const Matrix& plan);

// Same quantity through the squared-loss decomposition, O(n^2 m + n m^2).
// Exact for any nonnegative or signed `plan`, feasible or not.
double gw_cost(const Matrix& c0, const Matrix& c1, const Matrix& plan);

// Gradient of gw_cost with respect to `plan`.
Matrix gw_grad(const Matrix& c0, const Matrix& c1, const Matrix& plan);

// Objective of `prob` at `plan`. Throws InfeasibleMarginals when the plan's
// marginals are off by more than 1e-6.
double fgw_cost(const FgwProblem& prob, const Matrix& plan);

// Frank-Wolfe from the product coupling a b^T. Each step solves an exact
// linear transport problem on the current gradient and takes the exact
// minimiser of the quadratic objective along the segment. Stops when the
// relative drop falls below `opts.tol` or after `opts.max_iters` steps
// (reported via `converged`).
FgwResult fgw_solve(const FgwProblem& prob, const FgwOptions& opts = {});

}  // namespace otcr
