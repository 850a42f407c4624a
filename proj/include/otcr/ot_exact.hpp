#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "otcr/matrix.hpp"
#include "otcr/transport.hpp"

namespace otcr {

// Exact solution of min <D, P> over P >= 0 with P 1 = a and P^T 1 = b.
//
// Network simplex on the bipartite transportation graph: sources are the
// rows, sinks the columns, and an artificial root carries the initial
// strongly feasible spanning tree. The result is a vertex of the transport
// polytope, so at most n + m - 1 entries are nonzero.
//
// Entries of a or b below 1e-12 are dropped (their row/column of the plan is
// zero) and the remaining masses renormalised. Throws InfeasibleMarginals if
// the total masses differ by more than 1e-6 and DimensionError on shape
// mismatch.
TransportPlan solve_exact_ot(const Matrix& cost, std::span<const double> a,
                             std::span<const double> b);

struct Assignment {
  std::vector<std::size_t> perm;  // row i is matched to column perm[i]
  double cost = 0.0;
};

// Exhaustive search over all n! permutations; the lexicographically smallest
// minimiser wins ties. Test oracle only, refuses n > 8.
Assignment brute_force_assignment(const Matrix& cost);

}  // namespace otcr
