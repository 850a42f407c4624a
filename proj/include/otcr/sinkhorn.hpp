#pragma once

#include <cstddef>
#include <span>

#include "otcr/matrix.hpp"
#include "otcr/transport.hpp"

namespace otcr {

struct SinkhornConfig {
  double epsilon = 0.0;          // entropic strength, cost units
  std::size_t max_iters = 1000;  // full u/v sweeps
  double convergence_tol = 1e-6; // L1 row-marginal violation

  // epsilon = 0.1 * mean(D), 1000 sweeps, tol 1e-6.
  static SinkhornConfig defaults_for(const Matrix& cost);
  void validate() const;
};

// Below this fraction of mean(D), epsilon switches the solver to
// log-domain updates.
inline constexpr double kLogDomainThreshold = 0.05;

// Entropy-regularised transport plan diag(u) exp(-D/eps) diag(v) by
// alternating scaling. Column marginals are exact after each sweep; the
// returned plan's row marginals match `a` to `convergence_tol` when
// `converged` is set. Hitting `max_iters` is reported through `converged`,
// not thrown. Throws NumericalError if a scaling vector stops being finite.
TransportPlan sinkhorn(const Matrix& cost, std::span<const double> a, std::span<const double> b,
                       const SinkhornConfig& cfg);

}  // namespace otcr
