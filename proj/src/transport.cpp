#include "otcr/transport.hpp"

#include <algorithm>
#include <cmath>

#include "otcr/error.hpp"

namespace otcr {

MassVector::MassVector(std::vector<double> values) : values_(std::move(values)) {
  double total = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) throw InfeasibleMarginals("MassVector: negative or non-finite mass");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InfeasibleMarginals("MassVector: total mass " + std::to_string(total) + " != 1");
  }
}

MassVector MassVector::uniform(std::size_t n) {
  if (n == 0) throw InfeasibleMarginals("MassVector: empty support");
  return MassVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

std::string_view to_string(TransportMethod m) {
  switch (m) {
    case TransportMethod::ExactLp: return "exact-lp";
    case TransportMethod::Sinkhorn: return "sinkhorn";
    case TransportMethod::FrankWolfe: return "frank-wolfe";
  }
  return "unknown";
}

double max_marginal_violation(const Matrix& plan, std::span<const double> a,
                              std::span<const double> b) {
  if (plan.rows() != a.size() || plan.cols() != b.size()) {
    throw DimensionError("max_marginal_violation: plan shape does not match marginals");
  }
  double worst = 0.0;
  auto r = row_sums(plan);
  auto c = col_sums(plan);
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(r[i] - a[i]));
  for (std::size_t j = 0; j < b.size(); ++j) worst = std::max(worst, std::abs(c[j] - b[j]));
  return worst;
}

}  // namespace otcr
