#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "otcr/matrix.hpp"

namespace otcr {

// Nonnegative weights summing to one.
class MassVector {
 public:
  // Throws InfeasibleMarginals if an entry is negative/non-finite or the
  // total differs from 1 by more than 1e-9.
  explicit MassVector(std::vector<double> values);
  static MassVector uniform(std::size_t n);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  operator std::span<const double>() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

enum class TransportMethod { ExactLp, Sinkhorn, FrankWolfe };

std::string_view to_string(TransportMethod m);

struct TransportPlan {
  Matrix plan;
  double cost = 0.0;  // <D, plan>
  std::size_t iterations = 0;
  TransportMethod method = TransportMethod::ExactLp;
  bool converged = true;
  // L1 violation of the row and column marginals at return time.
  double row_violation = 0.0;
  double col_violation = 0.0;
};

// Max over rows/cols of |plan marginal - target|.
double max_marginal_violation(const Matrix& plan, std::span<const double> a,
                              std::span<const double> b);

}  // namespace otcr
