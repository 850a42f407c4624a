#include "otcr/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "otcr/error.hpp"

namespace otcr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_inputs(const Matrix& cost, std::span<const double> a, std::span<const double> b) {
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw DimensionError("sinkhorn: cost shape does not match the marginals");
  }
  cost.require_finite("sinkhorn cost");
}

TransportPlan finish(const Matrix& cost, Matrix plan, std::span<const double> a,
                     std::span<const double> b, std::size_t iters, double row_violation,
                     bool converged) {
  TransportPlan out;
  out.cost = frobenius_dot(cost, plan);
  out.plan = std::move(plan);
  out.iterations = iters;
  out.method = TransportMethod::Sinkhorn;
  out.converged = converged;
  out.row_violation = row_violation;
  auto cs = col_sums(out.plan);
  for (std::size_t j = 0; j < b.size(); ++j) out.col_violation += std::abs(cs[j] - b[j]);
  (void)a;
  return out;
}

[[noreturn]] void underflow(std::size_t iter) {
  throw NumericalError("sinkhorn: scaling vector became non-finite at sweep " +
                       std::to_string(iter) +
                       "; increase epsilon or use the log-domain solver");
}

TransportPlan sinkhorn_plain(const Matrix& cost, std::span<const double> a,
                             std::span<const double> b, const SinkhornConfig& cfg) {
  const std::size_t n = a.size(), m = b.size();
  Matrix k(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) k(i, j) = std::exp(-cost(i, j) / cfg.epsilon);

  std::vector<double> u(n, 1.0), v(m, 1.0), kv(n), ktu(m);
  double violation = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  bool converged = false;
  while (it < cfg.max_iters) {
    ++it;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += k(i, j) * v[j];
      u[i] = a[i] / s;
      if (!std::isfinite(u[i])) underflow(it);
    }
    std::fill(ktu.begin(), ktu.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ktu[j] += k(i, j) * u[i];
    for (std::size_t j = 0; j < m; ++j) {
      v[j] = b[j] / ktu[j];
      if (!std::isfinite(v[j])) underflow(it);
    }
    violation = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += k(i, j) * v[j];
      violation += std::abs(u[i] * s - a[i]);
    }
    if (violation < cfg.convergence_tol) {
      converged = true;
      break;
    }
  }
  Matrix plan(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) plan(i, j) = u[i] * k(i, j) * v[j];
  return finish(cost, std::move(plan), a, b, it, violation, converged);
}

// log(sum_j exp(x_j)), tolerant of -inf entries.
double log_sum_exp(std::span<const double> x) {
  double mx = kNegInf;
  for (double v : x) mx = std::max(mx, v);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

TransportPlan sinkhorn_log(const Matrix& cost, std::span<const double> a,
                           std::span<const double> b, const SinkhornConfig& cfg) {
  const std::size_t n = a.size(), m = b.size();
  const double eps = cfg.epsilon;
  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
  std::vector<double> log_a(n), log_b(m);
  for (std::size_t i = 0; i < n; ++i) log_a[i] = safe_log(a[i]);
  for (std::size_t j = 0; j < m; ++j) log_b[j] = safe_log(b[j]);

  auto update_f = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost(i, j)) / eps;
      const double lse = log_sum_exp(std::span<const double>(buf.data(), m));
      f[i] = log_a[i] == kNegInf ? kNegInf : eps * (log_a[i] - lse);
    }
  };
  auto update_g = [&] {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost(i, j)) / eps;
      const double lse = log_sum_exp(std::span<const double>(buf.data(), n));
      g[j] = log_b[j] == kNegInf ? kNegInf : eps * (log_b[j] - lse);
    }
  };
  auto entry = [&](std::size_t i, std::size_t j) {
    if (f[i] == kNegInf || g[j] == kNegInf) return 0.0;
    return std::exp((f[i] + g[j] - cost(i, j)) / eps);
  };

  double violation = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  bool converged = false;
  while (it < cfg.max_iters) {
    ++it;
    update_f();
    update_g();
    violation = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += entry(i, j);
      violation += std::abs(s - a[i]);
    }
    if (!std::isfinite(violation)) underflow(it);
    if (violation < cfg.convergence_tol) {
      converged = true;
      break;
    }
  }
  Matrix plan(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) plan(i, j) = entry(i, j);
  return finish(cost, std::move(plan), a, b, it, violation, converged);
}

}  // namespace

SinkhornConfig SinkhornConfig::defaults_for(const Matrix& cost) {
  SinkhornConfig cfg;
  const double mu = mean(cost);
  cfg.epsilon = mu > 0.0 ? 0.1 * mu : 1.0;
  return cfg;
}

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon", "must be > 0");
  if (max_iters < 1) throw ConfigError("max_iters", "must be >= 1");
  if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol", "must be > 0");
}

TransportPlan sinkhorn(const Matrix& cost, std::span<const double> a, std::span<const double> b,
                       const SinkhornConfig& cfg) {
  cfg.validate();
  check_inputs(cost, a, b);
  const double mu = mean(cost);
  if (mu > 0.0 && cfg.epsilon < kLogDomainThreshold * mu) return sinkhorn_log(cost, a, b, cfg);
  return sinkhorn_plain(cost, a, b, cfg);
}

}  // namespace otcr
