#include "otcr/fgw.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "otcr/error.hpp"
#include "otcr/ot_exact.hpp"

namespace otcr {

namespace {

constexpr double kFeasibilityTol = 1e-6;

void check_shapes(const Matrix& c0, const Matrix& c1, const Matrix& plan, const char* who) {
  if (c0.rows() != c0.cols() || c1.rows() != c1.cols() || plan.rows() != c0.rows() ||
      plan.cols() != c1.rows()) {
    throw DimensionError(std::string(who) + ": expected C0 n x n, C1 m x m and plan n x m");
  }
}

Matrix squared(const Matrix& c) {
  Matrix out = c;
  for (double& v : out.values()) v *= v;
  return out;
}

std::vector<double> matvec(const Matrix& m, const std::vector<double>& x) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) s += r[j] * x[j];
    out[i] = s;
  }
  return out;
}

double vdot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

// C0 * P * C1 for symmetric C1, exploiting sparsity of P (LMO vertices
// have <= n+m-1 nonzeros).
Matrix sandwich(const Matrix& c0, const Matrix& p, const Matrix& c1) {
  const std::size_t n = p.rows(), m = p.cols();
  Matrix t(n, m);  // P * C1
  for (std::size_t k = 0; k < n; ++k) {
    auto pk = p.row(k);
    double* tk = t.row(k).data();
    for (std::size_t l = 0; l < m; ++l) {
      const double w = pk[l];
      if (w == 0.0) continue;
      const double* c1l = c1.row(l).data();
      for (std::size_t j = 0; j < m; ++j) tk[j] += w * c1l[j];
    }
  }
  return matmul(c0, t);
}

// Quadratic-form pieces reused across the solver: squared within-costs and
// their products with the target marginals.
struct GwTerms {
  Matrix c0sq, c1sq;
};

// sum_{ijkl} L_ijkl x_ij y_kl with L = (C0_ik - C1_jl)^2, given
// sandwich(c0, y, c1) = C0 y C1^T precomputed as `cyc`.
double bilinear(const GwTerms& t, const Matrix& x, const Matrix& y, const Matrix& cyc) {
  const auto px = row_sums(x), qx = col_sums(x);
  const auto py = row_sums(y), qy = col_sums(y);
  return vdot(px, matvec(t.c0sq, py)) + vdot(qx, matvec(t.c1sq, qy)) - 2.0 * frobenius_dot(x, cyc);
}

}  // namespace

void FgwProblem::validate() const {
  const std::size_t n = cost.rows(), m = cost.cols();
  if (c0.rows() != n || c0.cols() != n || c1.rows() != m || c1.cols() != m || a.size() != n ||
      b.size() != m) {
    throw DimensionError("FgwProblem: D is " + std::to_string(n) + "x" + std::to_string(m) +
                         " but C0/C1/a/b shapes disagree");
  }
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw ConfigError("kappa", "must lie in [0, 1]");
  cost.require_finite("FgwProblem cost");
  c0.require_finite("FgwProblem C0");
  c1.require_finite("FgwProblem C1");
  auto check_within = [](const Matrix& c, const char* name) {
    const double tol = 1e-10 * std::max(1.0, max_abs(c));
    for (std::size_t i = 0; i < c.rows(); ++i) {
      if (std::abs(c(i, i)) > tol) throw ConfigError(name, "diagonal must be zero");
      for (std::size_t j = i + 1; j < c.cols(); ++j)
        if (std::abs(c(i, j) - c(j, i)) > tol) throw ConfigError(name, "must be symmetric");
    }
  };
  check_within(c0, "C0");
  check_within(c1, "C1");
  auto check_mass = [](const std::vector<double>& w, const char* name) {
    double s = 0.0;
    for (double v : w) {
      if (!(v >= 0.0)) throw InfeasibleMarginals(std::string(name) + ": negative mass");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InfeasibleMarginals(std::string(name) + ": mass != 1");
  };
  check_mass(a, "a");
  check_mass(b, "b");
}

double gw_cost_naive(const Matrix& c0, const Matrix& c1, const Matrix& plan) {
  check_shapes(c0, c1, plan, "gw_cost_naive");
  const std::size_t n = plan.rows(), m = plan.cols();
  if (n * m > 10000) {
    throw OracleLimitError("gw_cost_naive: n*m = " + std::to_string(n * m) +
                           " exceeds the oracle limit of 10^4");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double pij = plan(i, j);
      if (pij == 0.0) continue;
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < m; ++l) {
          const double diff = c0(i, k) - c1(j, l);
          s += diff * diff * pij * plan(k, l);
        }
    }
  return s;
}

double gw_cost(const Matrix& c0, const Matrix& c1, const Matrix& plan) {
  check_shapes(c0, c1, plan, "gw_cost");
  GwTerms t{squared(c0), squared(c1)};
  return bilinear(t, plan, plan, matmul_nt(matmul(c0, plan), c1));
}

Matrix gw_grad(const Matrix& c0, const Matrix& c1, const Matrix& plan) {
  check_shapes(c0, c1, plan, "gw_grad");
  const std::size_t n = plan.rows(), m = plan.cols();
  const auto p = row_sums(plan), q = col_sums(plan);
  const Matrix c0sq = squared(c0), c1sq = squared(c1);
  const auto r = matvec(c0sq, p);
  const auto rt = matvec(c0sq.transpose(), p);
  const auto s = matvec(c1sq, q);
  const auto st = matvec(c1sq.transpose(), q);
  // d/dP_ij sum L_ijkl P_ij P_kl = sum_kl (L_ijkl + L_klij) P_kl
  const Matrix cross = matmul_nt(matmul(c0, plan), c1) + matmul(matmul_tn(c0, plan), c1);
  Matrix g(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) g(i, j) = r[i] + rt[i] + s[j] + st[j] - 2.0 * cross(i, j);
  return g;
}

double fgw_cost(const FgwProblem& prob, const Matrix& plan) {
  if (plan.rows() != prob.a.size() || plan.cols() != prob.b.size()) {
    throw DimensionError("fgw_cost: plan shape does not match the problem");
  }
  const double viol = max_marginal_violation(plan, prob.a, prob.b);
  if (viol > kFeasibilityTol) {
    throw InfeasibleMarginals("fgw_cost: plan marginals off by " + std::to_string(viol));
  }
  double out = 0.0;
  if (prob.kappa > 0.0) out += prob.kappa * frobenius_dot(prob.cost, plan);
  if (prob.kappa < 1.0) out += (1.0 - prob.kappa) * gw_cost(prob.c0, prob.c1, plan);
  return out;
}

FgwResult fgw_solve(const FgwProblem& prob, const FgwOptions& opts) {
  prob.validate();
  const std::size_t n = prob.a.size(), m = prob.b.size();
  const double kappa = prob.kappa;
  const double gw_weight = 1.0 - kappa;
  const bool has_gw = gw_weight > 0.0;

  GwTerms terms;
  std::vector<double> r, s;
  if (has_gw) {
    terms = GwTerms{squared(prob.c0), squared(prob.c1)};
    r = matvec(terms.c0sq, prob.a);
    s = matvec(terms.c1sq, prob.b);
  }

  Matrix plan(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) plan(i, j) = prob.a[i] * prob.b[j];

  // cpc = C0 * plan * C1 (C1 symmetric), kept in sync with plan. The
  // product plan is rank one so the first one is an outer product.
  Matrix cpc;
  if (has_gw) {
    const auto ca = matvec(prob.c0, prob.a);
    const auto cb = matvec(prob.c1, prob.b);
    cpc = Matrix(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) cpc(i, j) = ca[i] * cb[j];
  }
  auto objective = [&](const Matrix& p) {
    double v = kappa > 0.0 ? kappa * frobenius_dot(prob.cost, p) : 0.0;
    if (has_gw) v += gw_weight * bilinear(terms, p, p, cpc);
    return v;
  };

  FgwResult out;
  double current = objective(plan);
  out.objective_trace.push_back(current);

  Matrix grad(n, m);
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    // Gradient of the objective at plan (symmetric C0, C1).
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double g = kappa * prob.cost(i, j);
        if (has_gw) g += gw_weight * (2.0 * (r[i] + s[j]) - 4.0 * cpc(i, j));
        grad(i, j) = g;
      }
    TransportPlan vertex = solve_exact_ot(grad, prob.a, prob.b);
    ++out.lmo_calls;

    const Matrix dir = vertex.plan - plan;
    Matrix cdc;
    double quad = 0.0;
    double lin = kappa > 0.0 ? kappa * frobenius_dot(prob.cost, dir) : 0.0;
    if (has_gw) {
      cdc = sandwich(prob.c0, vertex.plan, prob.c1) - cpc;
      quad = gw_weight * bilinear(terms, dir, dir, cdc);
      lin += gw_weight * 2.0 * bilinear(terms, plan, dir, cdc);
    }

    double step;
    if (quad > 0.0) step = std::clamp(-lin / (2.0 * quad), 0.0, 1.0);
    else step = (quad + lin < 0.0) ? 1.0 : 0.0;
    if (step <= 0.0) {
      out.converged = true;
      break;
    }

    if (step >= 1.0) {
      plan = std::move(vertex.plan);
      if (has_gw) cpc = cpc + cdc;
    } else {
      auto pv = plan.values();
      auto dv = dir.values();
      for (std::size_t e = 0; e < pv.size(); ++e) pv[e] += step * dv[e];
      if (has_gw) {
        auto cv = cpc.values();
        auto ddv = cdc.values();
        for (std::size_t e = 0; e < cv.size(); ++e) cv[e] += step * ddv[e];
      }
    }

    const double next = objective(plan);
    out.objective_trace.push_back(next);
    const double drop = current - next;
    current = next;
    if (std::abs(drop) <= opts.tol * std::max(std::abs(next), 1e-300)) {
      out.converged = true;
      break;
    }
  }

  for (double& v : plan.values()) v = std::max(v, 0.0);
  out.objective = objective(plan);
  out.plan.cost = frobenius_dot(prob.cost, plan);
  out.plan.plan = std::move(plan);
  out.plan.iterations = out.objective_trace.size() - 1;
  out.plan.method = TransportMethod::FrankWolfe;
  out.plan.converged = out.converged;
  auto rs = row_sums(out.plan.plan);
  auto cs = col_sums(out.plan.plan);
  for (std::size_t i = 0; i < n; ++i) out.plan.row_violation += std::abs(rs[i] - prob.a[i]);
  for (std::size_t j = 0; j < m; ++j) out.plan.col_violation += std::abs(cs[j] - prob.b[j]);
  return out;
}

}  // namespace otcr
