#include "otcr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otcr/error.hpp"

namespace otcr {

namespace {

void same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": length mismatch");
  if (a == 0) throw DimensionError(std::string(what) + ": empty input");
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

double pehe(std::span<const double> tau_hat, std::span<const double> tau) {
  same_length(tau_hat.size(), tau.size(), "pehe");
  double s = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) s += (tau_hat[i] - tau[i]) * (tau_hat[i] - tau[i]);
  return std::sqrt(s / static_cast<double>(tau.size()));
}

double ate_err(std::span<const double> tau_hat, std::span<const double> tau) {
  same_length(tau_hat.size(), tau.size(), "ate_err");
  double s = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) s += tau_hat[i] - tau[i];
  return std::abs(s / static_cast<double>(tau.size()));
}

std::optional<double> att_err(std::span<const double> tau_hat, std::span<const double> tau,
                              std::span<const int> t) {
  same_length(tau_hat.size(), tau.size(), "att_err");
  same_length(t.size(), tau.size(), "att_err");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < tau.size(); ++i)
    if (t[i] == 1) {
      s += tau_hat[i] - tau[i];
      ++n;
    }
  if (n == 0) return std::nullopt;
  return std::abs(s / static_cast<double>(n));
}

UpliftCurve uplift_curve(std::span<const double> tau_hat, std::span<const int> t, std::span<const double> yf) {
  same_length(tau_hat.size(), t.size(), "auuc");
  same_length(yf.size(), t.size(), "auuc");
  const std::size_t n = t.size();
  UpliftCurve c;
  const auto nt_total = static_cast<std::size_t>(std::count(t.begin(), t.end(), 1));
  if (nt_total == 0 || nt_total == n) return c;
  c.available = true;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tau_hat[a] > tau_hat[b]; });

  const double dn = static_cast<double>(n);
  c.fraction.push_back(0.0);
  c.uplift.push_back(0.0);
  double sum_t = 0.0, sum_c = 0.0;
  std::size_t n_t = 0, n_c = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e < n && tau_hat[order[e]] == tau_hat[order[k]]) {
      const std::size_t i = order[e];
      if (t[i] == 1) {
        sum_t += yf[i];
        ++n_t;
      } else {
        sum_c += yf[i];
        ++n_c;
      }
      ++e;
    }
    const double frac = static_cast<double>(e) / dn;
    double u = 0.0;
    if (n_t > 0 && n_c > 0) {
      u = (sum_t / static_cast<double>(n_t) - sum_c / static_cast<double>(n_c)) * frac;
    } else {
      c.partial_prefix = true;
    }
    c.fraction.push_back(frac);
    c.uplift.push_back(u);
    k = e;
  }

  double area = 0.0;
  for (std::size_t p = 1; p < c.fraction.size(); ++p)
    area += 0.5 * (c.uplift[p] + c.uplift[p - 1]) * (c.fraction[p] - c.fraction[p - 1]);
  c.area = area - 0.5 * c.uplift.back();
  return c;
}

std::optional<double> auuc(std::span<const double> tau_hat, std::span<const int> t, std::span<const double> yf) {
  UpliftCurve c = uplift_curve(tau_hat, t, yf);
  if (!c.available) return std::nullopt;
  return c.area;
}

RegressionMetrics regression_metrics(std::span<const double> y_hat, std::span<const double> y) {
  same_length(y_hat.size(), y.size(), "regression_metrics");
  const double n = static_cast<double>(y.size());
  double sse = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
    mean += y[i];
  }
  mean /= n;
  double sst = 0.0;
  for (double v : y) sst += (v - mean) * (v - mean);
  RegressionMetrics r;
  r.rmse = std::sqrt(sse / n);
  if (y.size() >= 2 && sst > 0.0) r.r2 = 1.0 - sse / sst;
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"pehe_sqrt", opt(pehe_sqrt)}, {"pehe_sq", opt(pehe_sq)}, {"ate_err", opt(ate_err)},
                      {"att_err", opt(att_err)},     {"auuc", opt(auuc)},       {"rmse_f", opt(rmse_f)},
                      {"rmse_cf", opt(rmse_cf)},     {"r2_f", opt(r2_f)},       {"r2_cf", opt(r2_cf)}};
  nlohmann::json avail = nlohmann::json::object();
  for (auto& [k, v] : j.items()) avail[k] = !v.is_null();
  j["available"] = avail;
  return j;
}

EvalReport evaluate_predictions(std::span<const double> mu0_hat, std::span<const double> mu1_hat,
                                const CausalDataset& ds) {
  const std::size_t n = ds.size();
  same_length(mu0_hat.size(), n, "evaluate_predictions");
  same_length(mu1_hat.size(), n, "evaluate_predictions");
  std::vector<double> tau_hat(n), yf_hat(n), ycf_hat(n);
  for (std::size_t i = 0; i < n; ++i) {
    tau_hat[i] = mu1_hat[i] - mu0_hat[i];
    yf_hat[i] = ds.t[i] ? mu1_hat[i] : mu0_hat[i];
    ycf_hat[i] = ds.t[i] ? mu0_hat[i] : mu1_hat[i];
  }
  EvalReport r;
  if (ds.has_tau()) {
    const auto tau = ds.tau();
    r.pehe_sqrt = pehe(tau_hat, tau);
    r.pehe_sq = *r.pehe_sqrt * *r.pehe_sqrt;
    r.ate_err = ate_err(tau_hat, tau);
    r.att_err = att_err(tau_hat, tau, ds.t);
  }
  r.auuc = auuc(tau_hat, ds.t, ds.yf);
  const auto f = regression_metrics(yf_hat, ds.yf);
  r.rmse_f = f.rmse;
  r.r2_f = f.r2;
  if (ds.ycf) {
    const auto cf = regression_metrics(ycf_hat, *ds.ycf);
    r.rmse_cf = cf.rmse;
    r.r2_cf = cf.r2;
  }
  return r;
}

}  // namespace otcr
