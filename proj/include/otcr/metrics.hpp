#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "otcr/datagen.hpp"

namespace otcr {

// sqrt(mean((tau_hat - tau)^2)).
double pehe(std::span<const double> tau_hat, std::span<const double> tau);
// |mean(tau_hat) - mean(tau)|.
double ate_err(std::span<const double> tau_hat, std::span<const double> tau);
// ATE error restricted to treated units; empty when none are treated.
std::optional<double> att_err(std::span<const double> tau_hat, std::span<const double> tau,
                              std::span<const int> t);

struct UpliftCurve {
  bool available = false;       // both groups present
  bool partial_prefix = false;  // some prefix lacked a group and scored 0
  std::vector<double> fraction; // k/n at each tie-block boundary, starting at 0
  std::vector<double> uplift;   // (mean treated yf - mean control yf) * k/n
  double area = 0.0;            // trapezoid area minus the random-targeting line
};

// Units ranked by tau_hat descending. Units with equal scores form one
// block: the curve is only evaluated at block boundaries, so the result does
// not depend on the order of tied units.
UpliftCurve uplift_curve(std::span<const double> tau_hat, std::span<const int> t, std::span<const double> yf);
std::optional<double> auuc(std::span<const double> tau_hat, std::span<const int> t, std::span<const double> yf);

struct RegressionMetrics {
  double rmse = 0.0;
  std::optional<double> r2;  // empty for n < 2 or constant targets
};

RegressionMetrics regression_metrics(std::span<const double> y_hat, std::span<const double> y);

struct EvalReport {
  std::optional<double> pehe_sqrt, pehe_sq, ate_err, att_err, auuc;
  std::optional<double> rmse_f, rmse_cf, r2_f, r2_cf;

  nlohmann::json to_json() const;
};

// Full metric suite from predicted potential outcomes on a dataset.
EvalReport evaluate_predictions(std::span<const double> mu0_hat, std::span<const double> mu1_hat,
                                const CausalDataset& ds);

}  // namespace otcr
