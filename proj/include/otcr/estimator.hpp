#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "otcr/datagen.hpp"
#include "otcr/fgw.hpp"
#include "otcr/isp.hpp"
#include "otcr/matrix.hpp"
#include "otcr/metrics.hpp"
#include "otcr/neural.hpp"

namespace otcr {

struct PcrConfig {
  double lambda = 1.0;  // discrepancy weight
  double kappa = 0.5;   // share of the cross-group cost inside the fused discrepancy
  double ratio = 0.5;   // projector rank as a fraction of the representation width
  bool use_lpr = true;  // false forces kappa = 1
  bool use_isp = true;  // false forces ratio = 1
  bool isp_centered = false;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 400;
  std::size_t patience = 30;
  std::uint64_t seed = 0;
  std::vector<std::size_t> psi_hidden{16, 16};
  std::vector<std::size_t> head_hidden{32, 32};
  Activation activation = Activation::Elu;
  AdamConfig adam;
  FgwOptions fgw;

  double effective_kappa() const noexcept { return use_lpr ? kappa : 1.0; }
  double effective_ratio() const noexcept { return use_isp ? ratio : 1.0; }

  // Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys throw ConfigError.
  static PcrConfig from_json(const nlohmann::json& j);
  // FNV-1a of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double factual = 0.0;      // per-unit mean over the epoch
  double discrepancy = 0.0;  // mean over steps where it was computed
  double val_auuc = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_auuc = 0.0;
  bool early_stopped = false;
  std::size_t steps = 0;
  std::size_t skipped_discrepancy = 0;  // steps where a group had < 2 units
  std::size_t fgw_unconverged = 0;

  nlohmann::json to_json() const;
};

struct PcrModel {
  Mlp psi;
  Mlp phi0;
  Mlp phi1;
  AdamState adam;
  TrainHistory history;
};

// psi: d -> psi_hidden (activated output); heads: repr -> head_hidden -> 1.
PcrModel make_model(const PcrConfig& cfg, std::size_t input_dim);

struct EmpiricalBatch {
  Matrix x;
  std::vector<int> t;
  std::vector<double> yf;
};

EmpiricalBatch make_batch(const CausalDataset& ds, std::span<const std::size_t> idx);

// Sum of squared factual errors: treated units through phi1, control units
// through phi0. A group absent from the batch contributes 0 and is flagged.
struct FactualLoss {
  double loss = 0.0;
  bool treated_missing = false;
  bool control_missing = false;
};
FactualLoss factual_loss(const PcrModel& model, const EmpiricalBatch& batch);

struct Discrepancy {
  double value = 0.0;
  FgwResult solve;
  Projector projector;
  FgwProblem problem;
};

// Fused discrepancy between control (rows) and treated (columns)
// representation clouds after projection onto the fitted subspace.
Discrepancy pcr_discrepancy(const Matrix& r_control, const Matrix& r_treated, const PcrConfig& cfg);
// Same, from a batch through psi. Throws DataError if a group has < 2 units.
Discrepancy pcr_discrepancy(const PcrModel& model, const EmpiricalBatch& batch, const PcrConfig& cfg);

// Value and representation gradients of the fused cost with plan and basis
// held fixed: kappa <D(Z0,Z1), pi> + (1 - kappa) GW(C(Z0), C(Z1), pi), Z = R U.
struct FixedPlanValue {
  double value = 0.0;
  Matrix grad_control;  // d value / d R_control
  Matrix grad_treated;
};
FixedPlanValue fixed_plan_discrepancy(const Matrix& r_control, const Matrix& r_treated, const Matrix& basis,
                                      const Matrix& plan, double kappa, bool with_grad = true);

struct StepDiagnostics {
  double factual = 0.0;
  double discrepancy = 0.0;
  double total = 0.0;
  bool discrepancy_skipped = false;
  bool group_missing = false;
  std::size_t fgw_iterations = 0;
  bool fgw_converged = true;
};

struct PcrGradients {
  MlpGrads psi, phi0, phi1;
  StepDiagnostics diag;

  // Flat gradient views ordered as model_parameters().
  std::vector<std::span<const double>> blocks() const;
};

// Parameter blocks of psi, phi0, phi1 in that order. Invalidates tapes.
std::vector<ParamBlock> model_parameters(PcrModel& model);

// Gradients of factual + lambda * discrepancy with plan and basis fixed.
PcrGradients pcr_gradients(const PcrModel& model, const EmpiricalBatch& batch, const PcrConfig& cfg);
// One Adam update. Throws NumericalError naming the loss component if the
// loss is not finite.
StepDiagnostics pcr_step(PcrModel& model, const EmpiricalBatch& batch, const PcrConfig& cfg);

// Minibatch training with per-epoch validation AUUC and early stopping;
// returns the best-epoch snapshot.
PcrModel train_pcr(const PcrConfig& cfg, const CausalDataset& train, const CausalDataset& val);

struct PotentialOutcomes {
  std::vector<double> mu0, mu1;

  std::vector<double> cate() const;
};

PotentialOutcomes predict_outcomes(const PcrModel& model, const Matrix& x);
std::vector<double> predict_cate(const PcrModel& model, const Matrix& x);
EvalReport evaluate(const PcrModel& model, const CausalDataset& ds);

// Empirical ingredients of the factual-error-plus-discrepancy bound.
struct BoundReport {
  double eps_f_t1 = 0.0;  // mean squared factual error, treated
  double eps_f_t0 = 0.0;  // mean squared factual error, control
  double discrepancy = 0.0;
  double pehe_sq = 0.0;

  nlohmann::json to_json() const;
};
BoundReport bound_report(const PcrModel& model, const CausalDataset& ds, const PcrConfig& cfg);

// One network on [x, t].
struct SLearner {
  Mlp net;
  TrainHistory history;
};
SLearner train_s_learner(const PcrConfig& cfg, const CausalDataset& train, const CausalDataset& val);
PotentialOutcomes predict_outcomes(const SLearner& model, const Matrix& x);

// Independent networks per treatment group.
struct TLearner {
  Mlp net0, net1;
  TrainHistory history;
};
// Throws DataError when the training data lacks a group.
TLearner train_t_learner(const PcrConfig& cfg, const CausalDataset& train, const CausalDataset& val);
PotentialOutcomes predict_outcomes(const TLearner& model, const Matrix& x);

struct KnnResult {
  std::vector<double> tau;
  std::size_t k_used = 0;
  bool clamped = false;
};
// In-sample matching: each unit's counterfactual is the mean outcome of its k
// nearest opposite-group units (squared Euclidean on covariates).
KnnResult knn_cate(std::size_t k, const CausalDataset& ds);
// Out-of-sample: both potential outcomes from neighbours in `reference`.
PotentialOutcomes knn_outcomes(std::size_t k, const CausalDataset& reference, const Matrix& x,
                               bool* clamped = nullptr);

// JSON checkpoint: format tag and version, config, config hash, networks.
void save_checkpoint(const PcrModel& model, const PcrConfig& cfg, const std::string& path);
struct Checkpoint {
  PcrConfig config;
  PcrModel model;
  std::string config_hash;
};
// Throws CheckpointError on unreadable, corrupted or inconsistent files.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace otcr
