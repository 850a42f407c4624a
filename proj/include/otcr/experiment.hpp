#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "otcr/datagen.hpp"
#include "otcr/estimator.hpp"
#include "otcr/metrics.hpp"

namespace otcr {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

// Flat run configuration: every PcrConfig key plus the data, run, sweep,
// bench and eval keys below.
struct RunConfig {
  PcrConfig pcr;

  std::string data_source = "synthetic";  // synthetic | csv
  std::string csv_path;
  std::size_t n = 2000;
  std::size_t d = 10;
  double gamma = 3.0;
  bool quadratic = true;
  double sigma = 0.5;
  bool standardize = true;
  double train_frac = 0.7;
  double val_frac = 0.15;
  double test_frac = 0.15;
  bool stratify = true;

  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string estimator = "pcr";  // pcr | s_learner | t_learner | knn
  std::size_t knn_k = 5;
  // Non-empty: per seed, train one model per value and keep the one with the
  // highest validation AUUC.
  std::vector<double> lambda_grid;

  std::string sweep_param = "lambda";  // lambda | kappa | ratio
  std::vector<double> sweep_values;

  std::vector<std::size_t> bench_n{16, 64, 256, 512};
  std::vector<std::size_t> bench_d{8};
  std::size_t bench_repeats = 20;

  std::string checkpoint;
  std::string eval_split = "test";  // train | val | test | all

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  // Applies one `key=value` override; the value is parsed as JSON when
  // possible, otherwise taken as a string.
  void set(const std::string& assignment);
};

// Dataset for one seed, split and (optionally) standardised on the training
// covariates.
struct PreparedData {
  CausalDataset train, val, test;
};
PreparedData prepare_data(const RunConfig& cfg, std::uint64_t seed);
PreparedData prepare_data(const RunConfig& cfg, const CausalDataset& full, std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<double> lambda;  // value used (after tuning) for pcr
  nlohmann::json lambda_scores = nlohmann::json::array();
  EvalReport in_sample, out_of_sample;
  nlohmann::json history = nlohmann::json::object();
  double seconds = 0.0;
  bool fgw_converged = true;
  std::string checkpoint;
  std::optional<PcrModel> model;  // pcr only, not serialised

  nlohmann::json to_json() const;
};

// Trains and evaluates one seed. Writes a checkpoint under `out_dir` when
// it is non-empty and the estimator is pcr.
SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir = "");

// Runs every seed, in parallel up to worker_count(), ordered by seed list.
std::vector<SeedResult> run_seeds(const RunConfig& cfg, const std::string& out_dir = "");

// OTCR_THREADS when set and positive, otherwise the hardware concurrency.
std::size_t worker_count();

// Mean and sample std of each available metric across rows.
nlohmann::json aggregate(const std::vector<EvalReport>& rows);

nlohmann::json cmd_train(const RunConfig& cfg, const std::string& out_dir = "");
nlohmann::json cmd_eval(const RunConfig& cfg);
nlohmann::json cmd_ablate(const RunConfig& cfg, const std::string& out_dir = "");

struct SweepOutput {
  nlohmann::json report;
  std::string csv;  // param,value,seed,metric,score
};
SweepOutput cmd_sweep(const RunConfig& cfg);

struct BenchOutput {
  nlohmann::json report;
  std::string csv;  // n,d,repeat,seconds
};
BenchOutput cmd_bench(const RunConfig& cfg);

// Metrics written per seed and grid point by cmd_sweep.
const std::vector<std::string>& sweep_metrics();

}  // namespace otcr
