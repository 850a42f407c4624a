#include "otcr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "otcr/error.hpp"
#include "otcr/fgw.hpp"
#include "otcr/rng.hpp"

namespace otcr {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys{
      "data_source", "csv_path",    "n",           "d",           "gamma",         "quadratic",
      "sigma",       "standardize", "train_frac",  "val_frac",    "test_frac",     "stratify",
      "seeds",       "estimator",   "knn_k",       "lambda_grid", "sweep_param",   "sweep_values",
      "bench_n",     "bench_d",     "bench_repeats", "checkpoint", "eval_split"};
  return keys;
}

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "has the wrong type");
  }
}

void require_one_of(const std::string& field, const std::string& value, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  throw ConfigError(field, "'" + value + "' is not one of " + list);
}

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Runs job(i) for i in [0, count) on up to worker_count() threads and
// rethrows the first failure in index order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = std::min(worker_count(), count);
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            job(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Stats {
  double mean = 0.0, std = 0.0;
  std::size_t count = 0;
};

Stats stats_of(const std::vector<double>& v) {
  Stats s;
  s.count = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::optional<double> metric_of(const EvalReport& r, const std::string& name) {
  if (name == "pehe_sqrt") return r.pehe_sqrt;
  if (name == "pehe_sq") return r.pehe_sq;
  if (name == "ate_err") return r.ate_err;
  if (name == "att_err") return r.att_err;
  if (name == "auuc") return r.auuc;
  if (name == "rmse_f") return r.rmse_f;
  if (name == "rmse_cf") return r.rmse_cf;
  if (name == "r2_f") return r.r2_f;
  if (name == "r2_cf") return r.r2_cf;
  throw ConfigError("metric", "unknown metric " + name);
}

const std::vector<std::string>& all_metrics() {
  static const std::vector<std::string> m{"pehe_sqrt", "pehe_sq", "ate_err", "att_err", "auuc",
                                          "rmse_f",    "rmse_cf", "r2_f",    "r2_cf"};
  return m;
}

json history_summary(const TrainHistory& h) {
  return {{"best_epoch", h.best_epoch},
          {"epochs_run", h.epochs.size()},
          {"best_val_auuc", h.best_val_auuc},
          {"early_stopped", h.early_stopped},
          {"steps", h.steps},
          {"skipped_discrepancy", h.skipped_discrepancy},
          {"fgw_unconverged", h.fgw_unconverged}};
}

void set_pcr_param(PcrConfig& c, const std::string& param, double value) {
  if (param == "lambda") c.lambda = value;
  else if (param == "kappa") c.kappa = value;
  else if (param == "ratio") c.ratio = value;
  else throw ConfigError("sweep_param", "'" + param + "' is not one of lambda, kappa, ratio");
}

json report_header(const RunConfig& cfg, const char* command) {
  return {{"schema_version", kReportSchemaVersion},
          {"command", command},
          {"version", kLibraryVersion},
          {"config", cfg.to_json()}};
}

json seed_block(const std::vector<SeedResult>& rows) {
  json seeds = json::array();
  std::vector<EvalReport> in, out;
  std::size_t unconverged = 0;
  bool all_converged = true;
  double total = 0.0;
  for (const auto& r : rows) {
    seeds.push_back(r.to_json());
    in.push_back(r.in_sample);
    out.push_back(r.out_of_sample);
    all_converged = all_converged && r.fgw_converged;
    if (r.history.contains("fgw_unconverged")) unconverged += r.history["fgw_unconverged"].get<std::size_t>();
    total += r.seconds;
  }
  return {{"seeds", seeds},
          {"aggregate", {{"in_sample", aggregate(in)}, {"out_of_sample", aggregate(out)}}},
          {"convergence", {{"all_fgw_converged", all_converged}, {"fgw_unconverged_steps", unconverged}}},
          {"seconds", total}};
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

void RunConfig::validate() const {
  pcr.validate();
  require_one_of("data_source", data_source, {"synthetic", "csv"});
  if (data_source == "csv" && csv_path.empty()) throw ConfigError("csv_path", "required when data_source is csv");
  if (data_source == "synthetic") {
    SyntheticSpec{n, d, gamma, quadratic, sigma, 0}.validate();
  }
  SplitSpec{train_frac, val_frac, test_frac, stratify, 0}.validate();
  if (seeds.empty()) throw ConfigError("seeds", "must list at least one seed");
  require_one_of("estimator", estimator, {"pcr", "s_learner", "t_learner", "knn"});
  if (knn_k == 0) throw ConfigError("knn_k", "must be at least 1");
  for (double l : lambda_grid)
    if (!(std::isfinite(l) && l >= 0.0)) throw ConfigError("lambda_grid", "values must be finite and >= 0");
  require_one_of("sweep_param", sweep_param, {"lambda", "kappa", "ratio"});
  for (double v : sweep_values) {
    PcrConfig c = pcr;
    set_pcr_param(c, sweep_param, v);
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("sweep_values", std::string("invalid value for ") + sweep_param + ": " + e.what());
    }
  }
  if (bench_n.empty()) throw ConfigError("bench_n", "must not be empty");
  for (auto v : bench_n)
    if (v < 2) throw ConfigError("bench_n", "sizes must be at least 2");
  if (bench_d.empty()) throw ConfigError("bench_d", "must not be empty");
  for (auto v : bench_d)
    if (v < 1) throw ConfigError("bench_d", "widths must be at least 1");
  if (bench_repeats < 20) throw ConfigError("bench_repeats", "must be at least 20");
  require_one_of("eval_split", eval_split, {"train", "val", "test", "all"});
}

json RunConfig::to_json() const {
  json j = pcr.to_json();
  j.erase("seed");
  j["data_source"] = data_source;
  j["csv_path"] = csv_path;
  j["n"] = n;
  j["d"] = d;
  j["gamma"] = gamma;
  j["quadratic"] = quadratic;
  j["sigma"] = sigma;
  j["standardize"] = standardize;
  j["train_frac"] = train_frac;
  j["val_frac"] = val_frac;
  j["test_frac"] = test_frac;
  j["stratify"] = stratify;
  j["seeds"] = seeds;
  j["estimator"] = estimator;
  j["knn_k"] = knn_k;
  j["lambda_grid"] = lambda_grid;
  j["sweep_param"] = sweep_param;
  j["sweep_values"] = sweep_values;
  j["bench_n"] = bench_n;
  j["bench_d"] = bench_d;
  j["bench_repeats"] = bench_repeats;
  j["checkpoint"] = checkpoint;
  j["eval_split"] = eval_split;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
  RunConfig c;
  json model = json::object();
  for (auto& [k, v] : j.items()) {
    if (k == "seed") throw ConfigError("seed", "use the seeds list");
    if (!run_keys().count(k)) {
      model[k] = v;
      continue;
    }
    if (k == "data_source") c.data_source = get_as<std::string>(v, k);
    else if (k == "csv_path") c.csv_path = get_as<std::string>(v, k);
    else if (k == "n") c.n = get_as<std::size_t>(v, k);
    else if (k == "d") c.d = get_as<std::size_t>(v, k);
    else if (k == "gamma") c.gamma = get_as<double>(v, k);
    else if (k == "quadratic") c.quadratic = get_as<bool>(v, k);
    else if (k == "sigma") c.sigma = get_as<double>(v, k);
    else if (k == "standardize") c.standardize = get_as<bool>(v, k);
    else if (k == "train_frac") c.train_frac = get_as<double>(v, k);
    else if (k == "val_frac") c.val_frac = get_as<double>(v, k);
    else if (k == "test_frac") c.test_frac = get_as<double>(v, k);
    else if (k == "stratify") c.stratify = get_as<bool>(v, k);
    else if (k == "seeds") c.seeds = get_as<std::vector<std::uint64_t>>(v, k);
    else if (k == "estimator") c.estimator = get_as<std::string>(v, k);
    else if (k == "knn_k") c.knn_k = get_as<std::size_t>(v, k);
    else if (k == "lambda_grid") c.lambda_grid = get_as<std::vector<double>>(v, k);
    else if (k == "sweep_param") c.sweep_param = get_as<std::string>(v, k);
    else if (k == "sweep_values") c.sweep_values = get_as<std::vector<double>>(v, k);
    else if (k == "bench_n") c.bench_n = get_as<std::vector<std::size_t>>(v, k);
    else if (k == "bench_d") c.bench_d = get_as<std::vector<std::size_t>>(v, k);
    else if (k == "bench_repeats") c.bench_repeats = get_as<std::size_t>(v, k);
    else if (k == "checkpoint") c.checkpoint = get_as<std::string>(v, k);
    else if (k == "eval_split") c.eval_split = get_as<std::string>(v, k);
  }
  c.pcr = PcrConfig::from_json(model);
  c.validate();
  return c;
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json j = to_json();
  if (!j.contains(key)) throw ConfigError(key, "unknown setting");
  j[key] = value;
  *this = from_json(j);
}

// ---------------------------------------------------------------- data

PreparedData prepare_data(const RunConfig& cfg, const CausalDataset& full, std::uint64_t seed) {
  const SplitIndices idx = split(full, {cfg.train_frac, cfg.val_frac, cfg.test_frac, cfg.stratify, seed});
  PreparedData p{full.subset(idx.train), full.subset(idx.val), full.subset(idx.test)};
  if (cfg.standardize) {
    const Standardizer s = Standardizer::fit(p.train.x);
    for (CausalDataset* ds : {&p.train, &p.val, &p.test}) ds->x = s.apply(ds->x);
  }
  return p;
}

PreparedData prepare_data(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.data_source == "csv") return prepare_data(cfg, load_csv(cfg.csv_path), seed);
  return prepare_data(cfg, generate_synthetic({cfg.n, cfg.d, cfg.gamma, cfg.quadratic, cfg.sigma, seed}), seed);
}

// ---------------------------------------------------------------- runs

json SeedResult::to_json() const {
  json j = {{"seed", seed},
            {"in_sample", in_sample.to_json()},
            {"out_of_sample", out_of_sample.to_json()},
            {"history", history},
            {"fgw_converged", fgw_converged},
            {"seconds", seconds}};
  j["lambda"] = lambda ? json(*lambda) : json(nullptr);
  j["lambda_scores"] = lambda_scores;
  j["checkpoint"] = checkpoint.empty() ? json(nullptr) : json(checkpoint);
  return j;
}

SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  const PreparedData data = prepare_data(cfg, seed);
  PcrConfig pc = cfg.pcr;
  pc.seed = seed;
  SeedResult r;
  r.seed = seed;
  const auto t0 = Clock::now();

  auto eval_outcomes = [&](const PotentialOutcomes& in, const PotentialOutcomes& out) {
    r.in_sample = evaluate_predictions(in.mu0, in.mu1, data.train);
    r.out_of_sample = evaluate_predictions(out.mu0, out.mu1, data.test);
  };

  if (cfg.estimator == "pcr") {
    std::vector<double> grid = cfg.lambda_grid;
    if (grid.empty()) grid.push_back(pc.lambda);
    std::optional<PcrModel> best;
    double best_lambda = grid.front();
    for (double lambda : grid) {
      pc.lambda = lambda;
      PcrModel m = train_pcr(pc, data.train, data.val);
      r.lambda_scores.push_back({{"lambda", lambda}, {"val_auuc", m.history.best_val_auuc}});
      if (!best || m.history.best_val_auuc > best->history.best_val_auuc) {
        best = std::move(m);
        best_lambda = lambda;
      }
    }
    pc.lambda = best_lambda;
    r.lambda = best_lambda;
    r.in_sample = evaluate(*best, data.train);
    r.out_of_sample = evaluate(*best, data.test);
    r.history = history_summary(best->history);
    r.fgw_converged = best->history.fgw_unconverged == 0;
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      r.checkpoint = (std::filesystem::path(out_dir) / ("checkpoint_seed" + std::to_string(seed) + ".json")).string();
      save_checkpoint(*best, pc, r.checkpoint);
    }
    r.model = std::move(best);
  } else if (cfg.estimator == "s_learner") {
    SLearner m = train_s_learner(pc, data.train, data.val);
    eval_outcomes(predict_outcomes(m, data.train.x), predict_outcomes(m, data.test.x));
    r.history = history_summary(m.history);
  } else if (cfg.estimator == "t_learner") {
    TLearner m = train_t_learner(pc, data.train, data.val);
    eval_outcomes(predict_outcomes(m, data.train.x), predict_outcomes(m, data.test.x));
    r.history = history_summary(m.history);
  } else {
    const KnnResult in = knn_cate(cfg.knn_k, data.train);
    PotentialOutcomes po_in;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const double y = data.train.yf[i];
      po_in.mu0.push_back(data.train.t[i] ? y - in.tau[i] : y);
      po_in.mu1.push_back(data.train.t[i] ? y : y + in.tau[i]);
    }
    bool clamped = false;
    eval_outcomes(po_in, knn_outcomes(cfg.knn_k, data.train, data.test.x, &clamped));
    r.history = {{"k_used", in.k_used}, {"clamped", in.clamped || clamped}};
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("OTCR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<SeedResult> run_seeds(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::vector<SeedResult> out(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), [&](std::size_t i) { out[i] = run_seed(cfg, cfg.seeds[i], out_dir); });
  return out;
}

json aggregate(const std::vector<EvalReport>& rows) {
  json out = json::object();
  for (const auto& name : all_metrics()) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (auto m = metric_of(r, name)) v.push_back(*m);
    if (v.empty()) {
      out[name] = {{"mean", nullptr}, {"std", nullptr}, {"count", 0}};
      continue;
    }
    const Stats s = stats_of(v);
    out[name] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
  }
  return out;
}

// ---------------------------------------------------------------- commands

json cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const auto t0 = Clock::now();
  json report = report_header(cfg, "train");
  report.update(seed_block(run_seeds(cfg, out_dir)));
  report["timings"] = {{"total_seconds", seconds_since(t0)}, {"workers", worker_count()}};
  return report;
}

json cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint", "required for eval");
  const Checkpoint ck = load_checkpoint(cfg.checkpoint);
  const std::uint64_t seed = ck.config.seed;
  const PreparedData data = prepare_data(cfg, seed);
  if (data.train.dim() != ck.model.psi.input_dim()) {
    throw DimensionError("eval: checkpoint expects " + std::to_string(ck.model.psi.input_dim()) +
                         " covariates but the data has " + std::to_string(data.train.dim()));
  }
  CausalDataset chosen;
  if (cfg.eval_split == "train") chosen = data.train;
  else if (cfg.eval_split == "val") chosen = data.val;
  else if (cfg.eval_split == "test") chosen = data.test;
  else {
    std::vector<const CausalDataset*> parts{&data.train, &data.val, &data.test};
    std::size_t rows = 0;
    for (auto* p : parts) rows += p->size();
    chosen.x = Matrix(rows, data.train.dim());
    const bool tau = std::all_of(parts.begin(), parts.end(), [](auto* p) { return p->mu0 && p->mu1; });
    const bool ycf = std::all_of(parts.begin(), parts.end(), [](auto* p) { return p->ycf.has_value(); });
    if (tau) chosen.mu0.emplace(), chosen.mu1.emplace();
    if (ycf) chosen.ycf.emplace();
    std::size_t r = 0;
    for (auto* p : parts) {
      for (std::size_t i = 0; i < p->size(); ++i, ++r) {
        std::copy(p->x.row(i).begin(), p->x.row(i).end(), chosen.x.row(r).begin());
        chosen.t.push_back(p->t[i]);
        chosen.yf.push_back(p->yf[i]);
        if (tau) chosen.mu0->push_back((*p->mu0)[i]), chosen.mu1->push_back((*p->mu1)[i]);
        if (ycf) chosen.ycf->push_back((*p->ycf)[i]);
      }
    }
  }
  json report = report_header(cfg, "eval");
  report["checkpoint"] = cfg.checkpoint;
  report["config_hash"] = ck.config_hash;
  report["seed"] = seed;
  report["split"] = cfg.eval_split;
  report["rows"] = chosen.size();
  report["metrics"] = evaluate(ck.model, chosen).to_json();
  return report;
}

json cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (cfg.estimator != "pcr") throw ConfigError("estimator", "ablate requires pcr");
  const auto t0 = Clock::now();
  struct Variant {
    const char* name;
    bool lpr, isp;
  };
  const std::vector<Variant> variants{
      {"no_toggle", false, false}, {"lpr_only", true, false}, {"isp_only", false, true}, {"full", true, true}};
  const std::size_t ns = cfg.seeds.size();
  std::vector<SeedResult> results(variants.size() * ns);
  auto run_variant = [&](std::size_t job, std::optional<double> lambda) {
    const Variant& v = variants[job / ns];
    RunConfig c = cfg;
    c.pcr.use_lpr = v.lpr;
    c.pcr.use_isp = v.isp;
    if (lambda) {
      c.pcr.lambda = *lambda;
      c.lambda_grid.clear();
    }
    const std::string dir = out_dir.empty() ? "" : (std::filesystem::path(out_dir) / v.name).string();
    results[job] = run_seed(c, cfg.seeds[job % ns], dir);
  };
  // Full PCR tunes lambda per seed; the other rows reuse that value.
  const std::size_t full = variants.size() - 1;
  parallel_for(ns, [&](std::size_t s) { run_variant(full * ns + s, std::nullopt); });
  parallel_for(full * ns, [&](std::size_t job) { run_variant(job, results[full * ns + job % ns].lambda); });

  json report = report_header(cfg, "ablate");
  json rows = json::array();
  for (std::size_t k = 0; k < variants.size(); ++k) {
    RunConfig c = cfg;
    c.pcr.use_lpr = variants[k].lpr;
    c.pcr.use_isp = variants[k].isp;
    json row = {{"name", variants[k].name},
                {"use_lpr", variants[k].lpr},
                {"use_isp", variants[k].isp},
                {"kappa", c.pcr.effective_kappa()},
                {"ratio", c.pcr.effective_ratio()}};
    row.update(seed_block({results.begin() + k * ns, results.begin() + (k + 1) * ns}));
    rows.push_back(row);
  }
  report["rows"] = rows;

  // Paired out-of-sample differences against the no-toggle row.
  json deltas = json::object();
  for (std::size_t k = 1; k < variants.size(); ++k) {
    json m = json::object();
    for (const auto& name : all_metrics()) {
      std::vector<double> diff;
      json per_seed = json::array();
      for (std::size_t s = 0; s < ns; ++s) {
        const auto a = metric_of(results[k * ns + s].out_of_sample, name);
        const auto b = metric_of(results[s].out_of_sample, name);
        if (a && b) {
          diff.push_back(*a - *b);
          per_seed.push_back(*a - *b);
        } else {
          per_seed.push_back(nullptr);
        }
      }
      const Stats st = stats_of(diff);
      m[name] = {{"per_seed", per_seed},
                 {"mean", diff.empty() ? json(nullptr) : json(st.mean)},
                 {"std", diff.empty() ? json(nullptr) : json(st.std)},
                 {"count", st.count}};
    }
    deltas[variants[k].name] = m;
  }
  report["deltas_vs_no_toggle"] = deltas;
  report["timings"] = {{"total_seconds", seconds_since(t0)}, {"workers", worker_count()}};
  return report;
}

const std::vector<std::string>& sweep_metrics() {
  static const std::vector<std::string> m{"pehe_sqrt", "ate_err", "auuc"};
  return m;
}

SweepOutput cmd_sweep(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.sweep_values.empty()) throw ConfigError("sweep_values", "grid must not be empty");
  const auto t0 = Clock::now();
  const std::size_t ns = cfg.seeds.size();
  const std::size_t nv = cfg.sweep_values.size();
  std::vector<SeedResult> results(nv * ns);
  parallel_for(results.size(), [&](std::size_t job) {
    RunConfig c = cfg;
    set_pcr_param(c.pcr, cfg.sweep_param, cfg.sweep_values[job / ns]);
    if (cfg.sweep_param == "lambda") c.lambda_grid.clear();
    results[job] = run_seed(c, cfg.seeds[job % ns]);
  });

  std::ostringstream csv;
  csv << "param,value,seed,metric,score\n";
  json points = json::array();
  for (std::size_t v = 0; v < nv; ++v) {
    json summary = json::object();
    for (const auto& name : sweep_metrics()) {
      std::vector<double> scores;
      for (std::size_t s = 0; s < ns; ++s) {
        const auto m = metric_of(results[v * ns + s].out_of_sample, name);
        csv << cfg.sweep_param << ',' << shortest(cfg.sweep_values[v]) << ',' << cfg.seeds[s] << ',' << name << ','
            << (m ? shortest(*m) : std::string("NA")) << '\n';
        if (m) scores.push_back(*m);
      }
      if (scores.empty()) {
        summary[name] = {{"mean", nullptr}, {"lo90", nullptr}, {"hi90", nullptr}, {"count", 0}};
      } else {
        summary[name] = {{"mean", stats_of(scores).mean},
                         {"lo90", quantile(scores, 0.05)},
                         {"hi90", quantile(scores, 0.95)},
                         {"count", scores.size()}};
      }
    }
    json seeds = json::array();
    for (std::size_t s = 0; s < ns; ++s) seeds.push_back(results[v * ns + s].to_json());
    points.push_back({{"value", cfg.sweep_values[v]}, {"summary", summary}, {"seeds", seeds}});
  }
  SweepOutput out;
  out.report = report_header(cfg, "sweep");
  out.report["param"] = cfg.sweep_param;
  out.report["metrics"] = sweep_metrics();
  out.report["points"] = points;
  out.report["csv_rows"] = nv * ns * sweep_metrics().size();
  out.report["timings"] = {{"total_seconds", seconds_since(t0)}, {"workers", worker_count()}};
  out.csv = csv.str();
  return out;
}

BenchOutput cmd_bench(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  std::ostringstream csv;
  csv << "n,d,repeat,seconds\n";
  json cells = json::array();
  std::vector<double> means_first_d;
  // Timings run serially so cells do not compete for cores.
  for (std::size_t d : cfg.bench_d) {
    for (std::size_t n : cfg.bench_n) {
      std::vector<double> times;
      std::size_t unconverged = 0;
      for (std::size_t rep = 0; rep < cfg.bench_repeats; ++rep) {
        SeededRng rng(mix_seed(mix_seed(cfg.seeds.front(), n), mix_seed(d, rep)));
        Matrix z0(n, d), z1(n, d);
        for (double& v : z0.values()) v = rng.normal();
        for (double& v : z1.values()) v = rng.normal() + 0.5;
        FgwProblem prob;
        prob.cost = pairwise_sq_dist(z0, z1);
        prob.c0 = pairwise_sq_dist(z0);
        prob.c1 = pairwise_sq_dist(z1);
        prob.a.assign(n, 1.0 / static_cast<double>(n));
        prob.b.assign(n, 1.0 / static_cast<double>(n));
        prob.kappa = cfg.pcr.effective_kappa();
        const auto s0 = Clock::now();
        const FgwResult res = fgw_solve(prob, cfg.pcr.fgw);
        const double secs = seconds_since(s0);
        if (!res.converged) ++unconverged;
        times.push_back(secs);
        csv << n << ',' << d << ',' << rep << ',' << shortest(secs) << '\n';
      }
      const Stats st = stats_of(times);
      const boost::math::students_t dist(static_cast<double>(times.size() - 1));
      const double half = boost::math::quantile(boost::math::complement(dist, 0.005)) * st.std /
                          std::sqrt(static_cast<double>(times.size()));
      cells.push_back({{"n", n},
                       {"d", d},
                       {"repeats", times.size()},
                       {"mean_seconds", st.mean},
                       {"std_seconds", st.std},
                       {"variance", st.std * st.std},
                       {"ci99_lo", st.mean - half},
                       {"ci99_hi", st.mean + half},
                       {"min_seconds", *std::min_element(times.begin(), times.end())},
                       {"max_seconds", *std::max_element(times.begin(), times.end())},
                       {"unconverged", unconverged}});
    }
  }
  // Monotone growth in n for each d, on the means.
  bool monotone = true;
  const std::size_t nn = cfg.bench_n.size();
  for (std::size_t k = 0; k < cfg.bench_d.size(); ++k) {
    std::vector<std::pair<std::size_t, double>> by_n;
    for (std::size_t i = 0; i < nn; ++i)
      by_n.emplace_back(cfg.bench_n[i], cells[k * nn + i]["mean_seconds"].get<double>());
    std::sort(by_n.begin(), by_n.end());
    for (std::size_t i = 1; i < by_n.size(); ++i)
      if (by_n[i].first > by_n[i - 1].first && by_n[i].second <= by_n[i - 1].second) monotone = false;
  }
  BenchOutput out;
  out.report = report_header(cfg, "bench");
  out.report["cells"] = cells;
  out.report["monotone_in_n"] = monotone;
  out.report["masses"] = "uniform, n units per group";
  out.report["timings"] = {{"total_seconds", seconds_since(t0)}};
  out.csv = csv.str();
  return out;
}

}  // namespace otcr
