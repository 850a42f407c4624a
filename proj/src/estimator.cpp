#include "otcr/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "otcr/error.hpp"
#include "otcr/rng.hpp"

namespace otcr {

namespace {

constexpr const char* kCheckpointFormat = "otcr-checkpoint";
constexpr int kCheckpointVersion = 1;

Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.values().size()));
  return out;
}

std::vector<double> column(const Matrix& m) {
  auto v = m.values();
  return {v.begin(), v.end()};
}

MlpGrads zero_grads(const Mlp& net, std::size_t n) {
  MlpGrads g;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    g.dw.emplace_back(net.layer(l).w.rows(), net.layer(l).w.cols());
    g.db.emplace_back(net.layer(l).b.size(), 0.0);
  }
  g.dx = Matrix(n, net.input_dim());
  return g;
}

struct Groups {
  std::vector<std::size_t> control, treated;
};

Groups groups_of(std::span<const int> t) {
  Groups g;
  for (std::size_t i = 0; i < t.size(); ++i) (t[i] ? g.treated : g.control).push_back(i);
  return g;
}

// Forward a head on a subset, accumulate squared error, scatter dX into dr.
double head_pass(const Mlp& head, const Matrix& r, std::span<const std::size_t> idx, std::span<const double> y,
                 MlpGrads& grads, Matrix* dr) {
  if (idx.empty()) return 0.0;
  Tape tape;
  Matrix yhat = head.forward(r.select_rows(idx), tape);
  Matrix dy(idx.size(), 1);
  double loss = 0.0;
  for (std::size_t p = 0; p < idx.size(); ++p) {
    const double res = yhat(p, 0) - y[idx[p]];
    loss += res * res;
    dy(p, 0) = 2.0 * res;
  }
  grads = head.backward(tape, dy);
  if (dr)
    for (std::size_t p = 0; p < idx.size(); ++p) {
      auto src = grads.dx.row(p);
      auto dst = dr->row(idx[p]);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  return loss;
}

// d/dZ of sum_ik G_ik ||z_i - z_k||^2 for symmetric G.
Matrix within_grad(const Matrix& g, const Matrix& z) {
  Matrix gz = matmul(g, z);
  auto rs = row_sums(g);
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t c = 0; c < z.cols(); ++c) out(i, c) = 4.0 * (rs[i] * z(i, c) - gz(i, c));
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void check_hidden(const std::vector<std::size_t>& h, const char* field) {
  if (h.empty()) throw ConfigError(field, "needs at least one layer");
  for (std::size_t w : h)
    if (w == 0) throw ConfigError(field, "layer widths must be positive");
}

std::vector<std::size_t> concat_dims(std::size_t in, const std::vector<std::size_t>& a,
                                     const std::vector<std::size_t>& b, std::optional<std::size_t> out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), a.begin(), a.end());
  dims.insert(dims.end(), b.begin(), b.end());
  if (out) dims.push_back(*out);
  return dims;
}

// Shared epoch loop. `step` updates the model on a batch; `cate` scores the
// validation set; `keep` snapshots the model on improvement.
template <class Step, class Cate, class Keep>
TrainHistory run_epochs(const PcrConfig& cfg, const CausalDataset& train, const CausalDataset& val, Step step,
                        Cate cate, Keep keep) {
  if (train.size() == 0) throw DataError("train: empty training split");
  if (val.size() == 0) throw DataError("train: empty validation split");
  const std::size_t vt = val.treated_count();
  if (vt == 0 || vt == val.size()) throw DataError("train: validation split needs both groups for AUUC");

  TrainHistory h;
  EarlyStopper stopper(cfg.patience, true, "val_auuc");
  SeededRng shuffler(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffler.shuffle(std::span<std::size_t>(order));
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t disc_steps = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      EmpiricalBatch batch = make_batch(train, std::span<const std::size_t>(order).subspan(s, e - s));
      StepDiagnostics d = step(batch);
      ++h.steps;
      rec.factual += d.factual;
      if (d.discrepancy_skipped) ++h.skipped_discrepancy;
      if (!d.fgw_converged) ++h.fgw_unconverged;
      if (!d.discrepancy_skipped && cfg.lambda > 0.0) {
        rec.discrepancy += d.discrepancy;
        ++disc_steps;
      }
    }
    rec.factual /= static_cast<double>(train.size());
    if (disc_steps) rec.discrepancy /= static_cast<double>(disc_steps);
    const std::vector<double> tau = cate(val.x);
    rec.val_auuc = *auuc(tau, val.t, val.yf);
    h.epochs.push_back(rec);
    if (stopper.observe(epoch, rec.val_auuc)) keep();
    if (stopper.should_stop(epoch)) {
      h.early_stopped = true;
      break;
    }
  }
  h.best_epoch = stopper.best_epoch();
  h.best_val_auuc = stopper.best_metric();
  return h;
}

void sq_dists_to(const Matrix& x, std::size_t i, const Matrix& ref, std::span<const std::size_t> idx,
                 std::vector<std::pair<double, std::size_t>>& out) {
  out.clear();
  for (std::size_t r : idx) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - ref(r, c)) * (x(i, c) - ref(r, c));
    out.emplace_back(s, r);
  }
}

double mean_of_nearest(std::vector<std::pair<double, std::size_t>>& d, std::size_t k, std::span<const double> y) {
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  double s = 0.0;
  for (std::size_t p = 0; p < k; ++p) s += y[d[p].second];
  return s / static_cast<double>(k);
}

}  // namespace

void PcrConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "must be finite and >= 0");
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw ConfigError("kappa", "must lie in [0, 1]");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio", "must lie in (0, 1]");
  if (batch_size < 2) throw ConfigError("batch_size", "must be at least 2");
  if (max_epochs < 1) throw ConfigError("max_epochs", "must be at least 1");
  check_hidden(psi_hidden, "psi_hidden");
  check_hidden(head_hidden, "head_hidden");
  adam.validate();
  if (fgw.max_iters < 1) throw ConfigError("fgw_max_iters", "must be at least 1");
  if (!(fgw.tol >= 0.0)) throw ConfigError("fgw_tol", "must be >= 0");
}

nlohmann::json PcrConfig::to_json() const {
  return {{"lambda", lambda},
          {"kappa", kappa},
          {"ratio", ratio},
          {"use_lpr", use_lpr},
          {"use_isp", use_isp},
          {"isp_centered", isp_centered},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"psi_hidden", psi_hidden},
          {"head_hidden", head_hidden},
          {"activation", to_string(activation)},
          {"lr", adam.lr},
          {"weight_decay", adam.weight_decay},
          {"adam_beta1", adam.beta1},
          {"adam_beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"fgw_max_iters", fgw.max_iters},
          {"fgw_tol", fgw.tol}};
}

PcrConfig PcrConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
  PcrConfig c;
  const nlohmann::json known = c.to_json();
  for (auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError(k, "unknown model setting");
    try {
      if (k == "lambda") c.lambda = v.get<double>();
      else if (k == "kappa") c.kappa = v.get<double>();
      else if (k == "ratio") c.ratio = v.get<double>();
      else if (k == "use_lpr") c.use_lpr = v.get<bool>();
      else if (k == "use_isp") c.use_isp = v.get<bool>();
      else if (k == "isp_centered") c.isp_centered = v.get<bool>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "max_epochs") c.max_epochs = v.get<std::size_t>();
      else if (k == "patience") c.patience = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "psi_hidden") c.psi_hidden = v.get<std::vector<std::size_t>>();
      else if (k == "head_hidden") c.head_hidden = v.get<std::vector<std::size_t>>();
      else if (k == "activation") c.activation = activation_from_string(v.get<std::string>());
      else if (k == "lr") c.adam.lr = v.get<double>();
      else if (k == "weight_decay") c.adam.weight_decay = v.get<double>();
      else if (k == "adam_beta1") c.adam.beta1 = v.get<double>();
      else if (k == "adam_beta2") c.adam.beta2 = v.get<double>();
      else if (k == "adam_eps") c.adam.eps = v.get<double>();
      else if (k == "fgw_max_iters") c.fgw.max_iters = v.get<std::size_t>();
      else if (k == "fgw_tol") c.fgw.tol = v.get<double>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(k, "has the wrong type");
    }
  }
  return c;
}

std::string PcrConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs)
    ep.push_back({{"epoch", e.epoch}, {"factual", e.factual}, {"discrepancy", e.discrepancy}, {"val_auuc", e.val_auuc}});
  return {{"epochs", ep},
          {"best_epoch", best_epoch},
          {"best_val_auuc", best_val_auuc},
          {"early_stopped", early_stopped},
          {"steps", steps},
          {"skipped_discrepancy", skipped_discrepancy},
          {"fgw_unconverged", fgw_unconverged}};
}

PcrModel make_model(const PcrConfig& cfg, std::size_t input_dim) {
  cfg.validate();
  if (input_dim == 0) throw DimensionError("make_model: zero covariate dimension");
  SeededRng rng(mix_seed(cfg.seed, 1));
  PcrModel m;
  m.psi = Mlp(concat_dims(input_dim, cfg.psi_hidden, {}, std::nullopt), cfg.activation, true, rng);
  const std::size_t rep = cfg.psi_hidden.back();
  m.phi0 = Mlp(concat_dims(rep, cfg.head_hidden, {}, 1), cfg.activation, false, rng);
  m.phi1 = Mlp(concat_dims(rep, cfg.head_hidden, {}, 1), cfg.activation, false, rng);
  m.adam = AdamState(cfg.adam);
  return m;
}

EmpiricalBatch make_batch(const CausalDataset& ds, std::span<const std::size_t> idx) {
  EmpiricalBatch b;
  b.x = ds.x.select_rows(idx);
  for (std::size_t i : idx) {
    b.t.push_back(ds.t.at(i));
    b.yf.push_back(ds.yf.at(i));
  }
  return b;
}

FactualLoss factual_loss(const PcrModel& model, const EmpiricalBatch& batch) {
  Matrix r = model.psi.forward(batch.x);
  Groups g = groups_of(batch.t);
  FactualLoss out;
  out.treated_missing = g.treated.empty();
  out.control_missing = g.control.empty();
  MlpGrads unused;
  out.loss = head_pass(model.phi1, r, g.treated, batch.yf, unused, nullptr) +
             head_pass(model.phi0, r, g.control, batch.yf, unused, nullptr);
  return out;
}

Discrepancy pcr_discrepancy(const Matrix& r_control, const Matrix& r_treated, const PcrConfig& cfg) {
  if (r_control.rows() < 2 || r_treated.rows() < 2)
    throw DataError("pcr_discrepancy: each group needs at least 2 units");
  if (r_control.cols() != r_treated.cols()) throw DimensionError("pcr_discrepancy: representation widths differ");
  Discrepancy d;
  d.projector = fit_projector(vstack(r_control, r_treated), cfg.effective_ratio(), cfg.isp_centered);
  const Matrix z0 = project(r_control, d.projector);
  const Matrix z1 = project(r_treated, d.projector);
  d.problem.cost = pairwise_sq_dist(z0, z1);
  d.problem.c0 = pairwise_sq_dist(z0);
  d.problem.c1 = pairwise_sq_dist(z1);
  d.problem.a.assign(z0.rows(), 1.0 / static_cast<double>(z0.rows()));
  d.problem.b.assign(z1.rows(), 1.0 / static_cast<double>(z1.rows()));
  d.problem.kappa = cfg.effective_kappa();
  d.solve = fgw_solve(d.problem, cfg.fgw);
  d.value = d.solve.objective;
  return d;
}

Discrepancy pcr_discrepancy(const PcrModel& model, const EmpiricalBatch& batch, const PcrConfig& cfg) {
  Matrix r = model.psi.forward(batch.x);
  Groups g = groups_of(batch.t);
  return pcr_discrepancy(r.select_rows(g.control), r.select_rows(g.treated), cfg);
}

FixedPlanValue fixed_plan_discrepancy(const Matrix& r_control, const Matrix& r_treated, const Matrix& basis,
                                      const Matrix& plan, double kappa, bool with_grad) {
  const Matrix z0 = matmul(r_control, basis);
  const Matrix z1 = matmul(r_treated, basis);
  if (plan.rows() != z0.rows() || plan.cols() != z1.rows())
    throw DimensionError("fixed_plan_discrepancy: plan shape does not match the groups");
  const Matrix c0 = pairwise_sq_dist(z0);
  const Matrix c1 = pairwise_sq_dist(z1);
  FixedPlanValue out;
  out.value = kappa * frobenius_dot(pairwise_sq_dist(z0, z1), plan) + (1.0 - kappa) * gw_cost(c0, c1, plan);
  if (!with_grad) return out;

  const auto p = row_sums(plan);
  const auto q = col_sums(plan);
  const Matrix pz1 = matmul(plan, z1);
  const Matrix ptz0 = matmul_tn(plan, z0);
  Matrix dz0(z0.rows(), z0.cols()), dz1(z1.rows(), z1.cols());
  for (std::size_t i = 0; i < z0.rows(); ++i)
    for (std::size_t c = 0; c < z0.cols(); ++c) dz0(i, c) = 2.0 * kappa * (p[i] * z0(i, c) - pz1(i, c));
  for (std::size_t j = 0; j < z1.rows(); ++j)
    for (std::size_t c = 0; c < z1.cols(); ++c) dz1(j, c) = 2.0 * kappa * (q[j] * z1(j, c) - ptz0(j, c));

  if (kappa < 1.0) {
    // Weights on C0 and C1 entries: 2 C o (m m^T) - 2 pi C' pi^T.
    Matrix g0 = -2.0 * matmul_nt(matmul(plan, c1), plan);
    Matrix g1 = -2.0 * matmul(matmul_tn(plan, c0), plan);
    for (std::size_t i = 0; i < g0.rows(); ++i)
      for (std::size_t k = 0; k < g0.cols(); ++k) g0(i, k) += 2.0 * c0(i, k) * p[i] * p[k];
    for (std::size_t j = 0; j < g1.rows(); ++j)
      for (std::size_t l = 0; l < g1.cols(); ++l) g1(j, l) += 2.0 * c1(j, l) * q[j] * q[l];
    dz0 = dz0 + (1.0 - kappa) * within_grad(g0, z0);
    dz1 = dz1 + (1.0 - kappa) * within_grad(g1, z1);
  }
  out.grad_control = matmul_nt(dz0, basis);
  out.grad_treated = matmul_nt(dz1, basis);
  return out;
}

std::vector<std::span<const double>> PcrGradients::blocks() const {
  auto out = psi.blocks();
  for (auto* g : {&phi0, &phi1}) {
    auto b = g->blocks();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<ParamBlock> model_parameters(PcrModel& model) {
  auto out = model.psi.parameters("psi.");
  auto a = model.phi0.parameters("phi0.");
  auto b = model.phi1.parameters("phi1.");
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

PcrGradients pcr_gradients(const PcrModel& model, const EmpiricalBatch& batch, const PcrConfig& cfg) {
  if (batch.x.rows() != batch.t.size() || batch.yf.size() != batch.t.size() || batch.t.empty())
    throw DimensionError("pcr_gradients: malformed batch");
  Tape tape;
  const Matrix r = model.psi.forward(batch.x, tape);
  const Groups g = groups_of(batch.t);
  PcrGradients out;
  out.phi0 = zero_grads(model.phi0, 0);
  out.phi1 = zero_grads(model.phi1, 0);
  Matrix dr(r.rows(), r.cols());

  StepDiagnostics& d = out.diag;
  d.group_missing = g.treated.empty() || g.control.empty();
  d.factual = head_pass(model.phi1, r, g.treated, batch.yf, out.phi1, &dr) +
              head_pass(model.phi0, r, g.control, batch.yf, out.phi0, &dr);
  if (!std::isfinite(d.factual)) throw NumericalError("pcr_step: factual loss is not finite");

  if (cfg.lambda > 0.0) {
    if (g.treated.size() < 2 || g.control.size() < 2) {
      d.discrepancy_skipped = true;
    } else {
      const Matrix r0 = r.select_rows(g.control), r1 = r.select_rows(g.treated);
      const Discrepancy disc = pcr_discrepancy(r0, r1, cfg);
      d.discrepancy = disc.value;
      d.fgw_iterations = disc.solve.plan.iterations;
      d.fgw_converged = disc.solve.converged;
      if (!std::isfinite(d.discrepancy)) throw NumericalError("pcr_step: discrepancy is not finite");
      const FixedPlanValue fp =
          fixed_plan_discrepancy(r0, r1, disc.projector.basis, disc.solve.plan.plan, cfg.effective_kappa());
      for (std::size_t p = 0; p < g.control.size(); ++p) {
        auto dst = dr.row(g.control[p]);
        auto src = fp.grad_control.row(p);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += cfg.lambda * src[c];
      }
      for (std::size_t p = 0; p < g.treated.size(); ++p) {
        auto dst = dr.row(g.treated[p]);
        auto src = fp.grad_treated.row(p);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += cfg.lambda * src[c];
      }
    }
  }
  d.total = d.factual + cfg.lambda * d.discrepancy;
  out.psi = model.psi.backward(tape, dr);
  return out;
}

StepDiagnostics pcr_step(PcrModel& model, const EmpiricalBatch& batch, const PcrConfig& cfg) {
  PcrGradients g = pcr_gradients(model, batch, cfg);
  auto params = model_parameters(model);
  adam_step(params, g.blocks(), model.adam);
  return g.diag;
}

PcrModel train_pcr(const PcrConfig& cfg, const CausalDataset& train, const CausalDataset& val) {
  cfg.validate();
  train.validate(false);
  val.validate(false);
  if (val.dim() != train.dim()) throw DimensionError("train_pcr: train and validation widths differ");
  PcrModel model = make_model(cfg, train.dim());
  Mlp best_psi = model.psi, best_phi0 = model.phi0, best_phi1 = model.phi1;
  TrainHistory h = run_epochs(
      cfg, train, val, [&](const EmpiricalBatch& b) { return pcr_step(model, b, cfg); },
      [&](const Matrix& x) { return predict_cate(model, x); },
      [&] {
        best_psi = model.psi;
        best_phi0 = model.phi0;
        best_phi1 = model.phi1;
      });
  model.psi = std::move(best_psi);
  model.phi0 = std::move(best_phi0);
  model.phi1 = std::move(best_phi1);
  model.history = std::move(h);
  return model;
}

std::vector<double> PotentialOutcomes::cate() const {
  std::vector<double> out(mu0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu1[i] - mu0[i];
  return out;
}

PotentialOutcomes predict_outcomes(const PcrModel& model, const Matrix& x) {
  const Matrix r = model.psi.forward(x);
  return {column(model.phi0.forward(r)), column(model.phi1.forward(r))};
}

std::vector<double> predict_cate(const PcrModel& model, const Matrix& x) { return predict_outcomes(model, x).cate(); }

EvalReport evaluate(const PcrModel& model, const CausalDataset& ds) {
  const PotentialOutcomes po = predict_outcomes(model, ds.x);
  return evaluate_predictions(po.mu0, po.mu1, ds);
}

nlohmann::json BoundReport::to_json() const {
  return {{"eps_f_t1", eps_f_t1}, {"eps_f_t0", eps_f_t0}, {"discrepancy", discrepancy}, {"pehe_sq", pehe_sq}};
}

BoundReport bound_report(const PcrModel& model, const CausalDataset& ds, const PcrConfig& cfg) {
  if (!ds.has_tau()) throw DataError("bound_report: needs counterfactual truth");
  ds.validate();
  const Matrix r = model.psi.forward(ds.x);
  const PotentialOutcomes po{column(model.phi0.forward(r)), column(model.phi1.forward(r))};
  const Groups g = groups_of(ds.t);
  BoundReport b;
  for (std::size_t i : g.treated) b.eps_f_t1 += std::pow(po.mu1[i] - ds.yf[i], 2);
  for (std::size_t i : g.control) b.eps_f_t0 += std::pow(po.mu0[i] - ds.yf[i], 2);
  b.eps_f_t1 /= static_cast<double>(g.treated.size());
  b.eps_f_t0 /= static_cast<double>(g.control.size());
  b.discrepancy = pcr_discrepancy(r.select_rows(g.control), r.select_rows(g.treated), cfg).value;
  const double p = pehe(po.cate(), ds.tau());
  b.pehe_sq = p * p;
  return b;
}

SLearner train_s_learner(const PcrConfig& cfg, const CausalDataset& train, const CausalDataset& val) {
  cfg.validate();
  SeededRng rng(mix_seed(cfg.seed, 1));
  SLearner m;
  m.net = Mlp(concat_dims(train.dim() + 1, cfg.psi_hidden, cfg.head_hidden, 1), cfg.activation, false, rng);
  AdamState adam(cfg.adam);
  Mlp best = m.net;
  auto augment = [](const Matrix& x, std::span<const int> t) {
    Matrix a(x.rows(), x.cols() + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) a(i, j) = x(i, j);
      a(i, x.cols()) = t[i];
    }
    return a;
  };
  m.history = run_epochs(
      cfg, train, val,
      [&](const EmpiricalBatch& b) {
        Tape tape;
        Matrix yhat = m.net.forward(augment(b.x, b.t), tape);
        Matrix dy(b.t.size(), 1);
        StepDiagnostics d;
        for (std::size_t i = 0; i < b.t.size(); ++i) {
          const double res = yhat(i, 0) - b.yf[i];
          d.factual += res * res;
          dy(i, 0) = 2.0 * res;
        }
        if (!std::isfinite(d.factual)) throw NumericalError("s_learner: factual loss is not finite");
        d.total = d.factual;
        MlpGrads g = m.net.backward(tape, dy);
        auto ps = m.net.parameters("s.");
        adam_step(ps, g.blocks(), adam);
        return d;
      },
      [&](const Matrix& x) { return predict_outcomes(m, x).cate(); }, [&] { best = m.net; });
  m.net = std::move(best);
  return m;
}

PotentialOutcomes predict_outcomes(const SLearner& model, const Matrix& x) {
  if (x.cols() + 1 != model.net.input_dim()) throw DimensionError("s_learner: covariate width mismatch");
  Matrix a(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) a(i, j) = x(i, j);
  PotentialOutcomes po;
  po.mu0 = column(model.net.forward(a));
  for (std::size_t i = 0; i < x.rows(); ++i) a(i, x.cols()) = 1.0;
  po.mu1 = column(model.net.forward(a));
  return po;
}

TLearner train_t_learner(const PcrConfig& cfg, const CausalDataset& train, const CausalDataset& val) {
  cfg.validate();
  const std::size_t nt = train.treated_count();
  if (nt == 0) throw DataError("t_learner: no treated units to train the treated head");
  if (nt == train.size()) throw DataError("t_learner: no control units to train the control head");
  SeededRng rng(mix_seed(cfg.seed, 1));
  TLearner m;
  const auto dims = concat_dims(train.dim(), cfg.psi_hidden, cfg.head_hidden, 1);
  m.net0 = Mlp(dims, cfg.activation, false, rng);
  m.net1 = Mlp(dims, cfg.activation, false, rng);
  AdamState adam(cfg.adam);
  Mlp best0 = m.net0, best1 = m.net1;
  m.history = run_epochs(
      cfg, train, val,
      [&](const EmpiricalBatch& b) {
        const Groups g = groups_of(b.t);
        MlpGrads g0 = zero_grads(m.net0, 0), g1 = zero_grads(m.net1, 0);
        StepDiagnostics d;
        d.group_missing = g.treated.empty() || g.control.empty();
        d.factual = head_pass(m.net1, b.x, g.treated, b.yf, g1, nullptr) +
                    head_pass(m.net0, b.x, g.control, b.yf, g0, nullptr);
        if (!std::isfinite(d.factual)) throw NumericalError("t_learner: factual loss is not finite");
        d.total = d.factual;
        auto ps = m.net0.parameters("t0.");
        auto p1 = m.net1.parameters("t1.");
        ps.insert(ps.end(), p1.begin(), p1.end());
        auto gs = g0.blocks();
        auto b1 = g1.blocks();
        gs.insert(gs.end(), b1.begin(), b1.end());
        adam_step(ps, gs, adam);
        return d;
      },
      [&](const Matrix& x) { return predict_outcomes(m, x).cate(); },
      [&] {
        best0 = m.net0;
        best1 = m.net1;
      });
  m.net0 = std::move(best0);
  m.net1 = std::move(best1);
  return m;
}

PotentialOutcomes predict_outcomes(const TLearner& model, const Matrix& x) {
  return {column(model.net0.forward(x)), column(model.net1.forward(x))};
}

KnnResult knn_cate(std::size_t k, const CausalDataset& ds) {
  if (k == 0) throw ConfigError("k", "must be at least 1");
  ds.validate();
  const Groups g = groups_of(ds.t);
  KnnResult out;
  out.k_used = std::min({k, g.treated.size(), g.control.size()});
  out.clamped = out.k_used < k;
  out.tau.resize(ds.size());
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& other = ds.t[i] ? g.control : g.treated;
    sq_dists_to(ds.x, i, ds.x, other, dist);
    const double imputed = mean_of_nearest(dist, std::min(k, other.size()), ds.yf);
    out.tau[i] = ds.t[i] ? ds.yf[i] - imputed : imputed - ds.yf[i];
  }
  return out;
}

PotentialOutcomes knn_outcomes(std::size_t k, const CausalDataset& reference, const Matrix& x, bool* clamped) {
  if (k == 0) throw ConfigError("k", "must be at least 1");
  reference.validate();
  if (x.cols() != reference.dim()) throw DimensionError("knn_outcomes: covariate width mismatch");
  const Groups g = groups_of(reference.t);
  const std::size_t k0 = std::min(k, g.control.size()), k1 = std::min(k, g.treated.size());
  if (clamped) *clamped = k0 < k || k1 < k;
  PotentialOutcomes po;
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    sq_dists_to(x, i, reference.x, g.control, dist);
    po.mu0.push_back(mean_of_nearest(dist, k0, reference.yf));
    sq_dists_to(x, i, reference.x, g.treated, dist);
    po.mu1.push_back(mean_of_nearest(dist, k1, reference.yf));
  }
  return po;
}

void save_checkpoint(const PcrModel& model, const PcrConfig& cfg, const std::string& path) {
  nlohmann::json j = {{"format", kCheckpointFormat},
                      {"format_version", kCheckpointVersion},
                      {"config", cfg.to_json()},
                      {"config_hash", cfg.hash()},
                      {"psi", model.psi.to_json()},
                      {"phi0", model.phi0.to_json()},
                      {"phi1", model.phi1.to_json()},
                      {"history", model.history.to_json()}};
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out << j.dump();
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw CheckpointError("not an otcr checkpoint");
  if (j.value("format_version", -1) != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version");
  Checkpoint c;
  try {
    c.config = PcrConfig::from_json(j.at("config"));
    c.config_hash = j.at("config_hash").get<std::string>();
  } catch (const Error& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  if (c.config.hash() != c.config_hash) throw CheckpointError("checkpoint config hash mismatch");
  for (const char* key : {"psi", "phi0", "phi1"})
    if (!j.contains(key)) throw CheckpointError(std::string("checkpoint lacks network ") + key);
  c.model.psi = Mlp::from_json(j["psi"]);
  c.model.phi0 = Mlp::from_json(j["phi0"]);
  c.model.phi1 = Mlp::from_json(j["phi1"]);
  if (c.model.phi0.input_dim() != c.model.psi.output_dim() || c.model.phi1.input_dim() != c.model.psi.output_dim() ||
      c.model.phi0.output_dim() != 1 || c.model.phi1.output_dim() != 1)
    throw CheckpointError("checkpoint networks do not fit together");
  c.model.adam = AdamState(c.config.adam);
  return c;
}

}  // namespace otcr
