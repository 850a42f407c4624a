#include "otcr/neural.hpp"

#include <atomic>
#include <cmath>

#include "otcr/error.hpp"

namespace otcr {

namespace {

std::atomic<std::uint64_t> g_version{0};

std::uint64_t next_version() { return ++g_version; }

double act_value(Activation a, double z) {
  switch (a) {
    case Activation::Elu: return z > 0.0 ? z : std::expm1(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
  }
  return z;
}

double act_slope(Activation a, double z) {
  switch (a) {
    case Activation::Elu: return z > 0.0 ? 1.0 : std::exp(z);
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw DimensionError("Mlp: need at least input and output widths");
  for (std::size_t d : dims)
    if (d == 0) throw DimensionError("Mlp: layer width must be positive");
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Elu: return "elu";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::Elu;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("activation", "unknown activation '" + name + "' (expected elu, relu or identity)");
}

std::vector<std::span<const double>> MlpGrads::blocks() const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < dw.size(); ++l) {
    out.emplace_back(dw[l].values());
    out.emplace_back(db[l]);
  }
  return out;
}

Mlp::Mlp(std::vector<std::size_t> dims, Activation act, bool activate_output)
    : dims_(std::move(dims)), act_(act), activate_output_(activate_output) {
  check_dims(dims_);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
    layers_.push_back({Matrix(dims_[l], dims_[l + 1]), std::vector<double>(dims_[l + 1], 0.0)});
  version_ = next_version();
}

Mlp::Mlp(std::vector<std::size_t> dims, Activation act, bool activate_output, SeededRng& rng)
    : Mlp(std::move(dims), act, activate_output) {
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.w.rows()));
    for (double& w : layer.w.values()) w = rng.uniform(-bound, bound);
    for (double& b : layer.b) b = rng.uniform(-bound, bound);
  }
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.w.values().size() + layer.b.size();
  return n;
}

void Mlp::touch() { version_ = next_version(); }

Dense& Mlp::mutable_layer(std::size_t l) {
  touch();
  return layers_.at(l);
}

std::vector<ParamBlock> Mlp::parameters(const std::string& prefix) {
  touch();
  std::vector<ParamBlock> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string tag = prefix + "layer" + std::to_string(l);
    out.push_back({tag + ".w", layers_[l].w.values()});
    out.push_back({tag + ".b", layers_[l].b});
  }
  return out;
}

Matrix Mlp::forward(const Matrix& x) const {
  Tape scratch;
  return forward(x, scratch);
}

Matrix Mlp::forward(const Matrix& x, Tape& tape) const {
  if (layers_.empty()) throw DimensionError("Mlp::forward on an empty network");
  if (x.cols() != input_dim()) {
    throw DimensionError("Mlp::forward: input has " + std::to_string(x.cols()) +
                         " columns, network expects " + std::to_string(input_dim()));
  }
  tape.version = version_;
  tape.inputs.clear();
  tape.pre.clear();
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Dense& layer = layers_[l];
    Matrix z = matmul(h, layer.w);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto row = z.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.b[j];
    }
    Matrix a = z;
    if (activated(l))
      for (double& v : a.values()) v = act_value(act_, v);
    tape.inputs.push_back(std::move(h));
    tape.pre.push_back(std::move(z));
    h = std::move(a);
  }
  return h;
}

MlpGrads Mlp::backward(const Tape& tape, const Matrix& dy) const {
  if (tape.version != version_ || tape.inputs.size() != layers_.size())
    throw StaleTapeError("Mlp::backward: tape does not belong to the current parameters");
  const std::size_t n = tape.inputs.front().rows();
  if (dy.rows() != n || dy.cols() != output_dim())
    throw DimensionError("Mlp::backward: output gradient shape mismatch");

  MlpGrads g;
  g.dw.resize(layers_.size());
  g.db.resize(layers_.size());
  Matrix delta = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (activated(l)) {
      auto dv = delta.values();
      auto zv = tape.pre[l].values();
      for (std::size_t k = 0; k < dv.size(); ++k) dv[k] *= act_slope(act_, zv[k]);
    }
    g.dw[l] = matmul_tn(tape.inputs[l], delta);
    g.db[l] = col_sums(delta);
    delta = matmul_nt(delta, layers_[l].w);
  }
  g.dx = std::move(delta);
  return g;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json j;
  j["dims"] = dims_;
  j["activation"] = to_string(act_);
  j["activate_output"] = activate_output_;
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : layers_) {
    auto w = layer.w.values();
    j["layers"].push_back({{"w", std::vector<double>(w.begin(), w.end())}, {"b", layer.b}});
  }
  return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  try {
    auto dims = j.at("dims").get<std::vector<std::size_t>>();
    Mlp net(dims, activation_from_string(j.at("activation").get<std::string>()),
            j.at("activate_output").get<bool>());
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != net.layers_.size())
      throw CheckpointError("network has wrong number of layers");
    for (std::size_t l = 0; l < net.layers_.size(); ++l) {
      auto w = layers[l].at("w").get<std::vector<double>>();
      auto b = layers[l].at("b").get<std::vector<double>>();
      Dense& dst = net.layers_[l];
      if (w.size() != dst.w.values().size() || b.size() != dst.b.size())
        throw CheckpointError("layer " + std::to_string(l) + " has wrong parameter count");
      dst.w = Matrix(dst.w.rows(), dst.w.cols(), std::move(w));
      for (double v : b)
        if (!std::isfinite(v)) throw CheckpointError("non-finite bias");
      dst.b = std::move(b);
    }
    net.touch();
    return net;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed network: ") + e.what());
  }
}

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive");
  if (!(weight_decay >= 0.0) || lr * weight_decay >= 1.0)
    throw ConfigError("weight_decay", "must be >= 0 with lr*weight_decay < 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps", "must be positive");
}

void adam_step(std::span<const ParamBlock> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameter blocks but " +
                         std::to_string(grads.size()) + " gradient blocks");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].values.size() != grads[b].size())
      throw DimensionError("adam_step: gradient shape mismatch for " + params[b].name);
    for (double g : grads[b])
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient in " + params[b].name);
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.values.size(), 0.0);
      state.v.emplace_back(p.values.size(), 0.0);
    }
  } else if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: parameter layout changed between steps");
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b].values;
    auto& m = state.m[b];
    auto& v = state.v[b];
    if (m.size() != p.size()) throw DimensionError("adam_step: moment shape mismatch for " + params[b].name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[b][k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      p[k] = p[k] * decay - c.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
    }
    for (double x : p)
      if (!std::isfinite(x)) throw NumericalError("adam_step: parameters of " + params[b].name + " became non-finite");
  }
}

bool EarlyStopper::observe(std::size_t epoch, double value) {
  if (!std::isfinite(value)) return false;
  const bool better = !has_best_ || (higher_is_better_ ? value > best_ : value < best_);
  if (better) {
    has_best_ = true;
    best_ = value;
    best_epoch_ = epoch;
  }
  return better;
}

bool EarlyStopper::should_stop(std::size_t epoch) const {
  return has_best_ && epoch > best_epoch_ && epoch - best_epoch_ > patience_;
}

}  // namespace otcr
