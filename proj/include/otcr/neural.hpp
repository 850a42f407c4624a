#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "otcr/matrix.hpp"
#include "otcr/rng.hpp"

namespace otcr {

enum class Activation { Elu, Relu, Identity };

std::string to_string(Activation a);
// Throws ConfigError("activation") for unknown names.
Activation activation_from_string(const std::string& name);

struct Dense {
  Matrix w;               // in x out
  std::vector<double> b;  // out
};

// Named mutable view of one parameter array.
struct ParamBlock {
  std::string name;
  std::span<double> values;
};

// Forward record. Bound to the parameter version it was produced with.
struct Tape {
  std::uint64_t version = 0;
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

struct MlpGrads {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;
  Matrix dx;

  // Flat views in the same order as Mlp::parameters().
  std::vector<std::span<const double>> blocks() const;
};

class Mlp {
 public:
  Mlp() = default;
  // dims = {in, hidden..., out}. Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::vector<std::size_t> dims, Activation act, bool activate_output, SeededRng& rng);
  // Zero-initialised parameters.
  Mlp(std::vector<std::size_t> dims, Activation act, bool activate_output);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  Activation activation() const noexcept { return act_; }
  bool activate_output() const noexcept { return activate_output_; }
  std::size_t input_dim() const noexcept { return dims_.empty() ? 0 : dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.empty() ? 0 : dims_.back(); }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept;

  const Dense& layer(std::size_t l) const { return layers_.at(l); }
  // Mutable access invalidates outstanding tapes.
  Dense& mutable_layer(std::size_t l);
  std::vector<ParamBlock> parameters(const std::string& prefix = "");

  std::uint64_t version() const noexcept { return version_; }

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;
  // Exact reverse-mode gradients of the scalar whose output gradient is dy.
  // Throws StaleTapeError if the tape predates a parameter change or came
  // from a different network.
  MlpGrads backward(const Tape& tape, const Matrix& dy) const;

  nlohmann::json to_json() const;
  // Throws CheckpointError on any structural problem.
  static Mlp from_json(const nlohmann::json& j);

  bool operator==(const Mlp& o) const {
    if (dims_ != o.dims_ || act_ != o.act_ || activate_output_ != o.activate_output_) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l)
      if (!(layers_[l].w == o.layers_[l].w) || layers_[l].b != o.layers_[l].b) return false;
    return true;
  }

 private:
  void touch();
  bool activated(std::size_t l) const { return l + 1 < layers_.size() || activate_output_; }

  std::vector<std::size_t> dims_;
  Activation act_ = Activation::Elu;
  bool activate_output_ = false;
  std::vector<Dense> layers_;
  std::uint64_t version_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

// p <- p * (1 - lr*wd), then the bias-corrected Adam delta. Moments are
// allocated on the first call. Throws NumericalError naming the block when a
// gradient is not finite (nothing is modified in that case) and
// DimensionError when shapes disagree with the state.
void adam_step(std::span<const ParamBlock> params, std::span<const std::span<const double>> grads,
               AdamState& state);

// Tracks the best value of one monitored metric.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience = 30, bool higher_is_better = true,
                        std::string metric = "auuc")
      : patience_(patience), higher_is_better_(higher_is_better), metric_(std::move(metric)) {}

  // Returns true when `value` is a strict improvement.
  bool observe(std::size_t epoch, double value);
  // True once epoch - best_epoch > patience.
  bool should_stop(std::size_t epoch) const;

  bool has_best() const noexcept { return has_best_; }
  double best_metric() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  std::size_t patience() const noexcept { return patience_; }
  const std::string& metric() const noexcept { return metric_; }

 private:
  std::size_t patience_;
  bool higher_is_better_;
  std::string metric_;
  bool has_best_ = false;
  double best_ = 0.0;
  std::size_t best_epoch_ = 0;
};

}  // namespace otcr
