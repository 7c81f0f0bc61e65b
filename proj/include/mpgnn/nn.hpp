#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpgnn/matrix.hpp"

namespace mpgnn {

// Slope of the leaky rectifier used for every hidden layer.
constexpr double kLeakySlope = 0.01;

enum class Activation { None, Softmax, Sigmoid };

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;  // always the same shape as value
};

// Flat registry of named trainable arrays with gradient buffers.
class ParamSet {
 public:
  std::size_t add(std::string name, int rows, int cols);

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  std::optional<std::size_t> find(const std::string& name) const;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  void zero_grad();
  bool grads_finite() const;

  // Weights ("*.W") drawn uniformly in +-sqrt(6 / fan_in), biases zero.
  // Each array draws from its own stream keyed by (seed, name).
  void init(std::uint64_t seed);
  void set_zero();

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Param> params_;
};

// Activations recorded by Mlp::forward for the matching backward call.
struct MlpCache {
  std::vector<Matrix> inputs;  // input of each affine layer
  std::vector<Matrix> pre;     // pre-activation of each affine layer
  Matrix output;
  bool recorded = false;
};

// Dense MLP whose weights live in a ParamSet. Layer i maps widths[i] -> widths[i+1];
// hidden layers use the leaky rectifier, the last layer `output` activation.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& params, const std::string& prefix, std::vector<int> widths, Activation output);

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  const std::vector<int>& widths() const noexcept { return widths_; }
  Activation output_activation() const noexcept { return output_; }
  std::size_t layer_count() const noexcept { return widths_.size() - 1; }
  std::size_t weight_index(std::size_t layer) const { return first_param_ + 2 * layer; }
  std::size_t bias_index(std::size_t layer) const { return first_param_ + 2 * layer + 1; }

  Matrix forward(const ParamSet& params, const Matrix& x) const;
  Matrix forward(const ParamSet& params, const Matrix& x, MlpCache& cache) const;

  // Accumulates parameter gradients and returns dLoss/dx.
  // Throws StateError if cache holds no recorded forward.
  Matrix backward(ParamSet& params, const MlpCache& cache, const Matrix& d_output) const;

 private:
  Matrix run(const ParamSet& params, const Matrix& x, MlpCache* cache) const;

  std::vector<int> widths_;
  Activation output_ = Activation::None;
  std::size_t first_param_ = 0;
};

void softmax_rows(Matrix& z);
void sigmoid_inplace(Matrix& z);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer. step() applies the update and zeroes gradients.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& params, AdamConfig cfg);

  void step(ParamSet& params);

  const AdamConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  long long step_count() const noexcept { return steps_; }

  nlohmann::json to_json() const;
  // Throws ContractViolation if the stored moment shapes do not match params.
  static Adam from_json(const nlohmann::json& j, const ParamSet& params);

 private:
  AdamConfig cfg_;
  long long steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const ParamSet& params);
// Loads values into an already-shaped ParamSet; rejects missing names and shape mismatches.
void params_from_json(const nlohmann::json& j, ParamSet& params);

}  // namespace mpgnn
