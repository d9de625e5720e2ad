#pragma once

#include <cstdint>
#include <string>

#include "snngrad/neuron.hpp"

namespace snn {

enum class OptimizerKind { sgd, adam };
enum class ClipMode { norm, value };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double grad_clip = 1e5;
  ClipMode clip_mode = ClipMode::norm;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct OptimizerState {
  OptimizerConfig cfg;
  ParamGrads m;  // Adam first moment
  ParamGrads v;  // Adam second moment
  std::uint64_t step = 0;

  explicit OptimizerState(const OptimizerConfig& config) : cfg(config) {}
};

OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

// Weights ~ N(0, (weight_scale)^2 / fan_in); biases 0, or bias_value * theta
// with init_bias_center.
Parameters init_params(const NetworkShape& shape, std::uint64_t seed, bool init_bias_center,
                       double theta = 1.0, double weight_scale = 1.0, double bias_value = 0.5);

// Norm mode rescales the whole gradient vector to L2 norm grad_clip when it is
// longer; value mode clamps each entry to [-grad_clip, grad_clip].
ParamGrads clip_grads(ParamGrads grads, double grad_clip, ClipMode mode = ClipMode::norm);

// p <- p - lr (g + weight_decay p)
void sgd_step(Parameters& params, const ParamGrads& grads, const OptimizerState& state);
void adam_step(Parameters& params, const ParamGrads& grads, OptimizerState& state);

// Clips with the configured mode and applies the configured optimizer.
void optimizer_step(Parameters& params, ParamGrads grads, OptimizerState& state);

}  // namespace snn
