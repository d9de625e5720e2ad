#include "snngrad/optim.hpp"

#include <algorithm>
#include <cmath>

#include "snngrad/errors.hpp"
#include "snngrad/random.hpp"

namespace snn {

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

Parameters init_params(const NetworkShape& shape, std::uint64_t seed, bool init_bias_center,
                       double theta, double weight_scale, double bias_value) {
  shape.validate();
  Rng rng(mix_seed(seed, 0x1417));
  Parameters params = zero_parameters(shape);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const double sd = weight_scale / std::sqrt(static_cast<double>(shape.layer_sizes[l]));
    for (double& w : layer.weights.flat()) w = rng.normal(0.0, sd);
    std::fill(layer.bias.begin(), layer.bias.end(), init_bias_center ? bias_value * theta : 0.0);
  }
  return params;
}

namespace {

template <typename F>
void for_each_value(ParamGrads& g, F&& f) {
  for (auto& layer : g.layers) {
    for (double& w : layer.weights.flat()) f(w);
    for (double& b : layer.bias) f(b);
  }
}

template <typename F>
void for_each_pair(Parameters& p, const ParamGrads& g, F&& f) {
  if (p.layers.size() != g.layers.size()) throw ConfigError("gradient/parameter depth mismatch");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto pw = p.layers[l].weights.flat();
    const auto gw = g.layers[l].weights.flat();
    auto& pb = p.layers[l].bias;
    const auto& gb = g.layers[l].bias;
    if (pw.size() != gw.size() || pb.size() != gb.size()) throw ConfigError("gradient/parameter shape mismatch");
    for (std::size_t k = 0; k < pw.size(); ++k) f(pw[k], gw[k], l, k, false);
    for (std::size_t k = 0; k < pb.size(); ++k) f(pb[k], gb[k], l, k, true);
  }
}

}  // namespace

ParamGrads clip_grads(ParamGrads grads, double grad_clip, ClipMode mode) {
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (mode == ClipMode::value) {
    for_each_value(grads, [&](double& x) { x = std::clamp(x, -grad_clip, grad_clip); });
    return grads;
  }
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > grad_clip) {
    const double scale = grad_clip / norm;
    for_each_value(grads, [&](double& x) { x *= scale; });
  }
  return grads;
}

void sgd_step(Parameters& params, const ParamGrads& grads, const OptimizerState& state) {
  const double lr = state.cfg.learning_rate;
  const double wd = state.cfg.weight_decay;
  for_each_pair(params, grads, [&](double& p, double g, std::size_t, std::size_t, bool) {
    p -= lr * (g + wd * p);
  });
}

void adam_step(Parameters& params, const ParamGrads& grads, OptimizerState& state) {
  const auto& c = state.cfg;
  if (state.m.layers.empty()) {
    Parameters shape_only;
    shape_only.layers = grads.layers;
    state.m = ParamGrads::zeros_like(shape_only);
    state.v = ParamGrads::zeros_like(shape_only);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for_each_pair(params, grads, [&](double& p, double g, std::size_t l, std::size_t k, bool bias) {
    double& m = bias ? state.m.layers[l].bias[k] : state.m.layers[l].weights.flat()[k];
    double& v = bias ? state.v.layers[l].bias[k] : state.v.layers[l].weights.flat()[k];
    const double grad = g + c.weight_decay * p;
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = c.beta2 * v + (1.0 - c.beta2) * grad * grad;
    const double m_hat = m / correct1;
    const double v_hat = v / correct2;
    p -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  });
}

void optimizer_step(Parameters& params, ParamGrads grads, OptimizerState& state) {
  grads = clip_grads(std::move(grads), state.cfg.grad_clip, state.cfg.clip_mode);
  if (state.cfg.kind == OptimizerKind::sgd) {
    sgd_step(params, grads, state);
  } else {
    adam_step(params, grads, state);
  }
}

}  // namespace snn
