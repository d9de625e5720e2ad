#include "snngrad/neuron.hpp"

#include <cmath>
#include <string>

#include "snngrad/errors.hpp"
#include "snngrad/simd/kernels.hpp"

namespace snn {

void NeuronConfig::validate() const {
  if (!(alpha_v >= 0.0 && alpha_v <= 1.0)) throw ConfigError("alpha_v must lie in [0, 1]");
  if (!(alpha_i >= 0.0 && alpha_i <= 1.0)) throw ConfigError("alpha_i must lie in [0, 1]");
  if (!(beta_v > 0.0)) throw ConfigError("beta_v must be positive");
  if (!(beta_i > 0.0)) throw ConfigError("beta_i must be positive");
  if (!(beta_bias >= 0.0)) throw ConfigError("beta_bias must be non-negative");
  if (!(theta > 0.0)) throw ConfigError("theta must be positive");
}

void NetworkShape::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("network needs at least an input and an output layer");
  for (std::size_t n : layer_sizes) {
    if (n == 0) throw ConfigError("layer sizes must be positive");
  }
  if (horizon == 0) throw ConfigError("horizon must be at least one step");
}

void Parameters::validate(const NetworkShape& shape) const {
  if (layers.size() + 1 != shape.num_layers()) {
    throw ConfigError("parameter layer count " + std::to_string(layers.size()) +
                      " does not match network depth " + std::to_string(shape.num_layers()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.rows() != shape.layer_sizes[l] ||
        layer.weights.cols() != shape.layer_sizes[l + 1] ||
        layer.bias.size() != shape.layer_sizes[l + 1]) {
      throw ConfigError("parameter shapes of layer " + std::to_string(l + 1) +
                        " do not match the network shape");
    }
    for (double w : layer.weights.flat()) {
      if (!std::isfinite(w)) throw ConfigError("non-finite weight in layer " + std::to_string(l + 1));
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) throw ConfigError("non-finite bias in layer " + std::to_string(l + 1));
    }
  }
}

std::size_t Parameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
  return n;
}

ParamGrads ParamGrads::zeros_like(const Parameters& params) {
  ParamGrads g;
  for (const auto& layer : params.layers) {
    g.layers.push_back(LayerParams{RealMatrix(layer.weights.rows(), layer.weights.cols()),
                                   std::vector<double>(layer.bias.size(), 0.0)});
  }
  return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
  if (layers.size() != other.layers.size()) throw ConfigError("gradient layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto dst = layers[l].weights.flat();
    const auto src = other.layers[l].weights.flat();
    if (dst.size() != src.size() || layers[l].bias.size() != other.layers[l].bias.size()) {
      throw ConfigError("gradient shape mismatch");
    }
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    for (std::size_t k = 0; k < layers[l].bias.size(); ++k) layers[l].bias[k] += other.layers[l].bias[k];
  }
  return *this;
}

double ParamGrads::squared_norm() const {
  double sum = 0.0;
  for (const auto& layer : layers) {
    for (double w : layer.weights.flat()) sum += w * w;
    for (double b : layer.bias) sum += b * b;
  }
  return sum;
}

bool ParamGrads::all_finite() const {
  for (const auto& layer : layers) {
    for (double w : layer.weights.flat()) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

std::size_t ForwardTrace::spike_count(std::size_t layer) const {
  std::size_t n = 0;
  for (std::uint8_t s : spikes[layer].flat()) n += s;
  return n;
}

std::size_t ForwardTrace::non_input_spike_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < spikes.size(); ++l) n += spike_count(l);
  return n;
}

double kernel_eps(long tau, const NeuronConfig& cfg) {
  if (tau < 0) return 0.0;
  double sum = 0.0;
  for (long k = 0; k <= tau; ++k) {
    sum += std::pow(cfg.alpha_i, static_cast<double>(k)) *
           std::pow(cfg.alpha_v, static_cast<double>(tau - k));
  }
  return cfg.beta_i * cfg.beta_v * sum;
}

double kernel_eps_star(long tau, const NeuronConfig& cfg) {
  return 0.5 * (kernel_eps(tau + 1, cfg) - kernel_eps(tau - 1, cfg));
}

void check_input(const SpikeMatrix& input, const NetworkShape& shape) {
  shape.validate();
  if (input.rows() != shape.horizon || input.cols() != shape.input_size()) {
    throw ConfigError("input raster is " + std::to_string(input.rows()) + "x" +
                      std::to_string(input.cols()) + ", expected " +
                      std::to_string(shape.horizon) + "x" + std::to_string(shape.input_size()));
  }
  for (std::uint8_t s : input.flat()) {
    if (s > 1) throw ConfigError("input raster must be binary");
  }
}

Parameters zero_parameters(const NetworkShape& shape) {
  Parameters params;
  for (std::size_t l = 0; l + 1 < shape.num_layers(); ++l) {
    params.layers.push_back(LayerParams{
        RealMatrix(shape.layer_sizes[l], shape.layer_sizes[l + 1]),
        std::vector<double>(shape.layer_sizes[l + 1], 0.0)});
  }
  return params;
}

namespace {

ForwardTrace allocate_trace(const SpikeMatrix& input, const NetworkShape& shape) {
  ForwardTrace trace;
  const std::size_t T = shape.horizon;
  trace.spikes.push_back(input);
  trace.potential.emplace_back();
  trace.current.emplace_back();
  for (std::size_t l = 1; l < shape.num_layers(); ++l) {
    const std::size_t n = shape.layer_sizes[l];
    trace.spikes.emplace_back(T, n);
    trace.potential.emplace_back(T, n);
    trace.current.emplace_back(T, n);
  }
  return trace;
}

void fill_last_spike(ForwardTrace& trace) {
  trace.last_spike.clear();
  for (const auto& s : trace.spikes) {
    Matrix<std::int32_t> last(s.rows(), s.cols(), kNoSpike);
    for (std::size_t t = 1; t < s.rows(); ++t) {
      for (std::size_t j = 0; j < s.cols(); ++j) {
        last(t, j) = s(t - 1, j) ? static_cast<std::int32_t>(t - 1) : last(t - 1, j);
      }
    }
    trace.last_spike.push_back(std::move(last));
  }
}

void validate_all(const Parameters& params, const SpikeMatrix& input,
                  const NetworkShape& shape, const NeuronConfig& cfg) {
  cfg.validate();
  check_input(input, shape);
  params.validate(shape);
}

}  // namespace

ForwardTrace forward_rnn(const Parameters& params, const SpikeMatrix& input,
                         const NetworkShape& shape, const NeuronConfig& cfg) {
  validate_all(params, input, shape, cfg);
  const auto& k = simd::active_kernels();
  const simd::LifCoefficients coeffs{cfg.alpha_v, cfg.alpha_i, cfg.beta_v, cfg.beta_i,
                                     cfg.beta_bias};
  const std::size_t T = shape.horizon;
  ForwardTrace trace = allocate_trace(input, shape);

  std::vector<std::uint32_t> active;
  for (std::size_t l = 1; l < shape.num_layers(); ++l) {
    const std::size_t n = shape.layer_sizes[l];
    const auto& layer = params.layers[l - 1];
    const SpikeMatrix& pre = trace.spikes[l - 1];
    SpikeMatrix& S = trace.spikes[l];
    RealMatrix& V = trace.potential[l];
    RealMatrix& I = trace.current[l];

    const std::vector<double> zeros(n, 0.0);
    const std::vector<std::uint8_t> no_spikes(n, 0);
    std::vector<double> syn(n);
    std::vector<std::uint8_t> fired(n, 0);

    for (std::size_t t = 0; t < T; ++t) {
      active.clear();
      const auto pre_row = pre.row(t);
      for (std::size_t i = 0; i < pre_row.size(); ++i) {
        if (pre_row[i]) active.push_back(static_cast<std::uint32_t>(i));
      }
      std::fill(syn.begin(), syn.end(), 0.0);
      k.add_rows(syn.data(), layer.weights.data(), n, active.data(), active.size());

      const bool first = t == 0;
      k.lif_step(coeffs, first ? no_spikes.data() : S.row(t - 1).data(), syn.data(),
                 layer.bias.data(), first ? zeros.data() : I.row(t - 1).data(),
                 first ? zeros.data() : V.row(t - 1).data(), I.row(t).data(),
                 V.row(t).data(), n);
      k.threshold(V.row(t).data(), cfg.theta, S.row(t).data(), n);

      if (shape.single_spike) {
        auto s = S.row(t);
        for (std::size_t j = 0; j < n; ++j) {
          if (fired[j]) s[j] = 0;
          fired[j] |= s[j];
        }
      }
    }
  }
  fill_last_spike(trace);
  return trace;
}

ForwardTrace forward_srm(const Parameters& params, const SpikeMatrix& input,
                         const NetworkShape& shape, const NeuronConfig& cfg) {
  validate_all(params, input, shape, cfg);
  const std::size_t T = shape.horizon;
  ForwardTrace trace = allocate_trace(input, shape);

  std::vector<double> eps(T);
  std::vector<double> current_kernel(T);
  std::vector<double> bias_kernel(T);
  for (std::size_t tau = 0; tau < T; ++tau) {
    eps[tau] = kernel_eps(static_cast<long>(tau), cfg);
    current_kernel[tau] = cfg.beta_i * std::pow(cfg.alpha_i, static_cast<double>(tau));
    bias_kernel[tau] = cfg.beta_bias * std::pow(cfg.alpha_v, static_cast<double>(tau));
  }

  for (std::size_t l = 1; l < shape.num_layers(); ++l) {
    const std::size_t n = shape.layer_sizes[l];
    const std::size_t n_pre = shape.layer_sizes[l - 1];
    const auto& layer = params.layers[l - 1];
    const SpikeMatrix& pre = trace.spikes[l - 1];
    SpikeMatrix& S = trace.spikes[l];
    RealMatrix& V = trace.potential[l];
    RealMatrix& I = trace.current[l];

    for (std::size_t j = 0; j < n; ++j) {
      long last = kNoSpike;
      bool fired = false;
      for (std::size_t t = 0; t < T; ++t) {
        double v = 0.0;
        double cur = 0.0;
        double bias_sum = 0.0;
        for (long tau = last + 1; tau <= static_cast<long>(t); ++tau) {
          const std::size_t lag = t - static_cast<std::size_t>(tau);
          for (std::size_t i = 0; i < n_pre; ++i) {
            if (pre(static_cast<std::size_t>(tau), i)) {
              v += layer.weights(i, j) * eps[lag];
              cur += layer.weights(i, j) * current_kernel[lag];
            }
          }
          bias_sum += bias_kernel[lag];
        }
        v += bias_sum * layer.bias[j];
        V(t, j) = v;
        I(t, j) = cur;
        std::uint8_t s = v >= cfg.theta ? 1 : 0;
        if (shape.single_spike && fired) s = 0;
        S(t, j) = s;
        if (s) {
          last = static_cast<long>(t);
          fired = true;
        }
      }
    }
  }
  fill_last_spike(trace);
  return trace;
}

}  // namespace snn
