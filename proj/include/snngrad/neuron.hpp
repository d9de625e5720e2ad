#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "snngrad/matrix.hpp"

namespace snn {

// Decay/scale coefficients of the discrete-time current-based LIF neuron.
// alpha_v = 1, alpha_i = 0 gives the plain IF neuron; alpha_v = alpha_i
// gives the alpha-shaped PSP; alpha_v = alpha_i = 1 the linear PSP.
struct NeuronConfig {
  double alpha_v = 0.95;
  double alpha_i = 0.95;
  double beta_v = 1.0;
  double beta_i = 1.0;
  double beta_bias = 1.0;
  double theta = 1.0;

  void validate() const;
};

struct NetworkShape {
  std::vector<std::size_t> layer_sizes;  // input first, output last
  std::size_t horizon = 100;             // number of time steps T
  bool single_spike = false;             // at most one spike per neuron

  void validate() const;
  std::size_t num_layers() const { return layer_sizes.size(); }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
};

// Weights and biases feeding one non-input layer.
struct LayerParams {
  RealMatrix weights;         // [presynaptic i][postsynaptic j]
  std::vector<double> bias;   // per postsynaptic neuron

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// layers[k] connects layer k to layer k + 1.
struct Parameters {
  std::vector<LayerParams> layers;

  // Shapes must match `shape` and every entry must be finite.
  void validate(const NetworkShape& shape) const;
  std::size_t parameter_count() const;

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

// Gradient buffers shaped like Parameters.
struct ParamGrads {
  std::vector<LayerParams> layers;

  static ParamGrads zeros_like(const Parameters& params);
  ParamGrads& operator+=(const ParamGrads& other);
  double squared_norm() const;
  bool all_finite() const;

  friend bool operator==(const ParamGrads&, const ParamGrads&) = default;
};

inline constexpr std::int32_t kNoSpike = -1;

// Per-layer record of a forward pass. Layer 0 is the input raster; potential
// and current are left empty for it.
struct ForwardTrace {
  std::vector<SpikeMatrix> spikes;                // [layer][t][neuron]
  std::vector<RealMatrix> potential;              // V
  std::vector<RealMatrix> current;                // I
  std::vector<Matrix<std::int32_t>> last_spike;   // own spike strictly before t

  std::size_t num_layers() const { return spikes.size(); }
  std::size_t horizon() const { return spikes.front().rows(); }
  const SpikeMatrix& output_spikes() const { return spikes.back(); }
  std::size_t spike_count(std::size_t layer) const;
  // Hidden and output spikes; input spikes excluded.
  std::size_t non_input_spike_count() const;
};

// Spike response kernel: response of V to one presynaptic spike tau steps
// earlier. Zero for tau < 0.
double kernel_eps(long tau, const NeuronConfig& cfg);

// Central difference (eps[tau + 1] - eps[tau - 1]) / 2.
double kernel_eps_star(long tau, const NeuronConfig& cfg);

// Recursive evaluation of the current/potential dynamics with reset of both
// state variables after a spike. Initial state is all zero.
ForwardTrace forward_rnn(const Parameters& params, const SpikeMatrix& input,
                         const NetworkShape& shape, const NeuronConfig& cfg);

// Kernel-sum evaluation of the same model: the potential is the sum of
// kernel responses to presynaptic spikes after the neuron's last own spike
// (plus the decayed bias injected since then). O(T^2); used as an oracle.
ForwardTrace forward_srm(const Parameters& params, const SpikeMatrix& input,
                         const NetworkShape& shape, const NeuronConfig& cfg);

// Throws ConfigError when `input` does not fit `shape`.
void check_input(const SpikeMatrix& input, const NetworkShape& shape);

Parameters zero_parameters(const NetworkShape& shape);

}  // namespace snn
