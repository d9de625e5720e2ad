#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "snngrad/matrix.hpp"
#include "snngrad/neuron.hpp"

namespace snn {

// Squared error between output spike counts and per-neuron targets, / T.
struct CountLoss {
  std::vector<double> targets;
};

// Squared error between exponentially filtered output and target trains.
struct SpikeTrainLoss {
  SpikeMatrix targets;  // [t][output]
  double kappa = 0.95;  // kernel decay per step, in (0, 1)
};

// Cross-entropy of softmax(-beta * first spike time).
struct LatencyLoss {
  std::size_t label = 0;
  double beta = 1.0;
};

// {min(count_d, 1) - 1}^2 for the desired neuron d: asks for at least one
// spike from the labelled output.
struct MinCountLoss {
  std::size_t label = 0;
};

using LossSpec = std::variant<CountLoss, SpikeTrainLoss, LatencyLoss, MinCountLoss>;

// Loss value plus the backprop seeds for the output layer.
struct LossGrads {
  RealMatrix d_spikes;  // dL/dS_o[t]
  RealMatrix d_times;   // dL/dt_o, stored at the spike step it belongs to
  double value = 0.0;
  std::size_t silent_outputs = 0;  // latency loss: outputs without a spike

  static LossGrads zeros(std::size_t horizon, std::size_t outputs);
  LossGrads& operator+=(const LossGrads& other);
};

LossGrads count_loss(const SpikeMatrix& output, const CountLoss& spec);
LossGrads spike_train_loss(const SpikeMatrix& output, const SpikeTrainLoss& spec);
// Silent outputs use t = T in the softmax; they receive no timing seed.
LossGrads latency_loss(const SpikeMatrix& output, const LatencyLoss& spec);
LossGrads min_count_variant(const SpikeMatrix& output, const MinCountLoss& spec);

LossGrads compute_loss(const SpikeMatrix& output, const LossSpec& spec);
// Sum of several terms (e.g. latency + min-count).
LossGrads compute_loss(const SpikeMatrix& output, std::span<const LossSpec> terms);

// kappa^tau for tau >= 0, else 0.
double exp_kernel(long tau, double kappa);
// (exp_kernel(tau + 1) - exp_kernel(tau - 1)) / 2
double exp_kernel_star(long tau, double kappa);

// First spike step per neuron, kNoSpike when silent.
std::vector<long> first_spike_times(const SpikeMatrix& spikes);

// Adds -eta to every incoming weight gradient of each neuron (hidden or
// output) that stayed silent over the whole horizon.
void apply_no_spike_penalty(const ForwardTrace& trace, ParamGrads& grads, double eta);

}  // namespace snn
