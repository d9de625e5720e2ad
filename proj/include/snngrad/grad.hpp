#pragma once

#include <cstddef>
#include <vector>

#include "snngrad/losses.hpp"
#include "snngrad/matrix.hpp"
#include "snngrad/neuron.hpp"

namespace snn {

// Weights of the activation and timing potential gradients, the exponential
// surrogate sigma(v) = ste_alpha * exp(-ste_beta * |theta - v|), and the
// choice of the RNN-like BPTT engine (with reset paths) instead of ANTLR.
struct MethodConfig {
  double lambda_act = 1.0;
  double lambda_tim = 1.0;
  double ste_alpha = 0.3;
  double ste_beta = 1.0;
  bool use_reset_paths = false;

  void validate() const;
  bool pure_timing() const { return lambda_act == 0.0 && lambda_tim > 0.0; }
  bool pure_activation() const { return lambda_tim == 0.0 && lambda_act > 0.0; }

  static MethodConfig activation() { return {1.0, 0.0}; }
  static MethodConfig timing() { return {0.0, 1.0}; }
  static MethodConfig antlr() { return {1.0, 1.0}; }
};

// Adjoint buffers of one non-input layer, all [t][neuron].
struct LayerGradients {
  RealMatrix d_spikes;         // dL/dS
  RealMatrix d_time;           // dL/dt_hat, nonzero only at spike steps
  RealMatrix d_potential;      // local dL/dV
  RealMatrix d_potential_dep;  // accumulated dL/dV_dep
  RealMatrix d_current;        // dL/dI
  RealMatrix timing_trace;     // sum of alpha_i-decayed dL/dV inside the reset window
};

// layers[0] (input) is left empty so indices line up with ForwardTrace.
struct GradientTrace {
  std::vector<LayerGradients> layers;
  std::size_t guarded_spikes = 0;  // spikes whose timing term was skipped (V* = 0)
};

struct BackwardResult {
  GradientTrace gtrace;
  ParamGrads grads;
};

double surrogate_sigma(double v, const NeuronConfig& cfg, const MethodConfig& m);

// V[t] - V[t-1] with V[-1] = 0.
double v_star(const ForwardTrace& trace, std::size_t layer, std::size_t t, std::size_t neuron);

// Potential, dependency and current adjoints of one layer given its incoming
// dL/dS and dL/dt_hat. This is where the two gradient kinds are combined.
LayerGradients layer_backward(const ForwardTrace& trace, std::size_t layer, RealMatrix d_spikes,
                              RealMatrix d_time, const MethodConfig& m, const NeuronConfig& cfg,
                              std::size_t& guarded);

// dL/dS of layer l - 1 from the current adjoint of layer l.
RealMatrix spike_adjoint_below(const LayerGradients& upper, const LayerParams& weights,
                               const NeuronConfig& cfg);

// dL/dt_hat of layer l - 1: for each presynaptic spike, the eps*-weighted sum
// of upper potential adjoints over the window in which that spike is still
// part of the postsynaptic potential. Evaluated with O(T) accumulators.
RealMatrix timing_adjoint_below(const LayerGradients& upper, const SpikeMatrix& upper_spikes,
                                const SpikeMatrix& lower_spikes, const LayerParams& weights,
                                const NeuronConfig& cfg);

// Unified backward pass; (1, 0) is the activation method, (0, 1) the timing
// method. Timing seeds are ignored when lambda_tim = 0.
BackwardResult backprop_antlr(const ForwardTrace& trace, const Parameters& params,
                              const LossGrads& seeds, const MethodConfig& m,
                              const NeuronConfig& cfg);
BackwardResult backprop_activation(const ForwardTrace& trace, const Parameters& params,
                                   const LossGrads& seeds, const MethodConfig& m,
                                   const NeuronConfig& cfg);
BackwardResult backprop_timing(const ForwardTrace& trace, const Parameters& params,
                               const LossGrads& seeds, const MethodConfig& m,
                               const NeuronConfig& cfg);

// RNN-like BPTT. With m.use_reset_paths the spike adjoint also receives
// -alpha_i I[t] dI[t+1] - alpha_v V[t] dV[t+1]; without them the result is
// bitwise equal to backprop_antlr at (1, 0). Timing seeds are ignored.
BackwardResult backprop_rnn_bptt(const ForwardTrace& trace, const Parameters& params,
                                 const LossGrads& seeds, const MethodConfig& m,
                                 const NeuronConfig& cfg);

// Picks BPTT when m.use_reset_paths, else ANTLR.
BackwardResult backprop(const ForwardTrace& trace, const Parameters& params,
                        const LossGrads& seeds, const MethodConfig& m, const NeuronConfig& cfg);

// dW[i][j] = beta_i sum_t S_pre[t][i] dI[t][j]; dbias[j] = beta_bias sum_t dV_dep[t][j].
ParamGrads assemble_param_grads(const GradientTrace& gtrace, const ForwardTrace& trace,
                                const NeuronConfig& cfg);

}  // namespace snn
