#include "snngrad/grad.hpp"

#include <cmath>
#include <string>

#include "snngrad/errors.hpp"
#include "snngrad/simd/kernels.hpp"

namespace snn {

void MethodConfig::validate() const {
  if (!(lambda_act >= 0.0) || !(lambda_tim >= 0.0)) throw ConfigError("lambda_act and lambda_tim must be non-negative");
  if (lambda_act == 0.0 && lambda_tim == 0.0 && !use_reset_paths) {
    throw ConfigError("lambda_act = lambda_tim = 0 leaves no gradient path");
  }
  if (!(ste_alpha > 0.0)) throw ConfigError("ste_alpha must be positive");
  if (!(ste_beta > 0.0)) throw ConfigError("ste_beta must be positive");
}

double surrogate_sigma(double v, const NeuronConfig& cfg, const MethodConfig& m) {
  return m.ste_alpha * std::exp(-m.ste_beta * std::abs(cfg.theta - v));
}

double v_star(const ForwardTrace& trace, std::size_t layer, std::size_t t, std::size_t neuron) {
  const RealMatrix& V = trace.potential[layer];
  return t == 0 ? V(0, neuron) : V(t, neuron) - V(t - 1, neuron);
}

namespace {

void check_finite(const RealMatrix& m, std::size_t layer, const char* what) {
  for (std::size_t t = 0; t < m.rows(); ++t) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(t, j))) {
        throw DivergenceError(std::string("non-finite ") + what + " at layer " + std::to_string(layer) +
                              ", step " + std::to_string(t) + ", neuron " + std::to_string(j));
      }
    }
  }
}

void check_seeds(const ForwardTrace& trace, const LossGrads& seeds) {
  const SpikeMatrix& out = trace.output_spikes();
  if (seeds.d_spikes.rows() != out.rows() || seeds.d_spikes.cols() != out.cols() ||
      seeds.d_times.rows() != out.rows() || seeds.d_times.cols() != out.cols()) {
    throw ConfigError("loss seeds do not match the output raster shape");
  }
}

// Shared by ANTLR and BPTT. In `bptt` mode the potential adjoint is the plain
// surrogate term and, with reset paths, the spike adjoint picks up the
// derivative of the reset through I[t+1] and V[t+1].
LayerGradients run_layer(const ForwardTrace& trace, std::size_t layer, RealMatrix d_spikes,
                         RealMatrix d_time, const MethodConfig& m, const NeuronConfig& cfg,
                         bool bptt, std::size_t& guarded) {
  const auto& k = simd::active_kernels();
  const simd::AdjointCoefficients c{cfg.alpha_v, cfg.alpha_i, cfg.beta_v};
  const SpikeMatrix& S = trace.spikes[layer];
  const RealMatrix& V = trace.potential[layer];
  const RealMatrix& I = trace.current[layer];
  const std::size_t T = S.rows();
  const std::size_t n = S.cols();
  const bool reset_paths = bptt && m.use_reset_paths;
  const bool timing = !bptt && m.lambda_tim != 0.0;

  LayerGradients g;
  g.d_spikes = std::move(d_spikes);
  g.d_time = std::move(d_time);
  g.d_potential = RealMatrix(T, n);
  g.d_potential_dep = RealMatrix(T, n);
  g.d_current = RealMatrix(T, n);
  g.timing_trace = RealMatrix(T, n);

  const std::vector<double> zeros(n, 0.0);
  for (std::size_t t = T; t-- > 0;) {
    const bool last = t + 1 == T;
    auto dv = g.d_potential.row(t);
    for (std::size_t j = 0; j < n; ++j) {
      const double sigma = surrogate_sigma(V(t, j), cfg, m);
      if (bptt) {
        double ds = g.d_spikes(t, j);
        if (reset_paths && !last) {
          ds = ds + (-cfg.alpha_i * I(t, j)) * g.d_current(t + 1, j) +
               (-cfg.alpha_v * V(t, j)) * g.d_potential_dep(t + 1, j);
          g.d_spikes(t, j) = ds;
        }
        dv[j] = sigma * ds;
        continue;
      }
      dv[j] = m.lambda_act * sigma * g.d_spikes(t, j);
      if (timing && S(t, j)) {
        const double vs = v_star(trace, layer, t, j);
        if (vs == 0.0) {
          ++guarded;
        } else {
          dv[j] = dv[j] - m.lambda_tim * g.d_time(t, j) / vs;
        }
      }
    }
    k.adjoint_step(c, S.row(t).data(), dv.data(),
                   last ? zeros.data() : g.d_potential_dep.row(t + 1).data(),
                   last ? zeros.data() : g.d_current.row(t + 1).data(),
                   last ? zeros.data() : g.timing_trace.row(t + 1).data(),
                   g.d_potential_dep.row(t).data(), g.d_current.row(t).data(),
                   g.timing_trace.row(t).data(), n);
  }
  check_finite(g.d_spikes, layer, "dL/dS");
  check_finite(g.d_potential_dep, layer, "dL/dV_dep");
  check_finite(g.d_current, layer, "dL/dI");
  return g;
}

BackwardResult run_backward(const ForwardTrace& trace, const Parameters& params,
                            const LossGrads& seeds, const MethodConfig& m,
                            const NeuronConfig& cfg, bool bptt) {
  m.validate();
  cfg.validate();
  check_seeds(trace, seeds);
  if (params.layers.size() + 1 != trace.num_layers()) throw ConfigError("parameter/trace depth mismatch");

  const std::size_t L = trace.num_layers();
  const std::size_t T = trace.horizon();
  const bool timing = !bptt && m.lambda_tim != 0.0;

  BackwardResult out;
  out.gtrace.layers.resize(L);
  RealMatrix ds = seeds.d_spikes;
  RealMatrix dt = timing ? seeds.d_times : RealMatrix(T, trace.output_spikes().cols());
  for (std::size_t l = L - 1; l >= 1; --l) {
    LayerGradients g = run_layer(trace, l, std::move(ds), std::move(dt), m, cfg, bptt,
                                 out.gtrace.guarded_spikes);
    if (l > 1) {
      const LayerParams& w = params.layers[l - 1];
      ds = spike_adjoint_below(g, w, cfg);
      dt = timing ? timing_adjoint_below(g, trace.spikes[l], trace.spikes[l - 1], w, cfg)
                  : RealMatrix(T, w.weights.rows());
      check_finite(dt, l - 1, "dL/dt_hat");
    }
    out.gtrace.layers[l] = std::move(g);
  }
  out.grads = assemble_param_grads(out.gtrace, trace, cfg);
  return out;
}

}  // namespace

LayerGradients layer_backward(const ForwardTrace& trace, std::size_t layer, RealMatrix d_spikes,
                              RealMatrix d_time, const MethodConfig& m, const NeuronConfig& cfg,
                              std::size_t& guarded) {
  if (layer == 0 || layer >= trace.num_layers()) throw ConfigError("layer_backward needs a non-input layer");
  const SpikeMatrix& S = trace.spikes[layer];
  if (d_spikes.rows() != S.rows() || d_spikes.cols() != S.cols() || d_time.rows() != S.rows() ||
      d_time.cols() != S.cols()) {
    throw ConfigError("adjoint shapes do not match layer " + std::to_string(layer));
  }
  return run_layer(trace, layer, std::move(d_spikes), std::move(d_time), m, cfg, false, guarded);
}

RealMatrix spike_adjoint_below(const LayerGradients& upper, const LayerParams& weights,
                               const NeuronConfig& cfg) {
  const auto& k = simd::active_kernels();
  const RealMatrix& dI = upper.d_current;
  const std::size_t T = dI.rows();
  const std::size_t n_up = dI.cols();
  const std::size_t n_low = weights.weights.rows();
  RealMatrix out(T, n_low);
  for (std::size_t t = 0; t < T; ++t) {
    const double* di = dI.row(t).data();
    for (std::size_t i = 0; i < n_low; ++i) {
      out(t, i) = cfg.beta_i * k.dot(weights.weights.row(i).data(), di, n_up);
    }
  }
  return out;
}

RealMatrix timing_adjoint_below(const LayerGradients& upper, const SpikeMatrix& upper_spikes,
                                const SpikeMatrix& lower_spikes, const LayerParams& weights,
                                const NeuronConfig& cfg) {
  const auto& k = simd::active_kernels();
  const RealMatrix& dI = upper.d_current;
  const RealMatrix& dV = upper.d_potential;
  const RealMatrix& P = upper.timing_trace;
  const std::size_t T = dI.rows();
  const std::size_t n_up = dI.cols();
  const std::size_t n_low = weights.weights.rows();
  const double bb = cfg.beta_i * cfg.beta_v;

  // Per postsynaptic neuron and presynaptic spike step t:
  //   sum_{t_a} eps*[t_a - t] dV[t_a]
  //     = (eps-sum at lag + 1  -  eps-sum at lag - 1) / 2  +  eps[0]/2 * dV[t-1]
  // where the eps-weighted window sums reduce to beta_i dI and the
  // alpha_i-weighted trace P.
  RealMatrix aux(T, n_up);
  for (std::size_t t = 0; t < T; ++t) {
    const bool last = t + 1 == T;
    for (std::size_t j = 0; j < n_up; ++j) {
      const double keep = upper_spikes(t, j) ? 0.0 : 1.0;
      const double ahead = cfg.alpha_v * cfg.beta_i * dI(t, j) + bb * cfg.alpha_i * P(t, j);
      const double behind = last ? 0.0 : keep * cfg.beta_i * dI(t + 1, j);
      const double before = t == 0 ? 0.0 : bb * dV(t - 1, j);
      aux(t, j) = 0.5 * (ahead - behind) + 0.5 * before;
    }
  }

  RealMatrix out(T, n_low);
  for (std::size_t t = 0; t < T; ++t) {
    const double* a = aux.row(t).data();
    for (std::size_t i = 0; i < n_low; ++i) {
      if (lower_spikes(t, i)) out(t, i) = k.dot(weights.weights.row(i).data(), a, n_up);
    }
  }
  return out;
}

BackwardResult backprop_antlr(const ForwardTrace& trace, const Parameters& params,
                              const LossGrads& seeds, const MethodConfig& m,
                              const NeuronConfig& cfg) {
  MethodConfig antlr = m;
  antlr.use_reset_paths = false;
  return run_backward(trace, params, seeds, antlr, cfg, false);
}

BackwardResult backprop_activation(const ForwardTrace& trace, const Parameters& params,
                                   const LossGrads& seeds, const MethodConfig& m,
                                   const NeuronConfig& cfg) {
  MethodConfig act = m;
  act.lambda_act = 1.0;
  act.lambda_tim = 0.0;
  return backprop_antlr(trace, params, seeds, act, cfg);
}

BackwardResult backprop_timing(const ForwardTrace& trace, const Parameters& params,
                               const LossGrads& seeds, const MethodConfig& m,
                               const NeuronConfig& cfg) {
  MethodConfig tim = m;
  tim.lambda_act = 0.0;
  tim.lambda_tim = 1.0;
  return backprop_antlr(trace, params, seeds, tim, cfg);
}

BackwardResult backprop_rnn_bptt(const ForwardTrace& trace, const Parameters& params,
                                 const LossGrads& seeds, const MethodConfig& m,
                                 const NeuronConfig& cfg) {
  MethodConfig act = m;
  act.lambda_act = 1.0;
  act.lambda_tim = 0.0;
  return run_backward(trace, params, seeds, act, cfg, true);
}

BackwardResult backprop(const ForwardTrace& trace, const Parameters& params,
                        const LossGrads& seeds, const MethodConfig& m, const NeuronConfig& cfg) {
  return m.use_reset_paths ? backprop_rnn_bptt(trace, params, seeds, m, cfg)
                           : backprop_antlr(trace, params, seeds, m, cfg);
}

ParamGrads assemble_param_grads(const GradientTrace& gtrace, const ForwardTrace& trace,
                                const NeuronConfig& cfg) {
  const auto& k = simd::active_kernels();
  ParamGrads grads;
  for (std::size_t l = 1; l < trace.num_layers(); ++l) {
    const SpikeMatrix& pre = trace.spikes[l - 1];
    const LayerGradients& g = gtrace.layers[l];
    const std::size_t n = g.d_current.cols();
    LayerParams p{RealMatrix(pre.cols(), n), std::vector<double>(n, 0.0)};
    for (std::size_t t = 0; t < pre.rows(); ++t) {
      const double* di = g.d_current.row(t).data();
      for (std::size_t i = 0; i < pre.cols(); ++i) {
        if (pre(t, i)) k.axpy(p.weights.row(i).data(), di, cfg.beta_i, n);
      }
      k.axpy(p.bias.data(), g.d_potential_dep.row(t).data(), cfg.beta_bias, n);
    }
    grads.layers.push_back(std::move(p));
  }
  return grads;
}

}  // namespace snn
