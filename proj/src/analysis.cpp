#include "snngrad/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "snngrad/errors.hpp"

namespace snn {

namespace {

constexpr double kCornerDecays[] = {0.0, 0.95, 0.99, 1.0};

double draw_decay(Rng& rng) {
  if (rng.below(2) == 0) return kCornerDecays[rng.below(4)];
  return rng.uniform();
}

double draw_scale(Rng& rng) { return rng.below(2) == 0 ? 1.0 : rng.uniform(0.5, 1.5); }

}  // namespace

RandomInstance random_instance(std::uint64_t seed, const InstanceLimits& limits) {
  Rng rng(mix_seed(seed, 0x5eed));
  RandomInstance inst;
  inst.seed = seed;

  const std::size_t depth = 2 + rng.below(limits.max_layers - 1);
  for (std::size_t l = 0; l < depth; ++l) inst.shape.layer_sizes.push_back(1 + rng.below(limits.max_width));
  inst.shape.horizon = 1 + rng.below(limits.max_horizon);
  inst.shape.single_spike = rng.below(8) == 0;

  inst.cfg.alpha_v = draw_decay(rng);
  inst.cfg.alpha_i = draw_decay(rng);
  inst.cfg.beta_v = draw_scale(rng);
  inst.cfg.beta_i = draw_scale(rng);
  inst.cfg.beta_bias = draw_scale(rng);
  inst.cfg.theta = draw_scale(rng);

  // A few silent cases: zero parameters or an empty input raster.
  const std::uint64_t mode = rng.below(20);
  const bool zero_params = mode == 0;
  const double rate = mode == 1 ? 0.0 : rng.uniform(0.05, 0.5);

  inst.params = zero_parameters(inst.shape);
  if (!zero_params) {
    for (auto& layer : inst.params.layers) {
      for (double& w : layer.weights.flat()) w = rng.uniform(-1.0, 1.0);
      for (double& b : layer.bias) b = rng.uniform(-0.3, 0.3);
    }
  }
  inst.input = SpikeMatrix(inst.shape.horizon, inst.shape.input_size());
  for (auto& s : inst.input.flat()) s = rng.uniform() < rate ? 1 : 0;
  return inst;
}

LossGrads random_seeds(const ForwardTrace& trace, Rng& rng) {
  const SpikeMatrix& out = trace.output_spikes();
  LossGrads g = LossGrads::zeros(out.rows(), out.cols());
  for (double& d : g.d_spikes.flat()) d = rng.normal();
  for (std::size_t t = 0; t < out.rows(); ++t) {
    for (std::size_t o = 0; o < out.cols(); ++o) {
      if (out(t, o)) g.d_times(t, o) = rng.normal();
    }
  }
  return g;
}

double relative_deviation(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

double max_relative_deviation(const RealMatrix& a, const RealMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double worst = 0.0;
  const auto fa = a.flat();
  const auto fb = b.flat();
  for (std::size_t k = 0; k < fa.size(); ++k) worst = std::max(worst, relative_deviation(fa[k], fb[k]));
  return worst;
}

double max_relative_deviation(const ParamGrads& a, const ParamGrads& b) {
  if (a.layers.size() != b.layers.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    worst = std::max(worst, max_relative_deviation(a.layers[l].weights, b.layers[l].weights));
    const auto& ba = a.layers[l].bias;
    const auto& bb = b.layers[l].bias;
    if (ba.size() != bb.size()) return INFINITY;
    for (std::size_t k = 0; k < ba.size(); ++k) worst = std::max(worst, relative_deviation(ba[k], bb[k]));
  }
  return worst;
}

ForwardReport check_forward_equivalence(std::size_t n_trials, std::uint64_t seed,
                                        const InstanceLimits& limits) {
  ForwardReport report;
  double worst = -1.0;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    const std::uint64_t s = mix_seed(seed, trial);
    const RandomInstance inst = random_instance(s, limits);
    const ForwardTrace rnn = forward_rnn(inst.params, inst.input, inst.shape, inst.cfg);
    const ForwardTrace srm = forward_srm(inst.params, inst.input, inst.shape, inst.cfg);
    ++report.trials;

    std::size_t mismatches = 0;
    double dev = 0.0;
    for (std::size_t l = 1; l < rnn.num_layers(); ++l) {
      const auto a = rnn.spikes[l].flat();
      const auto b = srm.spikes[l].flat();
      for (std::size_t k = 0; k < a.size(); ++k) mismatches += a[k] != b[k];
      dev = std::max(dev, max_relative_deviation(rnn.potential[l], srm.potential[l]));
    }
    report.spike_mismatches += mismatches;
    report.max_potential_deviation = std::max(report.max_potential_deviation, dev);
    const double badness = mismatches > 0 ? INFINITY : dev;
    if (badness > worst) {
      worst = badness;
      report.worst_seed = s;
    }
  }
  return report;
}

namespace {

ParamGrads combine(const ParamGrads& a, double ca, const ParamGrads& b, double cb) {
  ParamGrads out = a;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto w = out.layers[l].weights.flat();
    const auto wa = a.layers[l].weights.flat();
    const auto wb = b.layers[l].weights.flat();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = ca * wa[k] + cb * wb[k];
    for (std::size_t k = 0; k < out.layers[l].bias.size(); ++k) {
      out.layers[l].bias[k] = ca * a.layers[l].bias[k] + cb * b.layers[l].bias[k];
    }
  }
  return out;
}

RealMatrix combine(const RealMatrix& a, double ca, const RealMatrix& b, double cb) {
  RealMatrix out(a.rows(), a.cols());
  auto o = out.flat();
  const auto fa = a.flat();
  const auto fb = b.flat();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = ca * fa[k] + cb * fb[k];
  return out;
}

double layer_deviation(const LayerGradients& mixed, const LayerGradients& act, double ca,
                       const LayerGradients& tim, double ct) {
  double dev = max_relative_deviation(mixed.d_potential, combine(act.d_potential, ca, tim.d_potential, ct));
  dev = std::max(dev, max_relative_deviation(mixed.d_potential_dep,
                                             combine(act.d_potential_dep, ca, tim.d_potential_dep, ct)));
  dev = std::max(dev, max_relative_deviation(mixed.d_current,
                                             combine(act.d_current, ca, tim.d_current, ct)));
  return dev;
}

bool all_zero(const ParamGrads& g) {
  for (const auto& layer : g.layers) {
    for (double w : layer.weights.flat()) {
      if (w != 0.0) return false;
    }
    for (double b : layer.bias) {
      if (b != 0.0) return false;
    }
  }
  return true;
}

}  // namespace

MethodReport check_method_equivalence(std::size_t n_trials, std::uint64_t seed,
                                      const InstanceLimits& limits) {
  constexpr double ca = 2.0;
  constexpr double ct = 3.0;
  MethodReport report;
  double worst = -1.0;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    const std::uint64_t s = mix_seed(seed, trial);
    const RandomInstance inst = random_instance(s, limits);
    const ForwardTrace trace = forward_rnn(inst.params, inst.input, inst.shape, inst.cfg);
    Rng rng(mix_seed(s, 1));
    const LossGrads seeds = random_seeds(trace, rng);
    MethodConfig base;
    base.ste_alpha = rng.uniform(0.2, 1.0);
    base.ste_beta = rng.uniform(0.5, 3.0);
    ++report.trials;

    const auto act = backprop_activation(trace, inst.params, seeds, base, inst.cfg);
    const auto tim = backprop_timing(trace, inst.params, seeds, base, inst.cfg);
    MethodConfig mixed_cfg = base;
    mixed_cfg.lambda_act = ca;
    mixed_cfg.lambda_tim = ct;
    const auto mixed = backprop_antlr(trace, inst.params, seeds, mixed_cfg, inst.cfg);
    const auto bptt = backprop_rnn_bptt(trace, inst.params, seeds, base, inst.cfg);

    double bptt_dev = max_relative_deviation(bptt.grads, act.grads);
    for (std::size_t l = 1; l < trace.num_layers(); ++l) {
      bptt_dev = std::max(bptt_dev, max_relative_deviation(bptt.gtrace.layers[l].d_potential_dep,
                                                           act.gtrace.layers[l].d_potential_dep));
      bptt_dev = std::max(bptt_dev, max_relative_deviation(bptt.gtrace.layers[l].d_current,
                                                           act.gtrace.layers[l].d_current));
    }

    // Same incoming adjoints at each layer, three weightings.
    double lin_dev = 0.0;
    for (std::size_t l = 1; l < trace.num_layers(); ++l) {
      const LayerGradients& in = mixed.gtrace.layers[l];
      std::size_t guarded = 0;
      MethodConfig a = base;
      a.lambda_act = 1.0;
      a.lambda_tim = 0.0;
      MethodConfig t = base;
      t.lambda_act = 0.0;
      t.lambda_tim = 1.0;
      const auto la = layer_backward(trace, l, in.d_spikes, in.d_time, a, inst.cfg, guarded);
      const auto lt = layer_backward(trace, l, in.d_spikes, in.d_time, t, inst.cfg, guarded);
      const auto lm = layer_backward(trace, l, in.d_spikes, in.d_time, mixed_cfg, inst.cfg, guarded);
      lin_dev = std::max(lin_dev, layer_deviation(lm, la, ca, lt, ct));
    }

    const std::size_t top = trace.num_layers() - 1;
    double out_dev = layer_deviation(mixed.gtrace.layers[top], act.gtrace.layers[top], ca,
                                     tim.gtrace.layers[top], ct);
    {
      const ParamGrads lin = combine(act.grads, ca, tim.grads, ct);
      ParamGrads last_mixed;
      ParamGrads last_lin;
      last_mixed.layers.push_back(mixed.grads.layers.back());
      last_lin.layers.push_back(lin.layers.back());
      out_dev = std::max(out_dev, max_relative_deviation(last_mixed, last_lin));
    }

    for (std::size_t l = 1; l < trace.num_layers(); ++l) {
      const SpikeMatrix& S = trace.spikes[l];
      const RealMatrix& dt = tim.gtrace.layers[l].d_time;
      for (std::size_t k = 0; k < S.size(); ++k) {
        if (!S.flat()[k] && dt.flat()[k] != 0.0) ++report.timing_support_violations;
      }
    }
    if (trace.non_input_spike_count() == 0 && !all_zero(tim.grads)) ++report.zero_spike_violations;

    report.bptt_deviation = std::max(report.bptt_deviation, bptt_dev);
    report.linearity_deviation = std::max(report.linearity_deviation, lin_dev);
    report.output_linearity_deviation = std::max(report.output_linearity_deviation, out_dev);
    const double badness = std::max(bptt_dev, lin_dev);
    if (badness > worst) {
      worst = badness;
      report.worst_seed = s;
    }
  }
  return report;
}

double count_loss_relaxed(const std::vector<double>& counts, const std::vector<double>& targets,
                          std::size_t horizon) {
  double loss = 0.0;
  for (std::size_t o = 0; o < counts.size(); ++o) {
    const double d = counts[o] - targets[o];
    loss += d * d / static_cast<double>(horizon);
  }
  return loss;
}

double spike_train_loss_relaxed(const RealMatrix& output, const SpikeMatrix& targets, double kappa) {
  // Direct convolution, independent of the recursive filter in the loss module.
  const std::size_t T = output.rows();
  double loss = 0.0;
  for (std::size_t o = 0; o < output.cols(); ++o) {
    for (std::size_t tau = 0; tau < T; ++tau) {
      double d = 0.0;
      for (std::size_t s = 0; s <= tau; ++s) {
        d += std::pow(kappa, static_cast<double>(tau - s)) * (output(s, o) - targets(s, o));
      }
      loss += d * d;
    }
  }
  return loss;
}

double latency_loss_relaxed(const std::vector<double>& first_times, std::size_t label, double beta) {
  double peak = -INFINITY;
  for (double t : first_times) peak = std::max(peak, -beta * t);
  double norm = 0.0;
  for (double t : first_times) norm += std::exp(-beta * t - peak);
  return peak + std::log(norm) + beta * first_times[label];
}

double finite_diff_loss_grad(LossKind kind, std::uint64_t instance_seed, double h) {
  Rng rng(mix_seed(instance_seed, 0xfd));
  const std::size_t T = 1 + rng.below(60);
  const std::size_t n_out = 1 + rng.below(6);
  SpikeMatrix out(T, n_out);
  const double rate = rng.uniform(0.0, 0.4);
  for (auto& s : out.flat()) s = rng.uniform() < rate ? 1 : 0;
  double worst = 0.0;

  switch (kind) {
    case LossKind::count: {
      CountLoss spec;
      for (std::size_t o = 0; o < n_out; ++o) spec.targets.push_back(static_cast<double>(rng.below(6)));
      const LossGrads g = count_loss(out, spec);
      std::vector<double> counts(n_out, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t o = 0; o < n_out; ++o) counts[o] += out(t, o);
      }
      for (std::size_t o = 0; o < n_out; ++o) {
        auto up = counts;
        auto down = counts;
        up[o] += h;
        down[o] -= h;
        const double numeric = (count_loss_relaxed(up, spec.targets, T) -
                                count_loss_relaxed(down, spec.targets, T)) / (2.0 * h);
        for (std::size_t t = 0; t < T; ++t) worst = std::max(worst, std::abs(g.d_spikes(t, o) - numeric));
      }
      break;
    }
    case LossKind::spike_train: {
      SpikeTrainLoss spec{SpikeMatrix(T, n_out), rng.uniform(0.5, 0.99)};
      for (auto& s : spec.targets.flat()) s = rng.uniform() < rate ? 1 : 0;
      const LossGrads g = spike_train_loss(out, spec);
      RealMatrix relaxed(T, n_out);
      for (std::size_t k = 0; k < relaxed.size(); ++k) relaxed.flat()[k] = out.flat()[k];
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t o = 0; o < n_out; ++o) {
          RealMatrix up = relaxed;
          RealMatrix down = relaxed;
          up(t, o) += h;
          down(t, o) -= h;
          const double numeric = (spike_train_loss_relaxed(up, spec.targets, spec.kappa) -
                                  spike_train_loss_relaxed(down, spec.targets, spec.kappa)) / (2.0 * h);
          worst = std::max(worst, std::abs(g.d_spikes(t, o) - numeric));
        }
      }
      break;
    }
    case LossKind::latency: {
      LatencyLoss spec{static_cast<std::size_t>(rng.below(n_out)), rng.uniform(0.05, 2.0)};
      const LossGrads g = latency_loss(out, spec);
      const auto first = first_spike_times(out);
      std::vector<double> times(n_out);
      for (std::size_t o = 0; o < n_out; ++o) {
        times[o] = first[o] == kNoSpike ? static_cast<double>(T) : static_cast<double>(first[o]);
      }
      // Silent outputs carry no seed by construction; only spiking ones are compared.
      for (std::size_t o = 0; o < n_out; ++o) {
        if (first[o] == kNoSpike) continue;
        auto up = times;
        auto down = times;
        up[o] += h;
        down[o] -= h;
        const double numeric = (latency_loss_relaxed(up, spec.label, spec.beta) -
                                latency_loss_relaxed(down, spec.label, spec.beta)) / (2.0 * h);
        worst = std::max(worst, std::abs(g.d_times(static_cast<std::size_t>(first[o]), o) - numeric));
      }
      break;
    }
  }
  return worst;
}

FiniteDiffReport finite_diff_suite(LossKind kind, std::size_t n_instances, std::uint64_t seed,
                                   double h) {
  FiniteDiffReport report;
  report.kind = kind;
  for (std::size_t k = 0; k < n_instances; ++k) {
    const std::uint64_t s = mix_seed(seed, k);
    const double dev = finite_diff_loss_grad(kind, s, h);
    ++report.instances;
    if (dev > report.max_deviation || k == 0) {
      report.max_deviation = std::max(report.max_deviation, dev);
      report.worst_seed = s;
    }
  }
  return report;
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::count:
      return "count";
    case LossKind::spike_train:
      return "spike_train";
    case LossKind::latency:
      return "latency";
  }
  return "unknown";
}

}  // namespace snn
