#include "snngrad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "snngrad/errors.hpp"

namespace snn {

LossGrads LossGrads::zeros(std::size_t horizon, std::size_t outputs) {
  LossGrads g;
  g.d_spikes = RealMatrix(horizon, outputs);
  g.d_times = RealMatrix(horizon, outputs);
  return g;
}

LossGrads& LossGrads::operator+=(const LossGrads& other) {
  if (d_spikes.rows() != other.d_spikes.rows() || d_spikes.cols() != other.d_spikes.cols()) {
    throw ConfigError("loss seed shapes differ");
  }
  auto ds = d_spikes.flat();
  auto dt = d_times.flat();
  const auto os = other.d_spikes.flat();
  const auto ot = other.d_times.flat();
  for (std::size_t k = 0; k < ds.size(); ++k) {
    ds[k] += os[k];
    dt[k] += ot[k];
  }
  value += other.value;
  silent_outputs += other.silent_outputs;
  return *this;
}

double exp_kernel(long tau, double kappa) {
  return tau < 0 ? 0.0 : std::pow(kappa, static_cast<double>(tau));
}

double exp_kernel_star(long tau, double kappa) {
  return 0.5 * (exp_kernel(tau + 1, kappa) - exp_kernel(tau - 1, kappa));
}

std::vector<long> first_spike_times(const SpikeMatrix& spikes) {
  std::vector<long> first(spikes.cols(), kNoSpike);
  for (std::size_t t = 0; t < spikes.rows(); ++t) {
    for (std::size_t o = 0; o < spikes.cols(); ++o) {
      if (spikes(t, o) && first[o] == kNoSpike) first[o] = static_cast<long>(t);
    }
  }
  return first;
}

namespace {

std::vector<double> spike_counts(const SpikeMatrix& spikes) {
  std::vector<double> counts(spikes.cols(), 0.0);
  for (std::size_t t = 0; t < spikes.rows(); ++t) {
    for (std::size_t o = 0; o < spikes.cols(); ++o) counts[o] += spikes(t, o);
  }
  return counts;
}

void check_label(std::size_t label, std::size_t outputs) {
  if (label >= outputs) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(outputs) + " outputs");
  }
}

}  // namespace

LossGrads count_loss(const SpikeMatrix& output, const CountLoss& spec) {
  const std::size_t T = output.rows();
  const std::size_t n_out = output.cols();
  if (spec.targets.size() != n_out) throw ConfigError("count targets must match the output size");
  LossGrads g = LossGrads::zeros(T, n_out);
  const auto counts = spike_counts(output);
  const double horizon = static_cast<double>(T);
  for (std::size_t o = 0; o < n_out; ++o) {
    if (spec.targets[o] < 0.0) throw ConfigError("count targets must be non-negative");
    const double diff = counts[o] - spec.targets[o];
    g.value += diff * diff / horizon;
    const double seed = 2.0 * diff / horizon;
    for (std::size_t t = 0; t < T; ++t) g.d_spikes(t, o) = seed;
  }
  return g;
}

LossGrads spike_train_loss(const SpikeMatrix& output, const SpikeTrainLoss& spec) {
  const std::size_t T = output.rows();
  const std::size_t n_out = output.cols();
  if (spec.targets.rows() != T || spec.targets.cols() != n_out) {
    throw ConfigError("target spike trains must match the output raster shape");
  }
  if (!(spec.kappa > 0.0 && spec.kappa < 1.0)) throw ConfigError("kappa_exp must lie in (0, 1)");
  LossGrads g = LossGrads::zeros(T, n_out);

  std::vector<double> diff(T);
  for (std::size_t o = 0; o < n_out; ++o) {
    // d[tau] = (kappa * S)[tau] - (kappa * S_tar)[tau] via the causal recursion
    double filtered = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      filtered = spec.kappa * filtered +
                 (static_cast<double>(output(t, o)) - static_cast<double>(spec.targets(t, o)));
      diff[t] = filtered;
      g.value += filtered * filtered;
    }
    // dL/dS[t] = 2 sum_{tau >= t} kappa^(tau - t) d[tau]
    double acc = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      acc = diff[t] + spec.kappa * acc;
      g.d_spikes(t, o) = 2.0 * acc;
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (!output(t, o)) continue;
      double sum = 0.0;
      const std::size_t from = t == 0 ? 0 : t - 1;
      for (std::size_t tau = from; tau < T; ++tau) {
        sum += exp_kernel_star(static_cast<long>(tau) - static_cast<long>(t), spec.kappa) * diff[tau];
      }
      g.d_times(t, o) = -2.0 * sum;
    }
  }
  return g;
}

LossGrads latency_loss(const SpikeMatrix& output, const LatencyLoss& spec) {
  const std::size_t T = output.rows();
  const std::size_t n_out = output.cols();
  check_label(spec.label, n_out);
  if (!(spec.beta > 0.0)) throw ConfigError("beta_softmax must be positive");
  LossGrads g = LossGrads::zeros(T, n_out);

  const auto first = first_spike_times(output);
  std::vector<double> logits(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double t_first = first[o] == kNoSpike ? static_cast<double>(T) : static_cast<double>(first[o]);
    if (first[o] == kNoSpike) ++g.silent_outputs;
    logits[o] = -spec.beta * t_first;
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double norm = 0.0;
  for (double z : logits) norm += std::exp(z - peak);
  const double log_norm = peak + std::log(norm);

  g.value = log_norm - logits[spec.label];
  for (std::size_t o = 0; o < n_out; ++o) {
    const double p = std::exp(logits[o] - log_norm);
    const double y = o == spec.label ? 1.0 : 0.0;
    if (first[o] != kNoSpike) g.d_times(static_cast<std::size_t>(first[o]), o) = -spec.beta * (p - y);
  }
  return g;
}

LossGrads min_count_variant(const SpikeMatrix& output, const MinCountLoss& spec) {
  const std::size_t T = output.rows();
  const std::size_t n_out = output.cols();
  check_label(spec.label, n_out);
  LossGrads g = LossGrads::zeros(T, n_out);
  double count = 0.0;
  for (std::size_t t = 0; t < T; ++t) count += output(t, spec.label);
  const double gap = std::min(count, 1.0) - 1.0;
  g.value = gap * gap;
  if (count < 1.0) {
    const double seed = 2.0 * gap / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) g.d_spikes(t, spec.label) = seed;
  }
  return g;
}

LossGrads compute_loss(const SpikeMatrix& output, const LossSpec& spec) {
  return std::visit(
      [&](const auto& s) -> LossGrads {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, CountLoss>) return count_loss(output, s);
        else if constexpr (std::is_same_v<S, SpikeTrainLoss>) return spike_train_loss(output, s);
        else if constexpr (std::is_same_v<S, LatencyLoss>) return latency_loss(output, s);
        else return min_count_variant(output, s);
      },
      spec);
}

LossGrads compute_loss(const SpikeMatrix& output, std::span<const LossSpec> terms) {
  LossGrads total = LossGrads::zeros(output.rows(), output.cols());
  for (const auto& term : terms) total += compute_loss(output, term);
  return total;
}

void apply_no_spike_penalty(const ForwardTrace& trace, ParamGrads& grads, double eta) {
  if (grads.layers.size() + 1 != trace.num_layers()) throw ConfigError("gradient/trace depth mismatch");
  for (std::size_t l = 1; l < trace.num_layers(); ++l) {
    const SpikeMatrix& s = trace.spikes[l];
    auto& dw = grads.layers[l - 1].weights;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      bool silent = true;
      for (std::size_t t = 0; t < s.rows() && silent; ++t) silent = s(t, j) == 0;
      if (!silent) continue;
      for (std::size_t i = 0; i < dw.rows(); ++i) dw(i, j) -= eta;
    }
  }
}

}  // namespace snn
