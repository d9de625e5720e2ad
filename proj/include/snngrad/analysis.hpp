#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "snngrad/grad.hpp"
#include "snngrad/losses.hpp"
#include "snngrad/neuron.hpp"
#include "snngrad/random.hpp"

namespace snn {

struct InstanceLimits {
  std::size_t max_layers = 4;
  std::size_t max_width = 20;
  std::size_t max_horizon = 50;
};

// Random network, parameters and input raster. Decays are drawn from the
// corner set {0, 0.95, 0.99, 1} or uniformly; weights ~ U[-1, 1].
struct RandomInstance {
  std::uint64_t seed = 0;
  NetworkShape shape;
  NeuronConfig cfg;
  Parameters params;
  SpikeMatrix input;
};

RandomInstance random_instance(std::uint64_t seed, const InstanceLimits& limits = {});

// Gaussian dL/dS everywhere and dL/dt_hat at each output spike.
LossGrads random_seeds(const ForwardTrace& trace, Rng& rng);

// |a - b| / max(|a|, |b|, 1)
double relative_deviation(double a, double b);
double max_relative_deviation(const RealMatrix& a, const RealMatrix& b);
double max_relative_deviation(const ParamGrads& a, const ParamGrads& b);

struct ForwardReport {
  std::size_t trials = 0;
  std::size_t spike_mismatches = 0;
  double max_potential_deviation = 0.0;  // non-reset steps only
  std::uint64_t worst_seed = 0;
};

// forward_rnn against forward_srm on random instances.
ForwardReport check_forward_equivalence(std::size_t n_trials, std::uint64_t seed,
                                        const InstanceLimits& limits = {});

struct MethodReport {
  std::size_t trials = 0;
  double bptt_deviation = 0.0;       // BPTT without reset vs ANTLR(1, 0)
  double linearity_deviation = 0.0;  // per-layer weighted sum at (2, 3)
  // Output-layer buffers and last-layer weight gradients of full runs at
  // (2, 3) against 2 (1, 0) + 3 (0, 1). Layers further down mix the two
  // gradient kinds, so whole-trace linearity only holds up to there.
  double output_linearity_deviation = 0.0;
  std::size_t timing_support_violations = 0;  // dt_hat != 0 off spike steps
  std::size_t zero_spike_violations = 0;      // nonzero timing grads on silent nets
  std::uint64_t worst_seed = 0;
};

MethodReport check_method_equivalence(std::size_t n_trials, std::uint64_t seed,
                                      const InstanceLimits& limits = {});

// Closed forms of the three loss families on relaxed (real) arguments.
double count_loss_relaxed(const std::vector<double>& counts, const std::vector<double>& targets,
                          std::size_t horizon);
double spike_train_loss_relaxed(const RealMatrix& output, const SpikeMatrix& targets, double kappa);
double latency_loss_relaxed(const std::vector<double>& first_times, std::size_t label, double beta);

enum class LossKind { count, spike_train, latency };

struct FiniteDiffReport {
  LossKind kind = LossKind::count;
  std::size_t instances = 0;
  double max_deviation = 0.0;
  std::uint64_t worst_seed = 0;
};

// Max |analytic seed - central difference| on one random instance.
double finite_diff_loss_grad(LossKind kind, std::uint64_t instance_seed, double h);
FiniteDiffReport finite_diff_suite(LossKind kind, std::size_t n_instances, std::uint64_t seed,
                                   double h);

std::string loss_kind_name(LossKind kind);

}  // namespace snn
