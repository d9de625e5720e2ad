#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "snngrad/grad.hpp"
#include "snngrad/neuron.hpp"
#include "snngrad/optim.hpp"

namespace snn {

enum class Task { matching, mnist, nmnist };
enum class LossChoice { count, spike_train, latency };
enum class DecisionScheme { earliest_spike, most_spike };

// Every knob of an experiment. JSON keys are the field names below, grouped
// freely into nested objects (alpha_v, grad_clip, kappa_exp, ste_alpha, ...).
struct ExperimentConfig {
  Task task = Task::matching;

  // network
  std::vector<std::size_t> layers{10, 50, 50, 5};
  std::size_t horizon = 100;
  std::size_t input_window = 0;  // latency-coding window, 0 = horizon
  bool single_spike_restriction = false;
  NeuronConfig neuron;

  // method and loss
  MethodConfig method{1.0, 1.0, 0.3, 1.0, false};
  LossChoice loss = LossChoice::spike_train;
  double beta_softmax = 1.0;
  double kappa_exp = 0.95;
  double max_target_spikes = 1.0;  // count target of the correct class
  double wrong_target_spikes = 0.0;
  bool min_count_term = true;      // added to the latency loss when lambda_act > 0
  double no_spike_penalty = 1e-3;  // weight increment per update for silent neurons, pure timing only
  DecisionScheme decision = DecisionScheme::earliest_spike;

  // optimisation
  OptimizerConfig optim{OptimizerKind::sgd, 1e-3, 0.0, 1e5};
  bool init_bias_center = false;
  double init_weight_scale = 1.0;  // weight std is init_weight_scale / sqrt(fan_in)
  double init_bias_value = 0.5;    // bias with init_bias_center, in units of theta
  std::size_t epoch = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  // data
  std::string data_dir;
  std::size_t train_samples = 50000;
  std::size_t valid_samples = 10000;
  std::size_t test_samples = 10000;
  std::size_t valid_offset = 50000;  // validation images follow the training slice

  // matching task
  std::size_t trials = 10;
  std::size_t iterations = 5000;
  std::size_t input_spikes = 3;
  std::size_t target_spikes = 1;
  bool targets_from_initial_output = false;

  // run control
  std::size_t threads = 0;  // 0 = hardware concurrency
  bool deterministic = false;
  std::size_t eval_every = 0;  // iterations between validation records, 0 = per epoch
  std::string metrics_path;
  std::string params_out;

  NetworkShape shape() const { return {layers, horizon, single_spike_restriction}; }
  std::size_t encoding_window() const { return input_window == 0 ? horizon : input_window; }
  std::size_t worker_count() const;

  // Shapes, ranges and the loss/method compatibility rules.
  void validate() const;
};

std::string task_name(Task task);
std::string loss_name(LossChoice loss);
std::string decision_name(DecisionScheme scheme);

// Named starting points: matching_{antlr,activation,timing,bptt},
// landscape, mnist_{antlr,activation,timing}, nmnist_{antlr,activation,timing}.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Overlays the keys present in `j` onto `base`. Unknown keys are errors.
ExperimentConfig apply_json(ExperimentConfig base, const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

// A preset name, or a JSON file whose optional "preset" key selects the base.
ExperimentConfig load_config(const std::string& name_or_path);

}  // namespace snn
