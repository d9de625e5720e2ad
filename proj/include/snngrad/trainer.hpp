#pragma once

#include <cstddef>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "snngrad/config.hpp"
#include "snngrad/data.hpp"
#include "snngrad/losses.hpp"
#include "snngrad/neuron.hpp"

namespace snn {

// Runs fn(0..n-1) on up to `workers` threads. Callers write results into
// per-index slots and reduce them in index order, so the outcome does not
// depend on the worker count.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// JSON-lines metrics sink. Wall-clock fields are dropped in deterministic
// mode so that reruns produce byte-identical logs.
class MetricsLog {
 public:
  MetricsLog() = default;
  MetricsLog(const std::string& path, bool deterministic);

  void emit(nlohmann::json record);
  const std::vector<nlohmann::json>& records() const { return records_; }
  double elapsed_seconds() const;

 private:
  std::ofstream out_;
  bool deterministic_ = false;
  std::vector<nlohmann::json> records_;
  double start_ = 0.0;
};

struct SampleOutcome {
  ParamGrads grads;
  double loss = 0.0;
  std::size_t spikes = 0;  // hidden + output
  std::size_t guarded_spikes = 0;
  std::size_t silent_outputs = 0;
};

// Loss terms for one labelled sample under the configured objective.
std::vector<LossSpec> classification_terms(const ExperimentConfig& cfg, std::size_t label);

// Forward, loss, backward for one sample; adds the no-spike penalty when the
// method is pure timing.
SampleOutcome sample_gradient(const Parameters& params, const SpikeMatrix& input,
                              std::span<const LossSpec> terms, const ExperimentConfig& cfg);

struct Prediction {
  std::size_t label = 0;
  bool tie = false;     // several outputs share the winning value
  bool silent = false;  // no output spiked
};

// Earliest first spike or most spikes; ties go to the lowest index. Given the
// output potentials, an earliest-spike tie goes to the neuron furthest above
// threshold at that step instead.
Prediction predict(const SpikeMatrix& output, DecisionScheme scheme, const RealMatrix* potential = nullptr);

struct EvalResult {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double mean_loss = 0.0;
  double spikes_per_sample = 0.0;  // hidden + output
  std::size_t ties = 0;
  std::size_t silent = 0;          // samples without any output spike
  std::size_t silent_neurons = 0;  // hidden + output neurons silent on every sample

  nlohmann::json to_json(const std::string& prefix) const;
};

EvalResult evaluate(const Parameters& params, const std::vector<LabeledSample>& samples,
                    const ExperimentConfig& cfg);

struct Datasets {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> valid;
  std::vector<LabeledSample> test;
};

// MNIST: IDX files in data_dir. N-MNIST: data_dir/Train and data_dir/Test.
Datasets load_datasets(const ExperimentConfig& cfg);

struct TrainResult {
  Parameters params;
  EvalResult valid;
  std::optional<EvalResult> test;
  std::size_t updates = 0;
};

// Mini-batch training with batch-summed gradients, per-epoch validation and
// a final test evaluation when a test set is given.
TrainResult train_classifier(const ExperimentConfig& cfg, const Datasets& data, MetricsLog& log);

struct MatchingProblem {
  SpikeMatrix input;
  SpikeMatrix targets;
  Parameters params;
};

// Trial inputs, targets and initial weights depend only on (seed, trial), so
// every method sees the same problems.
MatchingProblem make_matching_problem(const ExperimentConfig& cfg, std::size_t trial);

struct MatchingTrial {
  std::vector<double> loss;  // before each update, then after the last one
  std::size_t guarded_spikes = 0;
  Parameters params;
};

struct MatchingResult {
  std::vector<MatchingTrial> trials;

  double mean_loss(std::size_t iteration) const;
  double mean_initial_loss() const { return mean_loss(0); }
  double mean_final_loss() const;
};

MatchingResult run_matching(const ExperimentConfig& cfg, MetricsLog& log);

nlohmann::json params_to_json(const Parameters& params);
Parameters params_from_json(const nlohmann::json& j);
void save_params(const std::string& path, const Parameters& params);
Parameters load_params(const std::string& path);

}  // namespace snn
