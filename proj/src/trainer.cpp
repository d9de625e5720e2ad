#include "snngrad/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "snngrad/errors.hpp"
#include "snngrad/grad.hpp"
#include "snngrad/optim.hpp"
#include "snngrad/random.hpp"

namespace snn {

using nlohmann::json;

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

MetricsLog::MetricsLog(const std::string& path, bool deterministic)
    : deterministic_(deterministic), start_(now_seconds()) {
  if (!path.empty()) {
    out_.open(path);
    if (!out_) throw ConfigError("cannot open metrics file '" + path + "'");
  }
}

double MetricsLog::elapsed_seconds() const { return now_seconds() - start_; }

void MetricsLog::emit(json record) {
  if (deterministic_) {
    record.erase("wall_time_s");
  } else if (!record.contains("wall_time_s")) {
    record["wall_time_s"] = elapsed_seconds();
  }
  if (out_.is_open()) {
    out_ << record.dump() << '\n';
    out_.flush();
  }
  records_.push_back(std::move(record));
}

std::vector<LossSpec> classification_terms(const ExperimentConfig& cfg, std::size_t label) {
  const std::size_t outputs = cfg.layers.back();
  std::vector<LossSpec> terms;
  if (cfg.loss == LossChoice::count) {
    std::vector<double> targets(outputs, cfg.wrong_target_spikes);
    targets.at(label) = cfg.max_target_spikes;
    terms.emplace_back(CountLoss{std::move(targets)});
  } else if (cfg.loss == LossChoice::latency) {
    terms.emplace_back(LatencyLoss{label, cfg.beta_softmax});
    if (cfg.min_count_term && cfg.method.lambda_act > 0.0) terms.emplace_back(MinCountLoss{label});
  } else {
    throw ConfigError("classification needs the count or latency loss");
  }
  return terms;
}

SampleOutcome sample_gradient(const Parameters& params, const SpikeMatrix& input,
                              std::span<const LossSpec> terms, const ExperimentConfig& cfg) {
  const ForwardTrace trace = forward_rnn(params, input, cfg.shape(), cfg.neuron);
  const LossGrads seeds = compute_loss(trace.output_spikes(), terms);
  if (!std::isfinite(seeds.value)) throw DivergenceError("non-finite loss value");
  BackwardResult br = backprop(trace, params, seeds, cfg.method, cfg.neuron);
  if (cfg.method.pure_timing() && cfg.no_spike_penalty > 0.0 && cfg.optim.learning_rate > 0.0) {
    // no_spike_penalty is the weight increment per update, so divide out the
    // step size.
    apply_no_spike_penalty(trace, br.grads, cfg.no_spike_penalty / cfg.optim.learning_rate);
  }
  SampleOutcome out;
  out.grads = std::move(br.grads);
  out.loss = seeds.value;
  out.spikes = trace.non_input_spike_count();
  out.guarded_spikes = br.gtrace.guarded_spikes;
  out.silent_outputs = seeds.silent_outputs;
  return out;
}

Prediction predict(const SpikeMatrix& output, DecisionScheme scheme, const RealMatrix* potential) {
  Prediction p;
  const std::size_t n = output.cols();
  if (scheme == DecisionScheme::earliest_spike) {
    const auto first = first_spike_times(output);
    long best = kNoSpike;
    for (std::size_t j = 0; j < n; ++j) {
      if (first[j] == kNoSpike) continue;
      if (best == kNoSpike || first[j] < best) {
        best = first[j];
        p.label = j;
        p.tie = false;
      } else if (first[j] == best) {
        p.tie = true;
        const auto t = static_cast<std::size_t>(best);
        if (potential && (*potential)(t, j) > (*potential)(t, p.label)) p.label = j;
      }
    }
    p.silent = best == kNoSpike;
  } else {
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t t = 0; t < output.rows(); ++t) {
      for (std::size_t j = 0; j < n; ++j) counts[j] += output(t, j);
    }
    std::size_t best = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (counts[j] > best) {
        best = counts[j];
        p.label = j;
        p.tie = false;
      } else if (counts[j] == best && best > 0) {
        p.tie = true;
      }
    }
    p.silent = best == 0;
  }
  return p;
}

json EvalResult::to_json(const std::string& prefix) const {
  return {{prefix + "_accuracy", accuracy},
          {prefix + "_loss", mean_loss},
          {prefix + "_spikes_per_sample", spikes_per_sample},
          {prefix + "_ties", ties},
          {prefix + "_silent", silent},
          {prefix + "_silent_neurons", silent_neurons},
          {prefix + "_samples", samples}};
}

EvalResult evaluate(const Parameters& params, const std::vector<LabeledSample>& samples,
                    const ExperimentConfig& cfg) {
  struct Slot {
    bool correct = false;
    Prediction pred;
    double loss = 0.0;
    std::size_t spikes = 0;
    std::vector<std::uint8_t> fired;  // per hidden/output neuron
  };
  std::vector<Slot> slots(samples.size());
  parallel_for(samples.size(), cfg.worker_count(), [&](std::size_t i) {
    const auto& s = samples[i];
    const ForwardTrace trace = forward_rnn(params, s.input, cfg.shape(), cfg.neuron);
    const auto terms = classification_terms(cfg, s.label);
    slots[i].pred = predict(trace.output_spikes(), cfg.decision, &trace.potential.back());
    slots[i].correct = slots[i].pred.label == s.label;  // silent samples fall back to class 0
    slots[i].loss = compute_loss(trace.output_spikes(), terms).value;
    slots[i].spikes = trace.non_input_spike_count();
    for (std::size_t l = 1; l < trace.num_layers(); ++l) {
      const SpikeMatrix& s_l = trace.spikes[l];
      std::vector<std::uint8_t> any(s_l.cols(), 0);
      for (std::size_t t = 0; t < s_l.rows(); ++t) {
        for (std::size_t j = 0; j < s_l.cols(); ++j) any[j] |= s_l(t, j);
      }
      slots[i].fired.insert(slots[i].fired.end(), any.begin(), any.end());
    }
  });
  EvalResult r;
  r.samples = samples.size();
  std::size_t correct = 0;
  double loss = 0.0, spikes = 0.0;
  std::vector<std::uint8_t> fired;
  for (const auto& s : slots) {
    if (fired.empty()) fired.assign(s.fired.size(), 0);
    for (std::size_t k = 0; k < s.fired.size(); ++k) fired[k] |= s.fired[k];
    correct += s.correct;
    loss += s.loss;
    spikes += static_cast<double>(s.spikes);
    r.ties += s.pred.tie;
    r.silent += s.pred.silent;
  }
  if (r.samples > 0) {
    const double n = static_cast<double>(r.samples);
    r.accuracy = static_cast<double>(correct) / n;
    r.mean_loss = loss / n;
    r.spikes_per_sample = spikes / n;
    r.silent_neurons = static_cast<std::size_t>(std::count(fired.begin(), fired.end(), 0));
  }
  return r;
}

Datasets load_datasets(const ExperimentConfig& cfg) {
  Datasets d;
  const std::filesystem::path dir = cfg.data_dir;
  if (cfg.task == Task::mnist) {
    const std::size_t win = cfg.encoding_window();
    d.train = load_mnist_samples(dir, true, 0, cfg.train_samples, win, cfg.horizon);
    if (cfg.valid_samples > 0) {
      if (cfg.valid_offset < cfg.train_samples) {
        throw ConfigError("valid_offset overlaps the training slice");
      }
      d.valid = load_mnist_samples(dir, true, cfg.valid_offset, cfg.valid_samples, win, cfg.horizon);
    }
    if (cfg.test_samples > 0) d.test = load_mnist_samples(dir, false, 0, cfg.test_samples, win, cfg.horizon);
  } else if (cfg.task == Task::nmnist) {
    auto pool = load_nmnist_samples(dir / "Train", cfg.train_samples + cfg.valid_samples, cfg.horizon);
    const std::size_t n_train = std::min(cfg.train_samples, pool.size());
    d.valid.assign(std::make_move_iterator(pool.begin() + static_cast<long>(n_train)),
                   std::make_move_iterator(pool.end()));
    pool.resize(n_train);
    d.train = std::move(pool);
    if (cfg.test_samples > 0) d.test = load_nmnist_samples(dir / "Test", cfg.test_samples, cfg.horizon);
  } else {
    throw ConfigError("the matching task has no dataset");
  }
  if (d.train.empty()) throw ConfigError("no training samples found under '" + cfg.data_dir + "'");
  return d;
}

namespace {

void check_update(const ParamGrads& g, std::size_t iteration) {
  if (!g.all_finite()) {
    throw DivergenceError("non-finite gradient at iteration " + std::to_string(iteration));
  }
}

void check_params(const Parameters& p, std::size_t iteration) {
  for (const auto& layer : p.layers) {
    for (double w : layer.weights.flat()) {
      if (!std::isfinite(w)) throw DivergenceError("non-finite weight after iteration " + std::to_string(iteration));
    }
  }
}

}  // namespace

TrainResult train_classifier(const ExperimentConfig& cfg, const Datasets& data, MetricsLog& log) {
  cfg.validate();
  TrainResult result;
  result.params = init_params(cfg.shape(), cfg.seed, cfg.init_bias_center, cfg.neuron.theta,
                             cfg.init_weight_scale, cfg.init_bias_value);
  OptimizerState opt(cfg.optim);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<SampleOutcome> outcomes;

  double window_loss = 0.0, window_spikes = 0.0;
  std::size_t window_samples = 0, window_guarded = 0;
  auto emit_eval = [&](std::size_t epoch) {
    json rec{{"kind", "eval"}, {"epoch", epoch}, {"iteration", result.updates}};
    rec["train_loss"] = window_samples ? window_loss / static_cast<double>(window_samples) : 0.0;
    rec["train_spikes_per_sample"] = window_samples ? window_spikes / static_cast<double>(window_samples) : 0.0;
    rec["vstar_guarded"] = window_guarded;
    if (!data.valid.empty()) {
      result.valid = evaluate(result.params, data.valid, cfg);
      rec.update(result.valid.to_json("valid"));
    }
    log.emit(std::move(rec));
    window_loss = window_spikes = 0.0;
    window_samples = window_guarded = 0;
  };

  for (std::size_t epoch = 1; epoch <= cfg.epoch; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 0x5eed0000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      outcomes.assign(count, {});
      parallel_for(count, cfg.worker_count(), [&](std::size_t b) {
        const auto& s = data.train[order[start + b]];
        const auto terms = classification_terms(cfg, s.label);
        outcomes[b] = sample_gradient(result.params, s.input, terms, cfg);
      });
      ParamGrads batch = std::move(outcomes[0].grads);
      for (std::size_t b = 0; b < count; ++b) {
        if (b > 0) batch += outcomes[b].grads;
        window_loss += outcomes[b].loss;
        window_spikes += static_cast<double>(outcomes[b].spikes);
        window_guarded += outcomes[b].guarded_spikes;
      }
      window_samples += count;
      if (!std::isfinite(window_loss)) {
        throw DivergenceError("non-finite training loss at iteration " + std::to_string(result.updates));
      }
      check_update(batch, result.updates);
      optimizer_step(result.params, std::move(batch), opt);
      ++result.updates;
      check_params(result.params, result.updates);
      if (cfg.eval_every > 0 && result.updates % cfg.eval_every == 0) emit_eval(epoch);
    }
    if (cfg.eval_every == 0) emit_eval(epoch);
  }

  if (!data.test.empty()) {
    result.test = evaluate(result.params, data.test, cfg);
    json rec{{"kind", "test"}, {"epoch", cfg.epoch}, {"iteration", result.updates}};
    rec.update(result.test->to_json("test"));
    log.emit(std::move(rec));
  }
  if (!cfg.params_out.empty()) save_params(cfg.params_out, result.params);
  return result;
}

MatchingProblem make_matching_problem(const ExperimentConfig& cfg, std::size_t trial) {
  const std::uint64_t s = mix_seed(cfg.seed, 0x3a7c0000 + trial);
  MatchingProblem p;
  p.input = random_spiketrain(mix_seed(s, 1), cfg.layers.front(), cfg.input_spikes, cfg.horizon);
  p.params = init_params(cfg.shape(), mix_seed(s, 3), cfg.init_bias_center, cfg.neuron.theta,
                         cfg.init_weight_scale, cfg.init_bias_value);
  if (cfg.targets_from_initial_output) {
    p.targets = forward_rnn(p.params, p.input, cfg.shape(), cfg.neuron).output_spikes();
  } else {
    p.targets = random_spiketrain(mix_seed(s, 2), cfg.layers.back(), cfg.target_spikes, cfg.horizon);
  }
  return p;
}

double MatchingResult::mean_loss(std::size_t iteration) const {
  double sum = 0.0;
  for (const auto& t : trials) sum += t.loss.at(iteration);
  return trials.empty() ? 0.0 : sum / static_cast<double>(trials.size());
}

double MatchingResult::mean_final_loss() const {
  return trials.empty() ? 0.0 : mean_loss(trials.front().loss.size() - 1);
}

MatchingResult run_matching(const ExperimentConfig& cfg, MetricsLog& log) {
  cfg.validate();
  MatchingResult result;
  result.trials.resize(cfg.trials);
  ExperimentConfig inner = cfg;
  inner.threads = 1;
  inner.deterministic = true;

  parallel_for(cfg.trials, cfg.worker_count(), [&](std::size_t k) {
    MatchingProblem p = make_matching_problem(cfg, k);
    const std::vector<LossSpec> terms{SpikeTrainLoss{p.targets, cfg.kappa_exp}};
    OptimizerState opt(cfg.optim);
    auto& trial = result.trials[k];
    trial.loss.reserve(cfg.iterations + 1);
    for (std::size_t it = 0; it <= cfg.iterations; ++it) {
      if (it == cfg.iterations) {
        const auto trace = forward_rnn(p.params, p.input, cfg.shape(), cfg.neuron);
        trial.loss.push_back(compute_loss(trace.output_spikes(), terms).value);
        break;
      }
      SampleOutcome o;
      try {
        o = sample_gradient(p.params, p.input, terms, inner);
      } catch (const DivergenceError& e) {
        throw DivergenceError("trial " + std::to_string(k) + " iteration " + std::to_string(it) + ": " + e.what());
      }
      trial.loss.push_back(o.loss);
      trial.guarded_spikes += o.guarded_spikes;
      check_update(o.grads, it);
      optimizer_step(p.params, std::move(o.grads), opt);
      check_params(p.params, it);
    }
    trial.params = std::move(p.params);
  });

  // Records are emitted after the fact, in a fixed order.
  const std::size_t step = cfg.eval_every == 0 ? std::max<std::size_t>(1, cfg.iterations) : cfg.eval_every;
  for (std::size_t it = 0; it <= cfg.iterations; it += step) {
    json rec{{"kind", "matching"}, {"iteration", it}, {"mean_loss", result.mean_loss(it)}};
    std::vector<double> per;
    for (const auto& t : result.trials) per.push_back(t.loss[it]);
    rec["trial_loss"] = per;
    log.emit(std::move(rec));
  }
  std::size_t guarded = 0;
  for (const auto& t : result.trials) guarded += t.guarded_spikes;
  log.emit({{"kind", "matching_summary"},
            {"iterations", cfg.iterations},
            {"trials", cfg.trials},
            {"initial_loss", result.mean_initial_loss()},
            {"final_loss", result.mean_final_loss()},
            {"vstar_guarded", guarded}});
  if (!cfg.params_out.empty() && !result.trials.empty()) save_params(cfg.params_out, result.trials.front().params);
  return result;
}

json params_to_json(const Parameters& params) {
  json layers = json::array();
  for (const auto& l : params.layers) {
    json w = json::array();
    for (std::size_t i = 0; i < l.weights.rows(); ++i) {
      const auto row = l.weights.row(i);
      w.push_back(std::vector<double>(row.begin(), row.end()));
    }
    layers.push_back({{"weights", w}, {"bias", l.bias}});
  }
  return {{"layers", layers}};
}

Parameters params_from_json(const json& j) {
  Parameters p;
  try {
    for (const auto& l : j.at("layers")) {
      const auto& w = l.at("weights");
      const std::size_t rows = w.size();
      const std::size_t cols = rows ? w[0].size() : 0;
      LayerParams lp{RealMatrix(rows, cols), l.at("bias").get<std::vector<double>>()};
      for (std::size_t i = 0; i < rows; ++i) {
        if (w[i].size() != cols) throw ParseError("ragged weight matrix");
        for (std::size_t c = 0; c < cols; ++c) lp.weights(i, c) = w[i][c].get<double>();
      }
      if (lp.bias.size() != cols) throw ParseError("bias length does not match the weight matrix");
      p.layers.push_back(std::move(lp));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed parameter file: ") + e.what());
  }
  return p;
}

void save_params(const std::string& path, const Parameters& params) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write parameters to '" + path + "'");
  out << params_to_json(params).dump() << '\n';
}

Parameters load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read parameters from '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return params_from_json(j);
}

}  // namespace snn
