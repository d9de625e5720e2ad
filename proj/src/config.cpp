#include "snngrad/config.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <thread>

#include "snngrad/data.hpp"
#include "snngrad/errors.hpp"

namespace snn {

using nlohmann::json;

std::size_t ExperimentConfig::worker_count() const {
  if (deterministic) return 1;
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

void ExperimentConfig::validate() const {
  shape().validate();
  neuron.validate();
  method.validate();
  optim.validate();
  if (layers.size() < 2) throw ConfigError("layers: need an input and an output layer");
  if (input_window > horizon) throw ConfigError("input_window must not exceed horizon");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(init_weight_scale > 0.0) || !std::isfinite(init_weight_scale)) {
    throw ConfigError("init_weight_scale must be positive");
  }
  if (!std::isfinite(init_bias_value)) throw ConfigError("init_bias_value must be finite");
  if (!(beta_softmax > 0.0)) throw ConfigError("beta_softmax must be positive");
  if (!(kappa_exp > 0.0 && kappa_exp < 1.0)) throw ConfigError("kappa_exp must lie in (0, 1)");
  if (!(max_target_spikes >= 0.0) || !(wrong_target_spikes >= 0.0)) {
    throw ConfigError("count targets must be non-negative");
  }
  if (!(no_spike_penalty >= 0.0)) throw ConfigError("no_spike_penalty must be non-negative");

  // The count loss only reaches the parameters through activation gradients
  // and the latency loss only through timing gradients.
  if (loss == LossChoice::count && method.pure_timing()) {
    throw ConfigError("the count loss needs activation gradients; pure timing method cannot train on it");
  }
  if (loss == LossChoice::latency && method.pure_activation()) {
    throw ConfigError("the latency loss needs timing gradients; pure activation method cannot train on it");
  }

  if (task == Task::matching) {
    if (input_spikes > horizon || target_spikes > horizon) {
      throw ConfigError("input_spikes/target_spikes exceed the horizon");
    }
    if (loss != LossChoice::spike_train) throw ConfigError("the matching task uses the spike_train loss");
    if (trials == 0) throw ConfigError("trials must be positive");
  } else {
    const std::size_t expect_in = task == Task::mnist ? 784 : kNmnistInputs;
    if (layers.front() != expect_in) {
      throw ConfigError(task_name(task) + " needs " + std::to_string(expect_in) + " inputs, layers[0] = " +
                        std::to_string(layers.front()));
    }
    if (layers.back() != 10) throw ConfigError(task_name(task) + " needs 10 outputs");
    if (loss == LossChoice::spike_train) throw ConfigError("classification tasks use the count or latency loss");
    if (epoch == 0) throw ConfigError("epoch must be positive");
  }
}

std::string task_name(Task task) {
  switch (task) {
    case Task::matching: return "matching";
    case Task::mnist: return "mnist";
    case Task::nmnist: return "nmnist";
  }
  return "?";
}

std::string loss_name(LossChoice loss) {
  switch (loss) {
    case LossChoice::count: return "count";
    case LossChoice::spike_train: return "spike_train";
    case LossChoice::latency: return "latency";
  }
  return "?";
}

std::string decision_name(DecisionScheme scheme) {
  return scheme == DecisionScheme::earliest_spike ? "earliest" : "most";
}

namespace {

Task parse_task(const std::string& s) {
  if (s == "matching") return Task::matching;
  if (s == "mnist") return Task::mnist;
  if (s == "nmnist") return Task::nmnist;
  throw ConfigError("unknown task '" + s + "' (matching, mnist, nmnist)");
}

LossChoice parse_loss(const std::string& s) {
  if (s == "count") return LossChoice::count;
  if (s == "spike_train") return LossChoice::spike_train;
  if (s == "latency") return LossChoice::latency;
  throw ConfigError("unknown loss '" + s + "' (count, spike_train, latency)");
}

DecisionScheme parse_decision(const std::string& s) {
  if (s == "earliest") return DecisionScheme::earliest_spike;
  if (s == "most") return DecisionScheme::most_spike;
  throw ConfigError("unknown decision '" + s + "' (earliest, most)");
}

ClipMode parse_clip(const std::string& s) {
  if (s == "norm") return ClipMode::norm;
  if (s == "value") return ClipMode::value;
  throw ConfigError("unknown clip_mode '" + s + "' (norm, value)");
}

MethodConfig parse_method(const std::string& s, MethodConfig m) {
  if (s == "antlr") {
    m.lambda_act = 1.0;
    m.lambda_tim = 1.0;
    m.use_reset_paths = false;
  } else if (s == "activation") {
    m.lambda_act = 1.0;
    m.lambda_tim = 0.0;
    m.use_reset_paths = false;
  } else if (s == "timing") {
    m.lambda_act = 0.0;
    m.lambda_tim = 1.0;
    m.use_reset_paths = false;
  } else if (s == "bptt") {
    m.lambda_act = 1.0;
    m.lambda_tim = 0.0;
    m.use_reset_paths = true;
  } else if (s != "custom") {
    throw ConfigError("unknown method '" + s + "' (antlr, activation, timing, bptt)");
  }
  return m;
}

std::string method_label(const MethodConfig& m) {
  if (m.use_reset_paths) return "bptt";
  if (m.lambda_act == 1.0 && m.lambda_tim == 1.0) return "antlr";
  if (m.lambda_act == 1.0 && m.lambda_tim == 0.0) return "activation";
  if (m.lambda_act == 0.0 && m.lambda_tim == 1.0) return "timing";
  return "custom";
}

template <typename T>
T get(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

std::size_t get_size(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer, got " + v.dump());
  }
  return v.get<std::size_t>();
}

using Setter = std::function<void(ExperimentConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto real = [&](const char* k, double ExperimentConfig::*f) {
      t[k] = [f](ExperimentConfig& c, const json& v, const std::string& key) { c.*f = get<double>(v, key); };
    };
    auto size = [&](const char* k, std::size_t ExperimentConfig::*f) {
      t[k] = [f](ExperimentConfig& c, const json& v, const std::string& key) { c.*f = get_size(v, key); };
    };
    auto flag = [&](const char* k, bool ExperimentConfig::*f) {
      t[k] = [f](ExperimentConfig& c, const json& v, const std::string& key) { c.*f = get<bool>(v, key); };
    };
    auto text = [&](const char* k, std::string ExperimentConfig::*f) {
      t[k] = [f](ExperimentConfig& c, const json& v, const std::string& key) { c.*f = get<std::string>(v, key); };
    };
    auto neuron = [&](const char* k, double NeuronConfig::*f) {
      t[k] = [f](ExperimentConfig& c, const json& v, const std::string& key) { c.neuron.*f = get<double>(v, key); };
    };
    auto method = [&](const char* k, double MethodConfig::*f) {
      t[k] = [f](ExperimentConfig& c, const json& v, const std::string& key) { c.method.*f = get<double>(v, key); };
    };
    auto optim = [&](const char* k, double OptimizerConfig::*f) {
      t[k] = [f](ExperimentConfig& c, const json& v, const std::string& key) { c.optim.*f = get<double>(v, key); };
    };

    t["task"] = [](ExperimentConfig& c, const json& v, const std::string& k) { c.task = parse_task(get<std::string>(v, k)); };
    t["layers"] = [](ExperimentConfig& c, const json& v, const std::string& k) {
      if (!v.is_array()) throw ConfigError("config key 'layers' must be an array");
      c.layers.clear();
      for (const auto& e : v) c.layers.push_back(get_size(e, k));
    };
    size("horizon", &ExperimentConfig::horizon);
    size("input_window", &ExperimentConfig::input_window);
    flag("single_spike_restriction", &ExperimentConfig::single_spike_restriction);

    neuron("alpha_v", &NeuronConfig::alpha_v);
    neuron("alpha_i", &NeuronConfig::alpha_i);
    neuron("beta_v", &NeuronConfig::beta_v);
    neuron("beta_i", &NeuronConfig::beta_i);
    neuron("beta_bias", &NeuronConfig::beta_bias);
    neuron("theta", &NeuronConfig::theta);

    t["method"] = [](ExperimentConfig& c, const json& v, const std::string& k) {
      c.method = parse_method(get<std::string>(v, k), c.method);
    };
    method("lambda_act", &MethodConfig::lambda_act);
    method("lambda_tim", &MethodConfig::lambda_tim);
    method("ste_alpha", &MethodConfig::ste_alpha);
    method("ste_beta", &MethodConfig::ste_beta);
    t["use_reset_paths"] = [](ExperimentConfig& c, const json& v, const std::string& k) {
      c.method.use_reset_paths = get<bool>(v, k);
    };

    t["loss"] = [](ExperimentConfig& c, const json& v, const std::string& k) { c.loss = parse_loss(get<std::string>(v, k)); };
    real("beta_softmax", &ExperimentConfig::beta_softmax);
    real("kappa_exp", &ExperimentConfig::kappa_exp);
    real("max_target_spikes", &ExperimentConfig::max_target_spikes);
    real("wrong_target_spikes", &ExperimentConfig::wrong_target_spikes);
    flag("min_count_term", &ExperimentConfig::min_count_term);
    real("no_spike_penalty", &ExperimentConfig::no_spike_penalty);
    t["decision"] = [](ExperimentConfig& c, const json& v, const std::string& k) {
      c.decision = parse_decision(get<std::string>(v, k));
    };

    t["optimizer"] = [](ExperimentConfig& c, const json& v, const std::string& k) {
      c.optim.kind = parse_optimizer(get<std::string>(v, k));
    };
    optim("learning_rate", &OptimizerConfig::learning_rate);
    optim("lr", &OptimizerConfig::learning_rate);
    optim("weight_decay", &OptimizerConfig::weight_decay);
    optim("grad_clip", &OptimizerConfig::grad_clip);
    optim("adam_beta1", &OptimizerConfig::beta1);
    optim("adam_beta2", &OptimizerConfig::beta2);
    optim("adam_epsilon", &OptimizerConfig::epsilon);
    t["clip_mode"] = [](ExperimentConfig& c, const json& v, const std::string& k) {
      c.optim.clip_mode = parse_clip(get<std::string>(v, k));
    };
    t["init_bias_center"] = [](ExperimentConfig& c, const json& v, const std::string& k) {
      // Accepts 0/1 as well as true/false.
      c.init_bias_center = v.is_boolean() ? v.get<bool>() : get_size(v, k) != 0;
    };
    real("init_weight_scale", &ExperimentConfig::init_weight_scale);
    real("init_bias_value", &ExperimentConfig::init_bias_value);
    size("epoch", &ExperimentConfig::epoch);
    size("batch_size", &ExperimentConfig::batch_size);
    t["seed"] = [](ExperimentConfig& c, const json& v, const std::string& k) { c.seed = get_size(v, k); };

    text("data_dir", &ExperimentConfig::data_dir);
    size("train_samples", &ExperimentConfig::train_samples);
    size("valid_samples", &ExperimentConfig::valid_samples);
    size("test_samples", &ExperimentConfig::test_samples);
    size("valid_offset", &ExperimentConfig::valid_offset);

    size("trials", &ExperimentConfig::trials);
    size("iterations", &ExperimentConfig::iterations);
    size("input_spikes", &ExperimentConfig::input_spikes);
    size("target_spikes", &ExperimentConfig::target_spikes);
    flag("targets_from_initial_output", &ExperimentConfig::targets_from_initial_output);

    size("threads", &ExperimentConfig::threads);
    flag("deterministic", &ExperimentConfig::deterministic);
    size("eval_every", &ExperimentConfig::eval_every);
    text("metrics_path", &ExperimentConfig::metrics_path);
    text("params_out", &ExperimentConfig::params_out);
    return t;
  }();
  return table;
}

void apply_object(ExperimentConfig& cfg, const json& j, const std::string& where) {
  // "method" goes first so explicit lambda_* keys in the same object win.
  if (auto it = j.find("method"); it != j.end() && !it->is_object()) setters().at("method")(cfg, *it, "method");
  for (const auto& [key, value] : j.items()) {
    if (key == "preset" || (key == "method" && !value.is_object())) continue;
    if (value.is_object()) {
      apply_object(cfg, value, where + key + ".");
      continue;
    }
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + where + key + "'");
    it->second(cfg, value, where + key);
  }
}

ExperimentConfig matching_base() {
  // Spike-train matching settings.
  ExperimentConfig c;
  c.task = Task::matching;
  c.layers = {10, 50, 50, 5};
  c.horizon = 100;
  c.neuron.alpha_v = 0.95;
  c.neuron.alpha_i = 0.95;
  c.neuron.beta_v = 0.25;
  c.neuron.beta_i = 0.25;
  c.neuron.beta_bias = 1.0 - c.neuron.alpha_v;
  c.init_weight_scale = 0.5;
  c.method.ste_alpha = 0.3;
  c.method.ste_beta = 1.0;
  c.loss = LossChoice::spike_train;
  c.kappa_exp = 0.95;
  c.optim = {OptimizerKind::sgd, 1e-3, 0.0, 1e5};
  c.init_bias_center = false;
  c.trials = 10;
  c.iterations = 5000;
  c.input_spikes = 3;
  c.target_spikes = 1;
  c.batch_size = 1;
  c.eval_every = 100;
  return c;
}

ExperimentConfig mnist_base() {
  ExperimentConfig c;
  c.task = Task::mnist;
  c.layers = {784, 800, 10};
  c.horizon = 100;
  c.neuron.alpha_v = 0.99;
  c.neuron.alpha_i = 0.99;
  c.neuron.beta_v = 0.4;
  c.neuron.beta_i = 0.4;
  c.neuron.beta_bias = 0.01;
  c.init_weight_scale = 0.7;
  c.input_window = 20;
  c.optim = {OptimizerKind::adam, 1e-3, 0.0, 1e6};
  c.epoch = 10;
  c.batch_size = 16;
  c.train_samples = 50000;
  c.valid_samples = 10000;
  c.valid_offset = 50000;
  c.test_samples = 10000;
  c.data_dir = "data/mnist";
  return c;
}

ExperimentConfig nmnist_base() {
  ExperimentConfig c;
  c.task = Task::nmnist;
  c.layers = {kNmnistInputs, 800, 10};
  c.horizon = 300;
  c.neuron.alpha_v = 0.99;
  c.neuron.alpha_i = 0.99;
  c.neuron.beta_v = 0.4;
  c.neuron.beta_i = 0.4;
  c.neuron.beta_bias = 0.01;
  c.init_weight_scale = 0.7;
  c.optim = {OptimizerKind::adam, 1e-3, 0.0, 1.0};
  c.epoch = 5;
  c.batch_size = 16;
  c.init_bias_center = false;
  c.train_samples = 50000;
  c.valid_samples = 10000;
  c.valid_offset = 50000;
  c.test_samples = 10000;
  c.data_dir = "data/nmnist";
  return c;
}

void as_activation_classifier(ExperimentConfig& c, double target) {
  c.method = MethodConfig::activation();
  c.method.ste_alpha = 1.0;
  c.method.ste_beta = 3.0;
  c.loss = LossChoice::count;
  c.max_target_spikes = target;
  c.wrong_target_spikes = 0.0;
  c.decision = DecisionScheme::most_spike;
}

void as_timing_classifier(ExperimentConfig& c, double beta) {
  c.method = MethodConfig::timing();
  c.loss = LossChoice::latency;
  c.beta_softmax = beta;
  c.min_count_term = false;
  c.decision = DecisionScheme::earliest_spike;
}

void as_antlr_classifier(ExperimentConfig& c, double beta) {
  c.method = MethodConfig::antlr();
  c.method.ste_alpha = 1.0;
  c.method.ste_beta = 3.0;
  c.loss = LossChoice::latency;
  c.beta_softmax = beta;
  c.min_count_term = true;
  c.decision = DecisionScheme::earliest_spike;
}

}  // namespace

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name.starts_with("matching_") || name == "landscape") {
    c = matching_base();
    const std::string m = name == "landscape" ? "antlr" : name.substr(9);
    c.method = parse_method(m, c.method);
    if (name == "landscape") {
      c.trials = 1;
      c.layers = {10, 50, 50, 1};
      c.targets_from_initial_output = false;
    }
  } else if (name == "mnist_antlr") {
    c = mnist_base();
    as_antlr_classifier(c, 1.0);
    c.init_bias_center = true;
    c.optim.learning_rate = 1e-3;
  } else if (name == "mnist_activation") {
    c = mnist_base();
    as_activation_classifier(c, 1.0);
    c.init_bias_center = false;
    c.optim.learning_rate = 1e-3;
  } else if (name == "mnist_timing") {
    c = mnist_base();
    as_timing_classifier(c, 1.0);
    c.init_bias_center = true;
    c.optim.learning_rate = 1e-4;
  } else if (name == "nmnist_antlr") {
    c = nmnist_base();
    as_antlr_classifier(c, 1.0 / 6.0);
    c.optim.grad_clip = 1.0;
    c.optim.learning_rate = 1e-3;
  } else if (name == "nmnist_activation") {
    c = nmnist_base();
    as_activation_classifier(c, 10.0);
    c.optim.grad_clip = 10.0;
    c.optim.learning_rate = 1e-3;
  } else if (name == "nmnist_timing") {
    c = nmnist_base();
    as_timing_classifier(c, 1.0 / 3.0);
    c.optim.grad_clip = 1.0;
    c.optim.learning_rate = 1e-4;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return c;
}

std::vector<std::string> preset_names() {
  return {"matching_antlr", "matching_activation", "matching_timing", "matching_bptt", "landscape",
          "mnist_antlr",    "mnist_activation",    "mnist_timing",    "nmnist_antlr",  "nmnist_activation",
          "nmnist_timing"};
}

ExperimentConfig apply_json(ExperimentConfig base, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  apply_object(base, j, "");
  return base;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["task"] = task_name(c.task);
  j["network"] = {{"layers", c.layers},
                  {"horizon", c.horizon},
                  {"input_window", c.input_window},
                  {"single_spike_restriction", c.single_spike_restriction}};
  j["neuron"] = {{"alpha_v", c.neuron.alpha_v}, {"alpha_i", c.neuron.alpha_i}, {"beta_v", c.neuron.beta_v},
                 {"beta_i", c.neuron.beta_i},   {"beta_bias", c.neuron.beta_bias}, {"theta", c.neuron.theta}};
  j["gradient"] = {{"method", method_label(c.method)},
                   {"lambda_act", c.method.lambda_act},
                   {"lambda_tim", c.method.lambda_tim},
                   {"ste_alpha", c.method.ste_alpha},
                   {"ste_beta", c.method.ste_beta},
                   {"use_reset_paths", c.method.use_reset_paths}};
  j["objective"] = {{"loss", loss_name(c.loss)},
                    {"beta_softmax", c.beta_softmax},
                    {"kappa_exp", c.kappa_exp},
                    {"max_target_spikes", c.max_target_spikes},
                    {"wrong_target_spikes", c.wrong_target_spikes},
                    {"min_count_term", c.min_count_term},
                    {"no_spike_penalty", c.no_spike_penalty},
                    {"decision", decision_name(c.decision)}};
  j["optimization"] = {{"optimizer", optimizer_name(c.optim.kind)},
                       {"learning_rate", c.optim.learning_rate},
                       {"weight_decay", c.optim.weight_decay},
                       {"grad_clip", c.optim.grad_clip},
                       {"clip_mode", c.optim.clip_mode == ClipMode::norm ? "norm" : "value"},
                       {"adam_beta1", c.optim.beta1},
                       {"adam_beta2", c.optim.beta2},
                       {"adam_epsilon", c.optim.epsilon},
                       {"init_bias_center", c.init_bias_center},
                       {"init_weight_scale", c.init_weight_scale},
                       {"init_bias_value", c.init_bias_value},
                       {"epoch", c.epoch},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed}};
  j["data"] = {{"data_dir", c.data_dir},
               {"train_samples", c.train_samples},
               {"valid_samples", c.valid_samples},
               {"valid_offset", c.valid_offset},
               {"test_samples", c.test_samples}};
  j["matching"] = {{"trials", c.trials},
                   {"iterations", c.iterations},
                   {"input_spikes", c.input_spikes},
                   {"target_spikes", c.target_spikes},
                   {"targets_from_initial_output", c.targets_from_initial_output}};
  j["run"] = {{"threads", c.threads},
              {"deterministic", c.deterministic},
              {"eval_every", c.eval_every},
              {"metrics_path", c.metrics_path},
              {"params_out", c.params_out}};
  return j;
}

ExperimentConfig load_config(const std::string& name_or_path) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return preset(name_or_path);

  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("config '" + name_or_path + "' is neither a preset nor a readable file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(name_or_path + ": " + e.what());
  }
  ExperimentConfig base;
  if (auto it = j.find("preset"); it != j.end()) base = preset(get<std::string>(*it, "preset"));
  return apply_json(base, j);
}

}  // namespace snn
