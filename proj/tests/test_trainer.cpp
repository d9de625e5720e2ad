#include <atomic>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "snngrad/config.hpp"
#include "snngrad/errors.hpp"
#include "snngrad/optim.hpp"
#include "snngrad/random.hpp"
#include "snngrad/trainer.hpp"

using namespace snn;
using nlohmann::json;

namespace {

// Ten classes; class c lights up pixel block c early and a shared block late.
std::vector<LabeledSample> toy_digits(std::size_t n, std::uint64_t seed, std::size_t horizon) {
  Rng rng(seed);
  std::vector<LabeledSample> out;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t label = k % 10;
    std::vector<std::uint8_t> img(784, 0);
    for (std::size_t p = 0; p < 40; ++p) {
      if (rng.uniform() < 0.8) img[label * 60 + p] = static_cast<std::uint8_t>(200 + rng.below(56));
    }
    for (std::size_t p = 700; p < 720; ++p) img[p] = static_cast<std::uint8_t>(60 + rng.below(60));
    out.push_back({latency_encode(img, horizon, horizon), label});
  }
  return out;
}

ExperimentConfig toy_config(const std::string& name) {
  ExperimentConfig cfg = preset(name);
  cfg.layers = {784, 30, 10};
  cfg.horizon = 30;
  cfg.epoch = 2;
  cfg.batch_size = 8;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("presets validate") {
  for (const auto& name : preset_names()) {
    INFO(name);
    CHECK_NOTHROW(preset(name).validate());
  }
  CHECK_THROWS_AS(preset("mnist_magic"), ConfigError);

  const ExperimentConfig m = preset("mnist_antlr");
  CHECK(m.neuron.alpha_v == 0.99);
  CHECK(m.optim.kind == OptimizerKind::adam);
  CHECK(m.optim.grad_clip == 1e6);
  CHECK(m.init_bias_center);
  CHECK(m.loss == LossChoice::latency);
  CHECK(m.min_count_term);
  CHECK(m.decision == DecisionScheme::earliest_spike);
  CHECK(preset("mnist_timing").optim.learning_rate == 1e-4);
  CHECK(preset("mnist_activation").decision == DecisionScheme::most_spike);
  CHECK(preset("nmnist_activation").max_target_spikes == 10.0);
  CHECK(preset("nmnist_antlr").beta_softmax == doctest::Approx(1.0 / 6.0));
  CHECK(preset("matching_timing").neuron.alpha_i == 0.95);
  CHECK(preset("landscape").layers.back() == 1);
}

TEST_CASE("config JSON overlay") {
  ExperimentConfig base = preset("matching_antlr");
  const json j = json::parse(R"({
    "neuron": {"alpha_v": 0.9},
    "gradient": {"method": "activation", "ste_alpha": 0.5},
    "optimization": {"learning_rate": 0.01, "optimizer": "adam", "init_bias_center": 1},
    "iterations": 7
  })");
  const ExperimentConfig c = apply_json(base, j);
  CHECK(c.neuron.alpha_v == 0.9);
  CHECK(c.neuron.alpha_i == 0.95);
  CHECK(c.method.lambda_tim == 0.0);
  CHECK(c.method.ste_alpha == 0.5);
  CHECK(c.optim.learning_rate == 0.01);
  CHECK(c.optim.kind == OptimizerKind::adam);
  CHECK(c.init_bias_center);
  CHECK(c.iterations == 7);

  // Explicit lambdas win over the method shorthand in the same object.
  const ExperimentConfig d = apply_json(base, json::parse(R"({"method": "timing", "lambda_act": 0.5})"));
  CHECK(d.method.lambda_act == 0.5);
  CHECK(d.method.lambda_tim == 1.0);

  CHECK_THROWS_AS(apply_json(base, json::parse(R"({"alpha_vv": 1})")), ConfigError);
  CHECK_THROWS_AS(apply_json(base, json::parse(R"({"horizon": -3})")), ConfigError);
  CHECK_THROWS_AS(apply_json(base, json::parse(R"({"horizon": "long"})")), ConfigError);
  CHECK_THROWS_AS(apply_json(base, json::parse(R"({"loss": "hinge"})")), ConfigError);

  for (const auto& name : preset_names()) {
    const ExperimentConfig p = preset(name);
    const ExperimentConfig back = apply_json(ExperimentConfig{}, to_json(p));
    CHECK(to_json(back) == to_json(p));
  }
}

TEST_CASE("loss and method compatibility") {
  ExperimentConfig c = preset("mnist_timing");
  c.loss = LossChoice::count;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = preset("mnist_activation");
  c.loss = LossChoice::latency;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = preset("mnist_antlr");
  c.loss = LossChoice::count;
  CHECK_NOTHROW(c.validate());
  c = preset("mnist_antlr");
  c.layers = {100, 10};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = preset("matching_antlr");
  c.input_spikes = 101;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = preset("matching_bptt");
  CHECK(c.method.use_reset_paths);
  c.loss = LossChoice::latency;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("decision schemes") {
  SpikeMatrix out(10, 3);
  out(5, 0) = 1;
  out(2, 1) = out(8, 1) = 1;
  out(2, 2) = out(3, 2) = out(4, 2) = 1;
  Prediction p = predict(out, DecisionScheme::earliest_spike);
  CHECK(p.label == 1);
  CHECK(p.tie);  // output 2 also fires at step 2
  CHECK_FALSE(p.silent);
  p = predict(out, DecisionScheme::most_spike);
  CHECK(p.label == 2);
  CHECK_FALSE(p.tie);

  // Potentials break the earliest-spike tie; the most-spike scheme ignores them.
  RealMatrix v(10, 3, 0.0);
  v(2, 1) = 1.2;
  v(2, 2) = 1.5;
  p = predict(out, DecisionScheme::earliest_spike, &v);
  CHECK(p.label == 2);
  CHECK(p.tie);
  v(2, 1) = 1.5;
  CHECK(predict(out, DecisionScheme::earliest_spike, &v).label == 1);
  CHECK(predict(out, DecisionScheme::most_spike, &v).label == 2);

  out(9, 1) = 1;
  p = predict(out, DecisionScheme::most_spike);
  CHECK(p.label == 1);
  CHECK(p.tie);

  p = predict(SpikeMatrix(10, 3), DecisionScheme::earliest_spike);
  CHECK(p.silent);
  CHECK(p.label == 0);
  p = predict(SpikeMatrix(10, 3), DecisionScheme::most_spike);
  CHECK(p.silent);
  CHECK_FALSE(p.tie);
}

TEST_CASE("parallel_for covers every index once") {
  for (std::size_t workers : {1u, 2u, 7u}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, workers, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) CHECK(h == 1);
  }
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 4) throw DivergenceError("boom");
                  }),
                  DivergenceError);
}

TEST_CASE("non-finite parameters are rejected") {
  ExperimentConfig cfg = preset("matching_antlr");
  MatchingProblem mp = make_matching_problem(cfg, 0);
  mp.params.layers[0].weights(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<LossSpec> terms{SpikeTrainLoss{mp.targets, cfg.kappa_exp}};
  CHECK_THROWS_AS(sample_gradient(mp.params, mp.input, terms, cfg), ConfigError);
}

TEST_CASE("classifier training is deterministic and learns") {
  Datasets data;
  data.train = toy_digits(200, 1, 30);
  data.valid = toy_digits(100, 2, 30);
  data.test = toy_digits(100, 3, 30);

  ExperimentConfig cfg = toy_config("mnist_antlr");
  cfg.deterministic = true;
  MetricsLog log_a("", true);
  const TrainResult a = train_classifier(cfg, data, log_a);
  CHECK(a.updates == 50);
  REQUIRE(a.test.has_value());
  CHECK(a.test->accuracy > 0.5);

  // Same seed, more threads: the batch reduction order is fixed, so the run
  // is bit-identical.
  cfg.deterministic = false;
  cfg.threads = 4;
  MetricsLog log_b("", true);
  const TrainResult b = train_classifier(cfg, data, log_b);
  CHECK(b.params == a.params);
  CHECK(log_b.records() == log_a.records());
  for (const auto& r : log_a.records()) CHECK_FALSE(r.contains("wall_time_s"));

  cfg.seed = 12;
  MetricsLog log_c("", true);
  CHECK_FALSE(train_classifier(cfg, data, log_c).params == a.params);

  ExperimentConfig act = toy_config("mnist_activation");
  MetricsLog log_d;
  const TrainResult d = train_classifier(act, data, log_d);
  CHECK(d.test->accuracy > 0.5);
  CHECK(log_d.records().front().contains("wall_time_s"));
}

TEST_CASE("matching runs") {
  ExperimentConfig cfg = preset("matching_antlr");
  cfg.trials = 3;
  cfg.iterations = 40;
  cfg.eval_every = 10;
  MetricsLog la("", true), lb("", true);
  const MatchingResult a = run_matching(cfg, la);
  cfg.threads = 3;
  const MatchingResult b = run_matching(cfg, lb);
  CHECK(la.records() == lb.records());
  REQUIRE(a.trials.size() == 3);
  CHECK(a.trials[0].loss.size() == 41);
  CHECK(a.trials[1].params == b.trials[1].params);
  CHECK(la.records().size() == 5 + 1);

  // Targets equal to the untrained output: zero loss, nothing to learn.
  cfg.targets_from_initial_output = true;
  MetricsLog lc("", true);
  const MatchingResult c = run_matching(cfg, lc);
  CHECK(c.mean_initial_loss() == 0.0);
  CHECK(c.mean_final_loss() == 0.0);

  // Every method sees the same problems.
  ExperimentConfig other = preset("matching_activation");
  const MatchingProblem p = make_matching_problem(cfg, 2), q = make_matching_problem(other, 2);
  CHECK(p.input == q.input);
  CHECK(p.params == q.params);
}

TEST_CASE("parameter files round trip") {
  const Parameters p = init_params({{5, 4, 3}, 10, false}, 9, true);
  const auto path = std::filesystem::temp_directory_path() / "snngrad_params_test.json";
  save_params(path.string(), p);
  const Parameters q = load_params(path.string());
  CHECK(q == p);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(params_from_json(json::parse(R"({"layers": [{"weights": [[1, 2], [3]], "bias": [0, 0]}]})")),
                  ParseError);
}

TEST_CASE("zero learning rate leaves parameters alone") {
  for (const char* name : {"matching_antlr", "matching_timing", "matching_bptt"}) {
    ExperimentConfig cfg = preset(name);
    cfg.trials = 2;
    cfg.iterations = 25;
    cfg.optim.learning_rate = 0.0;
    MetricsLog log("", true);
    const MatchingResult r = run_matching(cfg, log);
    for (std::size_t t = 0; t < 2; ++t) {
      CHECK(r.trials[t].params == make_matching_problem(cfg, t).params);
      CHECK(r.trials[t].loss.front() == r.trials[t].loss.back());
    }
  }

  Datasets data;
  data.train = toy_digits(40, 1, 30);
  data.valid = toy_digits(20, 2, 30);
  ExperimentConfig cfg = toy_config("mnist_antlr");
  cfg.optim.learning_rate = 0.0;
  MetricsLog log("", true);
  const TrainResult r = train_classifier(cfg, data, log);
  CHECK(r.updates == 10);
  CHECK(r.params == init_params(cfg.shape(), cfg.seed, cfg.init_bias_center, cfg.neuron.theta,
                                cfg.init_weight_scale, cfg.init_bias_value));
}

TEST_CASE("ANTLR lowers the matching loss") {
  ExperimentConfig cfg = preset("matching_antlr");
  cfg.trials = 4;
  cfg.iterations = 300;
  MetricsLog log("", true);
  const MatchingResult r = run_matching(cfg, log);
  CHECK(r.mean_final_loss() < r.mean_initial_loss());
}
