// Command-line front end: train, eval, matching, landscape, gradcheck, encode.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "snngrad/analysis.hpp"
#include "snngrad/config.hpp"
#include "snngrad/data.hpp"
#include "snngrad/errors.hpp"
#include "snngrad/landscape.hpp"
#include "snngrad/random.hpp"
#include "snngrad/simd/kernels.hpp"
#include "snngrad/trainer.hpp"

using namespace snn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 1, kDiverged = 2, kVerify = 3 };

// Flags that override the config file. Unset flags leave the file alone.
struct Overrides {
  std::string config;
  std::optional<double> alpha_v, alpha_i, beta_softmax, grad_clip, kappa_exp, learning_rate, max_target_spikes,
      ste_alpha, ste_beta, weight_decay, lambda_act, lambda_tim, no_spike_penalty;
  std::optional<int> init_bias_center;
  std::optional<std::string> optimizer, method, loss, decision, clip_mode, data_dir, metrics, params_out;
  std::optional<std::size_t> epoch, batch_size, horizon, input_window, train_samples, valid_samples, test_samples,
      trials, iterations, target_spikes, input_spikes, threads, eval_every;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> layers;
  bool deterministic = false;
  bool single_spike = false;
  bool reset_paths = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "preset name or JSON config file");
    app->add_option("--alpha-v", alpha_v, "potential decay");
    app->add_option("--alpha-i", alpha_i, "current decay");
    app->add_option("--beta-softmax", beta_softmax, "latency-loss softmax scale");
    app->add_option("--grad-clip", grad_clip, "gradient clipping threshold");
    app->add_option("--init-bias-center", init_bias_center, "0/1: start biases at theta/2");
    app->add_option("--kappa-exp", kappa_exp, "spike-train loss kernel decay");
    app->add_option("--learning-rate", learning_rate);
    app->add_option("--max-target-spikes", max_target_spikes, "count target of the labelled output");
    app->add_option("--optimizer", optimizer, "sgd or adam");
    app->add_option("--ste-alpha", ste_alpha, "surrogate height");
    app->add_option("--ste-beta", ste_beta, "surrogate width");
    app->add_option("--weight-decay", weight_decay);
    app->add_option("--epoch", epoch);
    app->add_option("--lambda-act", lambda_act, "activation gradient weight");
    app->add_option("--lambda-tim", lambda_tim, "timing gradient weight");
    app->add_option("--seed", seed);
    app->add_option("--method", method, "antlr, activation, timing or bptt");
    app->add_option("--loss", loss, "count, spike_train or latency");
    app->add_option("--decision", decision, "earliest or most");
    app->add_option("--clip-mode", clip_mode, "norm or value");
    app->add_option("--no-spike-penalty", no_spike_penalty);
    app->add_option("--layers", layers, "layer sizes, input first")->delimiter(',');
    app->add_option("--horizon", horizon, "time steps T");
    app->add_option("--input-window", input_window, "latency coding window");
    app->add_option("--batch-size", batch_size);
    app->add_option("--train-samples", train_samples);
    app->add_option("--valid-samples", valid_samples);
    app->add_option("--test-samples", test_samples);
    app->add_option("--trials", trials);
    app->add_option("--iterations", iterations);
    app->add_option("--target-spikes", target_spikes);
    app->add_option("--input-spikes", input_spikes);
    app->add_option("--threads", threads);
    app->add_option("--eval-every", eval_every);
    app->add_option("--data-dir", data_dir);
    app->add_option("--metrics", metrics, "JSON-lines metrics file");
    app->add_option("--params-out", params_out, "write final parameters here");
    app->add_flag("--deterministic", deterministic, "single thread, no wall-clock fields in the log");
    app->add_flag("--single-spike", single_spike, "at most one spike per neuron");
    app->add_flag("--use-reset-paths", reset_paths, "BPTT through the reset terms");
  }

  ExperimentConfig resolve(const std::string& fallback) const {
    ExperimentConfig c = load_config(config.empty() ? fallback : config);
    json j;
    auto put = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    put("method", method);
    put("alpha_v", alpha_v);
    put("alpha_i", alpha_i);
    put("beta_softmax", beta_softmax);
    put("grad_clip", grad_clip);
    put("init_bias_center", init_bias_center);
    put("kappa_exp", kappa_exp);
    put("learning_rate", learning_rate);
    put("max_target_spikes", max_target_spikes);
    put("optimizer", optimizer);
    put("ste_alpha", ste_alpha);
    put("ste_beta", ste_beta);
    put("weight_decay", weight_decay);
    put("epoch", epoch);
    put("lambda_act", lambda_act);
    put("lambda_tim", lambda_tim);
    put("seed", seed);
    put("loss", loss);
    put("decision", decision);
    put("clip_mode", clip_mode);
    put("no_spike_penalty", no_spike_penalty);
    put("horizon", horizon);
    put("input_window", input_window);
    put("batch_size", batch_size);
    put("train_samples", train_samples);
    put("valid_samples", valid_samples);
    put("test_samples", test_samples);
    put("trials", trials);
    put("iterations", iterations);
    put("target_spikes", target_spikes);
    put("input_spikes", input_spikes);
    put("threads", threads);
    put("eval_every", eval_every);
    put("data_dir", data_dir);
    put("metrics_path", metrics);
    put("params_out", params_out);
    if (!layers.empty()) j["layers"] = layers;
    if (deterministic) j["deterministic"] = true;
    if (single_spike) j["single_spike_restriction"] = true;
    if (reset_paths) j["use_reset_paths"] = true;
    if (!j.empty()) c = apply_json(c, j);
    c.validate();
    return c;
  }
};

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

int cmd_train(const Overrides& o) {
  const ExperimentConfig cfg = o.resolve("mnist_antlr");
  if (cfg.task == Task::matching) throw ConfigError("use the matching subcommand for the matching task");
  MetricsLog log(cfg.metrics_path, cfg.deterministic);
  log.emit({{"kind", "config"}, {"config", to_json(cfg)}});
  const Datasets data = load_datasets(cfg);
  std::cerr << "train " << data.train.size() << ", valid " << data.valid.size() << ", test " << data.test.size()
            << " samples; kernels " << simd::isa_name(simd::active_kernels().isa) << "\n";
  const TrainResult r = train_classifier(cfg, data, log);
  json summary{{"kind", "summary"}, {"updates", r.updates}};
  summary.update(r.valid.to_json("valid"));
  if (r.test) summary.update(r.test->to_json("test"));
  log.emit(summary);
  print(summary);
  return kOk;
}

int cmd_eval(const Overrides& o, const std::string& params_path, const std::string& split) {
  const ExperimentConfig cfg = o.resolve("mnist_antlr");
  const Parameters params = load_params(params_path);
  params.validate(cfg.shape());
  const Datasets data = load_datasets(cfg);
  const auto& set = split == "valid" ? data.valid : split == "train" ? data.train : data.test;
  const EvalResult r = evaluate(params, set, cfg);
  json out{{"kind", "eval"}, {"split", split}, {"decision", decision_name(cfg.decision)}};
  out.update(r.to_json(split));
  print(out);
  return kOk;
}

int cmd_matching(const Overrides& o) {
  const ExperimentConfig cfg = o.resolve("matching_antlr");
  if (cfg.task != Task::matching) throw ConfigError("the matching subcommand needs task = matching");
  MetricsLog log(cfg.metrics_path, cfg.deterministic);
  log.emit({{"kind", "config"}, {"config", to_json(cfg)}});
  const MatchingResult r = run_matching(cfg, log);
  print(log.records().back());
  (void)r;
  return kOk;
}

int cmd_landscape(const Overrides& o, const std::string& out_dir, std::size_t resolution, double extent,
                  double zero_tol) {
  const ExperimentConfig cfg = o.resolve("landscape");
  const LandscapeRun run = train_for_landscape(cfg);
  std::cerr << "trained for " << run.grad_history.size() << " updates, final loss " << run.loss_curve.back()
            << (run.reached_zero ? " (zero)" : "") << "\n";
  const PcaDirections dims = pca_directions(run.grad_history);
  const LandscapeGrid grid = landscape_scan(run.optimum, run.problem, dims, run.rms_grad_norm, resolution, extent,
                                            default_landscape_methods(cfg.method), cfg.worker_count());
  if (!out_dir.empty()) write_landscape(out_dir, grid);
  const LandscapeStats s = landscape_stats(grid, zero_tol);
  const std::size_t c = resolution / 2;
  print({{"kind", "landscape"},
         {"updates", run.grad_history.size()},
         {"reached_zero", run.reached_zero},
         {"center_loss", grid.true_loss(c, c)},
         {"scale", grid.scale},
         {"unchanged_points", s.unchanged_points},
         {"timing_nonzero_fraction", s.timing_nonzero_fraction},
         {"activation_zero_fraction", s.activation_zero_fraction}});
  return kOk;
}

int cmd_gradcheck(std::size_t trials, std::uint64_t seed) {
  bool ok = true;
  const ForwardReport f = check_forward_equivalence(trials, seed);
  const bool f_ok = f.spike_mismatches == 0 && f.max_potential_deviation < 1e-9;
  ok &= f_ok;
  print({{"check", "forward"},
         {"ok", f_ok},
         {"spike_mismatches", f.spike_mismatches},
         {"max_potential_deviation", f.max_potential_deviation},
         {"worst_seed", f.worst_seed}});

  const MethodReport m = check_method_equivalence(trials, seed);
  const bool m_ok = m.bptt_deviation < 1e-9 && m.linearity_deviation < 1e-9 && m.output_linearity_deviation < 1e-9 &&
                    m.timing_support_violations == 0 && m.zero_spike_violations == 0;
  ok &= m_ok;
  print({{"check", "methods"},
         {"ok", m_ok},
         {"bptt_deviation", m.bptt_deviation},
         {"linearity_deviation", m.linearity_deviation},
         {"output_linearity_deviation", m.output_linearity_deviation},
         {"timing_support_violations", m.timing_support_violations},
         {"zero_spike_violations", m.zero_spike_violations},
         {"worst_seed", m.worst_seed}});

  for (LossKind k : {LossKind::count, LossKind::spike_train, LossKind::latency}) {
    const FiniteDiffReport r = finite_diff_suite(k, 50, seed, 1e-4);
    const bool r_ok = r.max_deviation < 1e-6;
    ok &= r_ok;
    print({{"check", "finite_difference"},
           {"loss", loss_kind_name(k)},
           {"ok", r_ok},
           {"max_deviation", r.max_deviation},
           {"worst_seed", r.worst_seed}});
  }
  return ok ? kOk : kVerify;
}

void write_raster_csv(const fs::path& path, const SpikeMatrix& s) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "t,neuron\n";
  for (std::size_t t = 0; t < s.rows(); ++t) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (s(t, j)) out << t << ',' << j << '\n';
    }
  }
}

int cmd_encode(const std::string& mnist_dir, std::size_t index, std::size_t t_in, std::size_t horizon,
               const std::string& aer, const std::string& out, const std::string& synth_dir, std::size_t synth_count,
               bool synth_test, std::uint64_t seed) {
  if (!synth_dir.empty()) {
    const std::size_t n = synthesize_nmnist_tree(mnist_dir, synth_dir, synth_count, seed, synth_test);
    print({{"kind", "synthesize"}, {"written", n}, {"dir", synth_dir}});
    return kOk;
  }
  SpikeMatrix raster;
  if (!aer.empty()) {
    raster = bin_events(load_nmnist_sample(aer), horizon);
  } else {
    const auto samples = load_mnist_samples(mnist_dir, true, index, 1, t_in, horizon);
    raster = samples.front().input;
  }
  std::size_t spikes = 0;
  for (auto s : raster.flat()) spikes += s;
  if (!out.empty()) write_raster_csv(out, raster);
  print({{"kind", "encode"}, {"steps", raster.rows()}, {"channels", raster.cols()}, {"spikes", spikes}});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"snngrad: spiking network training with activation, timing and combined gradients"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Overrides train_o, eval_o, match_o, land_o;
  auto* train = app.add_subcommand("train", "train a classifier (mnist / nmnist)");
  train_o.attach(train);

  auto* eval = app.add_subcommand("eval", "evaluate saved parameters");
  eval_o.attach(eval);
  std::string params_path, split = "test";
  eval->add_option("--params", params_path, "parameter file from train --params-out")->required();
  eval->add_option("--split", split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));

  auto* matching = app.add_subcommand("matching", "random spike-train matching");
  match_o.attach(matching);

  auto* landscape = app.add_subcommand("landscape", "loss landscape along principal gradient directions");
  land_o.attach(landscape);
  std::string land_out;
  std::size_t resolution = 41;
  double extent = 1.0, zero_tol = 1e-9;
  landscape->add_option("--out", land_out, "directory for the CSV grids");
  landscape->add_option("--resolution", resolution, "grid points per axis (odd)");
  landscape->add_option("--extent", extent, "half-width in units of the RMS gradient norm");
  landscape->add_option("--zero-tol", zero_tol, "projected gradients at or below this count as zero");

  auto* gradcheck = app.add_subcommand("gradcheck", "oracle suites: forward, method and loss-gradient checks");
  std::size_t gc_trials = 100;
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--trials", gc_trials);
  gradcheck->add_option("--seed", gc_seed);

  auto* encode = app.add_subcommand("encode", "spike-encode one input, or synthesize N-MNIST style files");
  std::string enc_mnist = "data/mnist", enc_aer, enc_out, synth_dir;
  std::size_t enc_index = 0, enc_tin = 100, enc_horizon = 100, synth_count = 1000;
  std::uint64_t synth_seed = 0;
  bool synth_test = false;
  encode->add_option("--mnist-dir", enc_mnist);
  encode->add_option("--index", enc_index, "MNIST training image index");
  encode->add_option("--t-in", enc_tin, "latency coding window");
  encode->add_option("--horizon", enc_horizon);
  encode->add_option("--aer", enc_aer, "N-MNIST .bin file to bin instead");
  encode->add_option("--out", enc_out, "CSV of (t, neuron) spikes");
  encode->add_option("--synthesize-nmnist", synth_dir, "write event files for the first --count digits here");
  encode->add_option("--count", synth_count);
  encode->add_option("--seed", synth_seed);
  encode->add_flag("--from-test-set", synth_test, "use the t10k files when synthesizing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(train_o);
    if (*eval) return cmd_eval(eval_o, params_path, split);
    if (*matching) return cmd_matching(match_o);
    if (*landscape) return cmd_landscape(land_o, land_out, resolution, extent, zero_tol);
    if (*gradcheck) return cmd_gradcheck(gc_trials, gc_seed);
    if (*encode) {
      return cmd_encode(enc_mnist, enc_index, enc_tin, enc_horizon, enc_aer, enc_out, synth_dir, synth_count,
                        synth_test, synth_seed);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  }
  return kOk;
}
