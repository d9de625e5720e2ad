// Acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "snngrad/analysis.hpp"
#include "snngrad/config.hpp"
#include "snngrad/data.hpp"
#include "snngrad/errors.hpp"
#include "snngrad/landscape.hpp"
#include "snngrad/optim.hpp"
#include "snngrad/random.hpp"
#include "snngrad/trainer.hpp"

using namespace snn;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path mnist_dir;
  fs::path out_dir;
  std::size_t threads = 0;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1
Verdict forward_equivalence(const Context&) {
  const ForwardReport r = check_forward_equivalence(100, 1);
  return {r.trials == 100 && r.spike_mismatches == 0 && r.max_potential_deviation < 1e-9,
          fmt("%zu instances, %zu spike mismatches, max potential deviation %.3g", r.trials, r.spike_mismatches,
              r.max_potential_deviation)};
}

// 2
Verdict method_equivalence(const Context&) {
  const MethodReport r = check_method_equivalence(100, 1);
  return {r.trials == 100 && r.bptt_deviation < 1e-9 && r.linearity_deviation < 1e-9,
          fmt("BPTT(no reset) vs ANTLR(1,0) %.3g, lambda-linearity %.3g", r.bptt_deviation,
              r.linearity_deviation)};
}

// 3
Verdict loss_gradients(const Context&) {
  bool ok = true;
  std::string detail;
  for (LossKind k : {LossKind::count, LossKind::spike_train, LossKind::latency}) {
    const FiniteDiffReport r = finite_diff_suite(k, 50, 1, 1e-4);
    ok &= r.instances == 50 && r.max_deviation < 1e-6;
    detail += fmt("%s%s %.3g", detail.empty() ? "" : "; ", loss_kind_name(k).c_str(), r.max_deviation);
  }
  return {ok, detail};
}

// 4: against direct summation, not the library's own closed form.
double eps_direct(long tau, const NeuronConfig& c) {
  if (tau < 0) return 0.0;
  double s = 0.0;
  for (long k = 0; k <= tau; ++k) s += std::pow(c.alpha_i, k) * std::pow(c.alpha_v, tau - k);
  return c.beta_i * c.beta_v * s;
}

Verdict kernel_identities(const Context&) {
  double closed = 0.0, star = 0.0;
  Rng rng(4);
  std::vector<NeuronConfig> cfgs;
  for (double a : {0.0, 0.5, 0.9, 0.95, 0.99, 1.0}) {
    NeuronConfig c;
    c.alpha_v = c.alpha_i = a;
    cfgs.push_back(c);
  }
  for (int k = 0; k < 20; ++k) {
    NeuronConfig c;
    c.alpha_v = c.alpha_i = rng.uniform();
    c.beta_v = 0.1 + rng.uniform();
    c.beta_i = 0.1 + rng.uniform();
    cfgs.push_back(c);
  }
  for (const auto& c : cfgs) {
    for (long tau = 0; tau <= 100; ++tau) {
      const double want = c.beta_i * c.beta_v * static_cast<double>(tau + 1) * std::pow(c.alpha_v, tau);
      closed = std::max(closed, std::abs(kernel_eps(tau, c) - want));
    }
  }
  for (auto c : cfgs) {
    c.alpha_i = 0.5 * c.alpha_i + 0.25;  // unequal decays too
    for (long tau = -2; tau <= 100; ++tau) {
      const double want = 0.5 * (eps_direct(tau + 1, c) - eps_direct(tau - 1, c));
      star = std::max(star, std::abs(kernel_eps_star(tau, c) - want));
    }
  }
  return {closed < 1e-12 && star < 1e-12,
          fmt("closed form %.3g, eps* central difference %.3g", closed, star)};
}

MatchingResult matching(const Context& ctx, const std::string& preset_name, const std::string& log_name,
                        bool reset_paths = false) {
  ExperimentConfig cfg = preset(preset_name);
  cfg.method.use_reset_paths = reset_paths || cfg.method.use_reset_paths;
  cfg.deterministic = true;
  cfg.threads = ctx.threads;
  MetricsLog log((ctx.out_dir / log_name).string(), true);
  return run_matching(cfg, log);
}

// 5 and 7 share the runs.
struct MatchingRuns {
  double antlr_initial = 0, antlr = 0, activation = 0, timing = 0, bptt_reset = 0;
  bool done = false;
};

MatchingRuns& matching_runs(const Context& ctx) {
  static MatchingRuns m;
  if (m.done) return m;
  const MatchingResult a = matching(ctx, "matching_antlr", "c5_antlr.jsonl");
  m.antlr_initial = a.mean_initial_loss();
  m.antlr = a.mean_final_loss();
  m.activation = matching(ctx, "matching_activation", "c5_activation.jsonl").mean_final_loss();
  m.timing = matching(ctx, "matching_timing", "c5_timing.jsonl").mean_final_loss();
  m.bptt_reset = matching(ctx, "matching_bptt", "c7_bptt_reset.jsonl").mean_final_loss();
  m.done = true;
  return m;
}

Verdict spike_train_matching(const Context& ctx) {
  const MatchingRuns& m = matching_runs(ctx);
  const bool ok = m.antlr < m.activation && m.activation < m.timing && m.antlr <= 0.1 * m.antlr_initial;
  return {ok, fmt("final mean loss antlr %.4g < activation %.4g < timing %.4g; antlr initial %.4g (ratio %.3f)",
                  m.antlr, m.activation, m.timing, m.antlr_initial, m.antlr / m.antlr_initial)};
}

ExperimentConfig mnist_config(const Context& ctx) {
  ExperimentConfig cfg = preset("mnist_antlr");
  cfg.layers = {784, 100, 10};
  cfg.train_samples = 5000;
  cfg.valid_samples = 1000;
  cfg.test_samples = 1000;
  cfg.epoch = 2;
  cfg.data_dir = ctx.mnist_dir.string();
  cfg.deterministic = true;
  cfg.threads = ctx.threads;
  return cfg;
}

// 6
Verdict latency_mnist(const Context& ctx) {
  if (!fs::exists(ctx.mnist_dir / "train-images-idx3-ubyte")) {
    return {false, "MNIST files not found in " + ctx.mnist_dir.string()};
  }
  const ExperimentConfig cfg = mnist_config(ctx);
  MetricsLog log((ctx.out_dir / "c6_mnist.jsonl").string(), true);
  const TrainResult r = train_classifier(cfg, load_datasets(cfg), log);
  const EvalResult& t = *r.test;
  return {t.accuracy >= 0.85 && t.spikes_per_sample <= 150.0,
          fmt("test accuracy %.4f (>= 0.85), spikes/sample %.1f (<= 150), ties %zu, silent %zu", t.accuracy,
              t.spikes_per_sample, t.ties, t.silent)};
}

// 7
Verdict reset_ablation(const Context& ctx) {
  const MatchingRuns& m = matching_runs(ctx);
  return {m.bptt_reset >= 2.0 * m.activation,
          fmt("with reset paths %.4g vs without %.4g (ratio %.2f, need >= 2)", m.bptt_reset, m.activation,
              m.bptt_reset / m.activation)};
}

// 8
Verdict landscape(const Context& ctx) {
  RealMatrix gx(41, 41), gy(41, 41), truth(41, 41);
  const double h = 2.0 / 40.0;
  for (std::size_t i = 0; i < 41; ++i) {
    for (std::size_t j = 0; j < 41; ++j) {
      const double x = -1.0 + h * static_cast<double>(i), y = -1.0 + h * static_cast<double>(j);
      gx(i, j) = 2 * x;
      gy(i, j) = 2 * y;
      truth(i, j) = x * x + y * y;
    }
  }
  const RealMatrix z = reconstruct_surface(gx, gy, h, h);
  double bowl = 0.0;
  for (std::size_t i = 0; i < 41; ++i) {
    for (std::size_t j = 0; j < 41; ++j) bowl = std::max(bowl, std::abs(z(i, j) - truth(i, j)));
  }

  ExperimentConfig cfg = preset("landscape");
  cfg.threads = ctx.threads;
  const LandscapeRun run = train_for_landscape(cfg);
  const PcaDirections dims = pca_directions(run.grad_history);
  // At extent 1 every off-centre point changes some neuron's spike count.
  const LandscapeGrid g = landscape_scan(run.optimum, run.problem, dims, run.rms_grad_norm, 41, 1e-4,
                                         default_landscape_methods(cfg.method), cfg.worker_count());
  write_landscape(ctx.out_dir / "c8_landscape", g);
  const LandscapeStats s = landscape_stats(g, 0.0);
  const double center = g.true_loss(20, 20);
  const bool ok = bowl < 1e-6 && run.reached_zero && center == 0.0 && s.timing_nonzero_fraction >= 0.10 &&
                  s.activation_zero_fraction >= 0.90;
  return {ok, fmt("bowl error %.3g; trained %zu updates, centre loss %g; %zu unchanged points: timing nonzero "
                  "%.3f (>= 0.10), activation zero %.3f (>= 0.90)",
                  bowl, run.grad_history.size(), center, s.unchanged_points, s.timing_nonzero_fraction,
                  s.activation_zero_fraction)};
}

// 9
ExperimentConfig nmnist_smoke_config(const Context& ctx, const fs::path& dir) {
  ExperimentConfig cfg = preset("nmnist_antlr");
  cfg.layers = {kNmnistInputs, 100, 10};
  cfg.train_samples = 500;
  cfg.valid_samples = 100;
  cfg.test_samples = 100;
  cfg.epoch = 1;
  cfg.data_dir = dir.string();
  cfg.deterministic = true;
  cfg.threads = ctx.threads;
  return cfg;
}

Verdict nmnist_ingestion(const Context& ctx) {
  // x=5 y=10 ON t=100; x=33 y=0 OFF t=0x7fffff; x=0 y=33 ON t=0x12345
  const std::vector<std::uint8_t> golden{0x05, 0x0A, 0x80, 0x00, 0x64, 0x21, 0x00, 0x7F, 0xFF,
                                         0xFF, 0x00, 0x21, 0x81, 0x23, 0x45};
  const EventStream ev = decode_aer(golden);
  const EventStream want{{5, 10, 1, 100}, {0, 33, 1, 0x12345}, {33, 0, 0, 0x7fffff}};
  bool golden_ok = ev == want;
  try {
    decode_aer(std::vector<std::uint8_t>(golden.begin(), golden.begin() + 7));
    golden_ok = false;
  } catch (const ParseError&) {
  }

  Rng rng(9);
  std::size_t round_trip_failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng.below(300);
    const double rate = rng.uniform() * 0.01;
    SpikeMatrix raster(T, kNmnistInputs);
    for (auto& s : raster.flat()) s = rng.uniform() < rate ? 1 : 0;
    const EventStream events = synthesize_events(raster);
    if (!(bin_events(events, T) == raster) || !(decode_aer(encode_aer(events)) == events)) ++round_trip_failures;
  }

  if (!fs::exists(ctx.mnist_dir / "train-images-idx3-ubyte")) {
    return {false, "MNIST files (source of the synthetic recordings) not found"};
  }
  const fs::path dir = ctx.out_dir / "c9_nmnist";
  if (!fs::exists(dir / "Train")) {
    synthesize_nmnist_tree(ctx.mnist_dir, dir / "Train", 600, 7, false);
    synthesize_nmnist_tree(ctx.mnist_dir, dir / "Test", 100, 8, true);
  }
  const ExperimentConfig cfg = nmnist_smoke_config(ctx, dir);
  const Datasets data = load_datasets(cfg);
  const Parameters init = init_params(cfg.shape(), cfg.seed, cfg.init_bias_center, cfg.neuron.theta,
                                      cfg.init_weight_scale, cfg.init_bias_value);
  const double before = evaluate(init, data.train, cfg).mean_loss;
  MetricsLog log((ctx.out_dir / "c9_nmnist.jsonl").string(), true);
  bool finite = true;
  double after = NAN;
  try {
    const TrainResult r = train_classifier(cfg, data, log);
    after = evaluate(r.params, data.train, cfg).mean_loss;
    for (std::size_t i = 0; i < 20; ++i) {
      const auto terms = classification_terms(cfg, data.train[i].label);
      finite &= sample_gradient(r.params, data.train[i].input, terms, cfg).grads.all_finite();
    }
  } catch (const DivergenceError& e) {
    finite = false;
  }
  const bool ok = golden_ok && round_trip_failures == 0 && finite && after < before;
  return {ok, fmt("golden bytes %s, round-trip failures %zu/1000, smoke train loss %.4g -> %.4g, gradients %s",
                  golden_ok ? "ok" : "MISMATCH", round_trip_failures, before, after, finite ? "finite" : "NON-FINITE")};
}

// 10: rerun the logged runs and compare bytes.
Verdict determinism(const Context& ctx) {
  std::string detail;
  bool ok = true;
  auto compare = [&](const std::string& name, const std::function<void(const fs::path&)>& rerun) {
    const fs::path first = ctx.out_dir / name;
    if (!fs::exists(first)) return;
    const fs::path second = ctx.out_dir / ("rerun_" + name);
    rerun(second);
    const bool same = read_file(first) == read_file(second) && !read_file(first).empty();
    ok &= same;
    detail += (detail.empty() ? "" : "; ") + name + (same ? " identical" : " DIFFERS");
  };
  compare("c5_antlr.jsonl", [&](const fs::path& p) {
    ExperimentConfig cfg = preset("matching_antlr");
    cfg.deterministic = true;
    cfg.threads = ctx.threads == 1 ? 2 : 1;  // a different worker count on purpose
    MetricsLog log(p.string(), true);
    run_matching(cfg, log);
  });
  compare("c6_mnist.jsonl", [&](const fs::path& p) {
    ExperimentConfig cfg = mnist_config(ctx);
    cfg.threads = ctx.threads == 1 ? 2 : 1;
    MetricsLog log(p.string(), true);
    train_classifier(cfg, load_datasets(cfg), log);
  });
  compare("c9_nmnist.jsonl", [&](const fs::path& p) {
    ExperimentConfig cfg = nmnist_smoke_config(ctx, ctx.out_dir / "c9_nmnist");
    MetricsLog log(p.string(), true);
    train_classifier(cfg, load_datasets(cfg), log);
  });
  if (detail.empty()) return {false, "no logs from earlier criteria to rerun"};
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  Context ctx;
  const char* env = std::getenv("SNNGRAD_MNIST_DIR");
  std::string mnist = env ? env : "/root/data/mnist";
  std::string out = (fs::temp_directory_path() / "snngrad_acceptance").string();
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  app.add_option("--mnist-dir", mnist);
  app.add_option("--out", out, "directory for logs and landscape grids");
  app.add_option("--threads", ctx.threads, "0 = hardware concurrency");
  CLI11_PARSE(app, argc, argv);
  ctx.mnist_dir = mnist;
  ctx.out_dir = out;
  fs::create_directories(ctx.out_dir);

  const std::vector<std::pair<std::string, std::function<Verdict(const Context&)>>> criteria{
      {"forward equivalence", forward_equivalence},
      {"method equivalence", method_equivalence},
      {"loss gradient oracles", loss_gradients},
      {"kernel identities", kernel_identities},
      {"spike-train matching", spike_train_matching},
      {"latency-coded MNIST", latency_mnist},
      {"reset-path ablation", reset_ablation},
      {"landscape pipeline", landscape},
      {"N-MNIST ingestion", nmnist_ingestion},
      {"determinism", determinism},
  };
  // Runtime limits in seconds; 0 = none stated.
  const double limits[] = {30, 60, 30, 0, 600, 1800, 0, 600, 0, 0};
  const std::set<int> selected(only.begin(), only.end());

  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k].second(ctx);
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limits[k] > 0 && secs > limits[k]) {
      v.pass = false;
      v.detail += fmt(" [runtime %.0f s over the %.0f s limit]", secs, limits[k]);
    }
    all &= v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[k].first << ": " << v.detail
              << fmt(" (%.1f s)", secs) << std::endl;
  }
  return all ? 0 : 1;
}
