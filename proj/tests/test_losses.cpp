#include <cmath>

#include "doctest.h"
#include "snngrad/analysis.hpp"
#include "snngrad/errors.hpp"
#include "snngrad/losses.hpp"

using namespace snn;

TEST_CASE("count loss") {
  SpikeMatrix out(100, 1);
  out(3, 0) = out(40, 0) = out(77, 0) = 1;
  const LossGrads g = count_loss(out, CountLoss{{1.0}});
  CHECK(g.value == doctest::Approx(0.04));
  for (std::size_t t = 0; t < 100; ++t) CHECK(g.d_spikes(t, 0) == doctest::Approx(0.04));
  for (double d : g.d_times.flat()) CHECK(d == 0.0);

  const LossGrads exact = count_loss(out, CountLoss{{3.0}});
  CHECK(exact.value == 0.0);
  for (double d : exact.d_spikes.flat()) CHECK(d == 0.0);

  CHECK(count_loss(SpikeMatrix(10, 2), CountLoss{{0.0, 0.0}}).value == 0.0);
  CHECK_THROWS_AS(count_loss(out, CountLoss{{1.0, 2.0}}), ConfigError);
  CHECK_THROWS_AS(count_loss(out, CountLoss{{-1.0}}), ConfigError);
}

TEST_CASE("spike-train loss") {
  const std::size_t T = 60;
  SpikeTrainLoss spec{SpikeMatrix(T, 1), 0.95};
  spec.targets(12, 0) = 1;

  SUBCASE("identical trains") {
    const LossGrads g = spike_train_loss(spec.targets, spec);
    CHECK(g.value == 0.0);
    for (double d : g.d_spikes.flat()) CHECK(d == 0.0);
    CHECK(g.d_times(12, 0) == 0.0);
  }
  SUBCASE("empty output against one target spike") {
    const LossGrads g = spike_train_loss(SpikeMatrix(T, 1), spec);
    double series = 0.0;
    for (std::size_t tau = 12; tau < T; ++tau) series += std::pow(0.95, 2.0 * static_cast<double>(tau - 12));
    CHECK(g.value == doctest::Approx(series).epsilon(1e-12));
    RealMatrix relaxed(T, 1);
    CHECK(spike_train_loss_relaxed(relaxed, spec.targets, 0.95) == doctest::Approx(series).epsilon(1e-12));
  }
  SUBCASE("late spike is pulled earlier") {
    SpikeMatrix out(T, 1);
    out(15, 0) = 1;
    const LossGrads g = spike_train_loss(out, spec);
    CHECK(g.value > 0.0);
    CHECK(g.d_times(15, 0) > 0.0);  // dL/dt > 0: moving earlier lowers the loss
    for (std::size_t t = 0; t < T; ++t) {
      if (t != 15) CHECK(g.d_times(t, 0) == 0.0);
    }
  }
  SUBCASE("kappa range") {
    spec.kappa = 1.0;
    CHECK_THROWS_AS(spike_train_loss(SpikeMatrix(T, 1), spec), ConfigError);
  }
}

TEST_CASE("spike-train timing seed matches a brute-force kernel sum") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 5 + rng.below(40);
    const double kappa = rng.uniform(0.5, 0.99);
    SpikeMatrix out(T, 2);
    SpikeTrainLoss spec{SpikeMatrix(T, 2), kappa};
    for (auto& s : out.flat()) s = rng.below(5) == 0;
    for (auto& s : spec.targets.flat()) s = rng.below(5) == 0;
    const LossGrads g = spike_train_loss(out, spec);
    for (std::size_t o = 0; o < 2; ++o) {
      std::vector<double> d(T, 0.0);
      for (std::size_t tau = 0; tau < T; ++tau) {
        for (std::size_t s = 0; s < T; ++s) {
          const long lag = static_cast<long>(tau) - static_cast<long>(s);
          d[tau] += exp_kernel(lag, kappa) * (out(s, o) - spec.targets(s, o));
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        double ds = 0.0;
        double dt = 0.0;
        for (std::size_t tau = 0; tau < T; ++tau) {
          const long lag = static_cast<long>(tau) - static_cast<long>(t);
          ds += 2.0 * exp_kernel(lag, kappa) * d[tau];
          dt += -2.0 * exp_kernel_star(lag, kappa) * d[tau];
        }
        CHECK(g.d_spikes(t, o) == doctest::Approx(ds).epsilon(1e-10));
        CHECK(g.d_times(t, o) == doctest::Approx(out(t, o) ? dt : 0.0).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("latency loss") {
  SUBCASE("symmetric pair") {
    SpikeMatrix out(20, 2);
    out(5, 0) = out(5, 1) = 1;
    const LossGrads g = latency_loss(out, LatencyLoss{0, 1.0});
    CHECK(g.value == doctest::Approx(std::log(2.0)));
    CHECK(g.d_times(5, 0) == doctest::Approx(0.5));
    CHECK(g.d_times(5, 1) == doctest::Approx(-0.5));
    for (double d : g.d_spikes.flat()) CHECK(d == 0.0);
  }
  SUBCASE("three outputs") {
    SpikeMatrix out(30, 3);
    out(10, 0) = out(20, 1) = out(20, 2) = 1;
    out(25, 0) = 1;  // later spikes carry no seed
    const LossGrads g = latency_loss(out, LatencyLoss{0, 0.1});
    const double z = std::exp(-1.0) + 2.0 * std::exp(-2.0);
    const double p0 = std::exp(-1.0) / z;
    const double p1 = std::exp(-2.0) / z;
    CHECK(p0 == doctest::Approx(0.57612).epsilon(1e-5));
    CHECK(p1 == doctest::Approx(0.21194).epsilon(1e-4));
    CHECK(g.value == doctest::Approx(0.55144).epsilon(1e-5));
    CHECK(g.d_times(10, 0) == doctest::Approx(-0.1 * (p0 - 1.0)));
    CHECK(g.d_times(20, 1) == doctest::Approx(-0.1 * p1));
    CHECK(g.d_times(25, 0) == 0.0);
  }
  SUBCASE("far earlier correct neuron") {
    SpikeMatrix out(1000, 2);
    out(0, 1) = out(999, 0) = 1;
    CHECK(latency_loss(out, LatencyLoss{1, 1.0}).value < 1e-300);
  }
  SUBCASE("silent outputs use t = T and get no seed") {
    SpikeMatrix out(10, 2);
    out(4, 0) = 1;
    const LossGrads g = latency_loss(out, LatencyLoss{1, 1.0});
    CHECK(g.silent_outputs == 1);
    CHECK(g.value == doctest::Approx(latency_loss_relaxed({4.0, 10.0}, 1, 1.0)));
    for (std::size_t t = 0; t < 10; ++t) CHECK(g.d_times(t, 1) == 0.0);
  }
  CHECK_THROWS_AS(latency_loss(SpikeMatrix(5, 2), LatencyLoss{2, 1.0}), ConfigError);
  CHECK_THROWS_AS(latency_loss(SpikeMatrix(5, 2), LatencyLoss{0, 0.0}), ConfigError);
}

TEST_CASE("min-count variant") {
  SpikeMatrix out(50, 3);
  const LossGrads silent = min_count_variant(out, MinCountLoss{1});
  CHECK(silent.value == 1.0);
  for (std::size_t t = 0; t < 50; ++t) {
    CHECK(silent.d_spikes(t, 1) == doctest::Approx(-2.0 / 50.0));
    CHECK(silent.d_spikes(t, 0) == 0.0);
  }
  out(7, 1) = out(8, 1) = 1;
  const LossGrads fired = min_count_variant(out, MinCountLoss{1});
  CHECK(fired.value == 0.0);
  for (double d : fired.d_spikes.flat()) CHECK(d == 0.0);
}

TEST_CASE("summed loss terms") {
  SpikeMatrix out(20, 2);
  out(3, 0) = 1;
  const std::vector<LossSpec> terms{LatencyLoss{1, 1.0}, MinCountLoss{1}};
  const LossGrads g = compute_loss(out, terms);
  CHECK(g.value == doctest::Approx(latency_loss(out, LatencyLoss{1, 1.0}).value + 1.0));
  CHECK(g.d_spikes(0, 1) < 0.0);
  CHECK(g.d_times(3, 0) < 0.0);  // wrong neuron is pushed later
}

TEST_CASE("no-spike penalty") {
  ForwardTrace trace;
  trace.spikes = {SpikeMatrix(4, 2), SpikeMatrix(4, 3), SpikeMatrix(4, 2)};
  trace.spikes[1](0, 0) = trace.spikes[1](2, 2) = 1;  // hidden 1 silent
  trace.spikes[2](1, 0) = 1;                          // output 1 silent
  Parameters shape_params;
  shape_params.layers = {{RealMatrix(2, 3), std::vector<double>(3)}, {RealMatrix(3, 2), std::vector<double>(2)}};
  ParamGrads g = ParamGrads::zeros_like(shape_params);
  apply_no_spike_penalty(trace, g, 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(g.layers[0].weights(i, 0) == 0.0);
    CHECK(g.layers[0].weights(i, 1) == -1.0);
    CHECK(g.layers[0].weights(i, 2) == 0.0);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g.layers[1].weights(i, 0) == 0.0);
    CHECK(g.layers[1].weights(i, 1) == -1.0);
  }
  for (double b : g.layers[0].bias) CHECK(b == 0.0);

  trace.spikes[1](3, 1) = 1;
  trace.spikes[2](3, 1) = 1;
  ParamGrads none = ParamGrads::zeros_like(shape_params);
  apply_no_spike_penalty(trace, none, 1.0);
  CHECK(none.squared_norm() == 0.0);
}

TEST_CASE("finite-difference checks of the analytic seeds") {
  for (LossKind kind : {LossKind::count, LossKind::spike_train, LossKind::latency}) {
    CAPTURE(loss_kind_name(kind));
    const FiniteDiffReport r = finite_diff_suite(kind, 50, 11, 1e-4);
    CHECK(r.instances == 50);
    CHECK(r.max_deviation < 1e-6);
  }
}

TEST_CASE("spike-train loss is non-negative and zero only for equal filtered trains") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng.below(30);
    SpikeMatrix out(T, 2);
    SpikeTrainLoss spec{SpikeMatrix(T, 2), rng.uniform(0.1, 0.99)};
    for (auto& s : out.flat()) s = rng.below(4) == 0;
    for (auto& s : spec.targets.flat()) s = rng.below(4) == 0;
    const double loss = spike_train_loss(out, spec).value;
    CHECK(loss >= 0.0);
    CHECK((loss == 0.0) == (out == spec.targets));
  }
}
