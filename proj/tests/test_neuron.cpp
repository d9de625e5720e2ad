#include <cmath>

#include "doctest.h"
#include "snngrad/analysis.hpp"
#include "snngrad/errors.hpp"
#include "snngrad/neuron.hpp"

using namespace snn;

namespace {

NeuronConfig if_neuron() {
  NeuronConfig cfg;
  cfg.alpha_v = 1.0;
  cfg.alpha_i = 0.0;
  return cfg;
}

struct OneToOne {
  NetworkShape shape{{1, 1}, 10, false};
  Parameters params = zero_parameters(shape);
  SpikeMatrix input{10, 1};
};

}  // namespace

TEST_CASE("kernel_eps values") {
  NeuronConfig cfg;
  CHECK(kernel_eps(0, cfg) == 1.0);
  CHECK(kernel_eps(-3, cfg) == 0.0);
  CHECK(kernel_eps(3, cfg) == doctest::Approx(3.4295).epsilon(1e-12));

  NeuronConfig mixed;
  mixed.alpha_v = 0.9;
  mixed.alpha_i = 0.5;
  mixed.beta_i = 2.0;
  // 2 * (0.9^2 + 0.5 * 0.9 + 0.25)
  CHECK(kernel_eps(2, mixed) == doctest::Approx(2.0 * (0.81 + 0.45 + 0.25)));
}

TEST_CASE("kernel_eps closed form for equal decays") {
  for (double a : {0.0, 0.5, 0.95, 0.99, 1.0}) {
    NeuronConfig cfg;
    cfg.alpha_v = cfg.alpha_i = a;
    cfg.beta_v = 1.3;
    cfg.beta_i = 0.7;
    for (long tau = 0; tau <= 100; ++tau) {
      const double closed = cfg.beta_i * cfg.beta_v * (tau + 1) * std::pow(a, static_cast<double>(tau));
      CHECK(std::abs(kernel_eps(tau, cfg) - closed) < 1e-12 * std::max(1.0, closed));
    }
  }
}

TEST_CASE("kernel_eps_star values") {
  NeuronConfig cfg;
  CHECK(kernel_eps_star(-1, cfg) == 0.5);
  CHECK(kernel_eps_star(-5, cfg) == 0.0);
  CHECK(kernel_eps_star(0, cfg) == doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("input spike with w = theta fires on the same step") {
  OneToOne net;
  net.params.layers[0].weights(0, 0) = 1.0;
  net.input(5, 0) = 1;
  for (auto forward : {forward_rnn, forward_srm}) {
    const ForwardTrace tr = forward(net.params, net.input, net.shape, NeuronConfig{});
    for (std::size_t t = 0; t < 10; ++t) CHECK(tr.spikes[1](t, 0) == (t == 5 ? 1 : 0));
    CHECK(tr.potential[1](5, 0) == 1.0);
  }
}

TEST_CASE("zero parameters give a silent network") {
  NetworkShape shape{{5, 4, 3}, 20, false};
  SpikeMatrix input(20, 5, 1);
  const ForwardTrace tr = forward_rnn(zero_parameters(shape), input, shape, NeuronConfig{});
  CHECK(tr.non_input_spike_count() == 0);
  CHECK(tr.spike_count(0) == 100);
}

TEST_CASE("IF neuron hand simulation") {
  OneToOne net;
  net.params.layers[0].weights(0, 0) = 0.4;
  net.input(0, 0) = net.input(1, 0) = net.input(2, 0) = 1;
  for (auto forward : {forward_rnn, forward_srm}) {
    const ForwardTrace tr = forward(net.params, net.input, net.shape, if_neuron());
    CHECK(tr.potential[1](0, 0) == doctest::Approx(0.4));
    CHECK(tr.potential[1](1, 0) == doctest::Approx(0.8));
    CHECK(tr.potential[1](2, 0) == doctest::Approx(1.2));
    CHECK(tr.spike_count(1) == 1);
    CHECK(tr.spikes[1](2, 0) == 1);
    // reset: nothing carried over after the spike
    CHECK(tr.potential[1](3, 0) == 0.0);
    CHECK(tr.last_spike[1](3, 0) == 2);
    CHECK(tr.last_spike[1](2, 0) == kNoSpike);
  }
}

TEST_CASE("SRM: single presynaptic spike gives w * eps") {
  OneToOne net;
  net.params.layers[0].weights(0, 0) = 0.1;
  net.input(2, 0) = 1;
  NeuronConfig cfg;
  const ForwardTrace tr = forward_srm(net.params, net.input, net.shape, cfg);
  for (std::size_t t = 0; t < 10; ++t) {
    CHECK(tr.potential[1](t, 0) == doctest::Approx(0.1 * kernel_eps(static_cast<long>(t) - 2, cfg)));
  }
}

TEST_CASE("spikes before the last own spike are forgotten") {
  OneToOne net;
  net.params.layers[0].weights(0, 0) = 0.6;
  net.input(0, 0) = net.input(1, 0) = 1;  // fires at t = 1 with alpha = 0.95
  NeuronConfig cfg;
  for (auto forward : {forward_rnn, forward_srm}) {
    const ForwardTrace tr = forward(net.params, net.input, net.shape, cfg);
    REQUIRE(tr.spikes[1](1, 0) == 1);
    for (std::size_t t = 2; t < 10; ++t) CHECK(tr.potential[1](t, 0) == 0.0);
  }
}

TEST_CASE("reset correctness on random instances") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RandomInstance inst = random_instance(seed);
    const ForwardTrace tr = forward_rnn(inst.params, inst.input, inst.shape, inst.cfg);
    for (std::size_t l = 1; l < tr.num_layers(); ++l) {
      const auto& w = inst.params.layers[l - 1];
      for (std::size_t t = 1; t < inst.shape.horizon; ++t) {
        for (std::size_t j = 0; j < tr.spikes[l].cols(); ++j) {
          if (!tr.spikes[l](t - 1, j)) continue;
          double syn = 0.0;
          for (std::size_t i = 0; i < w.weights.rows(); ++i) {
            if (tr.spikes[l - 1](t, i)) syn += w.weights(i, j);
          }
          CHECK(tr.current[l](t, j) == doctest::Approx(inst.cfg.beta_i * syn));
          CHECK(tr.potential[l](t, j) ==
                doctest::Approx(inst.cfg.beta_v * tr.current[l](t, j) + inst.cfg.beta_bias * w.bias[j]));
        }
      }
    }
  }
}

TEST_CASE("threshold law and single-spike restriction") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomInstance inst = random_instance(seed);
    for (bool single : {false, true}) {
      inst.shape.single_spike = single;
      const ForwardTrace tr = forward_rnn(inst.params, inst.input, inst.shape, inst.cfg);
      for (std::size_t l = 1; l < tr.num_layers(); ++l) {
        const auto& S = tr.spikes[l];
        const auto& V = tr.potential[l];
        for (std::size_t j = 0; j < S.cols(); ++j) {
          std::size_t count = 0;
          for (std::size_t t = 0; t < S.rows(); ++t) {
            CHECK(S(t, j) <= 1);
            count += S(t, j);
            if (!single) CHECK((S(t, j) == 1) == (V(t, j) >= inst.cfg.theta));
          }
          if (single) CHECK(count <= 1);
        }
      }
    }
  }
}

TEST_CASE("RNN and SRM forward passes agree") {
  const ForwardReport report = check_forward_equivalence(100, 7);
  CHECK(report.trials == 100);
  CHECK(report.spike_mismatches == 0);
  CHECK(report.max_potential_deviation < 1e-9);
}

TEST_CASE("shape and config errors") {
  NetworkShape shape{{3, 2}, 10, false};
  const Parameters params = zero_parameters(shape);
  CHECK_THROWS_AS(forward_rnn(params, SpikeMatrix(9, 3), shape, NeuronConfig{}), ConfigError);
  CHECK_THROWS_AS(forward_rnn(params, SpikeMatrix(10, 4), shape, NeuronConfig{}), ConfigError);
  NeuronConfig bad;
  bad.alpha_v = 1.5;
  CHECK_THROWS_AS(forward_rnn(params, SpikeMatrix(10, 3), shape, bad), ConfigError);
  bad = NeuronConfig{};
  bad.theta = 0.0;
  CHECK_THROWS_AS(forward_srm(params, SpikeMatrix(10, 3), shape, bad), ConfigError);
  NetworkShape one{{3}, 10, false};
  CHECK_THROWS_AS(one.validate(), ConfigError);
  Parameters wrong = params;
  wrong.layers[0].bias.push_back(0.0);
  CHECK_THROWS_AS(forward_rnn(wrong, SpikeMatrix(10, 3), shape, NeuronConfig{}), ConfigError);
  wrong = params;
  wrong.layers[0].weights(0, 0) = NAN;
  CHECK_THROWS_AS(forward_rnn(wrong, SpikeMatrix(10, 3), shape, NeuronConfig{}), ConfigError);
}
