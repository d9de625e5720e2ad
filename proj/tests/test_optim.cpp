#include <cmath>

#include "doctest.h"
#include "snngrad/errors.hpp"
#include "snngrad/optim.hpp"
#include "snngrad/random.hpp"

using namespace snn;

namespace {

// One layer of shape 1 -> n holding the given values as weights.
Parameters single_row(std::vector<double> values) {
  Parameters p;
  p.layers.push_back({RealMatrix(1, values.size()), std::vector<double>(values.size(), 0.0)});
  for (std::size_t k = 0; k < values.size(); ++k) p.layers[0].weights(0, k) = values[k];
  return p;
}

ParamGrads as_grads(const Parameters& p) {
  ParamGrads g;
  g.layers = p.layers;
  return g;
}

}  // namespace

TEST_CASE("init_params") {
  const NetworkShape shape{{784, 128, 10}, 100, false};
  const Parameters a = init_params(shape, 3, false);
  CHECK(a == init_params(shape, 3, false));
  CHECK_FALSE(a == init_params(shape, 4, false));
  for (const auto& l : a.layers) {
    for (double b : l.bias) CHECK(b == 0.0);
  }
  const Parameters c = init_params(shape, 3, true, 1.0);
  for (const auto& l : c.layers) {
    for (double b : l.bias) CHECK(b == 0.5);
  }
  CHECK(init_params(shape, 3, true, 2.0).layers[0].bias[0] == 1.0);

  // fan_in 784: 100352 draws, std within 10% of 1/28.
  const auto w = a.layers[0].weights.flat();
  double mean = 0.0, sq = 0.0;
  for (double x : w) mean += x;
  mean /= static_cast<double>(w.size());
  for (double x : w) sq += (x - mean) * (x - mean);
  const double sd = std::sqrt(sq / static_cast<double>(w.size() - 1));
  CHECK(w.size() >= 100000);
  CHECK(std::abs(sd - 1.0 / 28.0) < 0.1 / 28.0);
  CHECK(std::abs(mean) < 0.01 / 28.0 * 10);
}

TEST_CASE("gradient clipping") {
  const ParamGrads g = as_grads(single_row({3.0, 4.0}));
  const ParamGrads c = clip_grads(g, 1.0);
  CHECK(c.layers[0].weights(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(c.layers[0].weights(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(clip_grads(g, 5.0) == g);
  CHECK(clip_grads(g, 1e6) == g);

  const ParamGrads v = clip_grads(g, 3.5, ClipMode::value);
  CHECK(v.layers[0].weights(0, 0) == 3.0);
  CHECK(v.layers[0].weights(0, 1) == 3.5);
  CHECK_THROWS_AS(clip_grads(g, 0.0), ConfigError);

  // Never grows the norm and keeps the direction.
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> vals(1 + rng.below(20));
    for (double& x : vals) x = rng.normal(0.0, 10.0);
    const ParamGrads r = as_grads(single_row(vals));
    const double clip = rng.uniform(0.01, 50.0);
    const ParamGrads out = clip_grads(r, clip);
    const double n0 = std::sqrt(r.squared_norm()), n1 = std::sqrt(out.squared_norm());
    CHECK(n1 <= n0 * (1 + 1e-15));
    CHECK(n1 <= clip * (1 + 1e-12));
    double cosine = 0.0;
    for (std::size_t k = 0; k < vals.size(); ++k) cosine += r.layers[0].weights(0, k) * out.layers[0].weights(0, k);
    CHECK(cosine / (n0 * n1) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sgd step") {
  OptimizerConfig cfg{OptimizerKind::sgd, 1e-3, 0.0, 1e5};
  Parameters p = single_row({1.0});
  sgd_step(p, as_grads(single_row({1.0})), OptimizerState(cfg));
  CHECK(p.layers[0].weights(0, 0) == doctest::Approx(0.999).epsilon(1e-15));

  p = single_row({1.0});
  sgd_step(p, as_grads(single_row({0.0})), OptimizerState(cfg));
  CHECK(p.layers[0].weights(0, 0) == 1.0);

  cfg.learning_rate = 1.0;
  cfg.weight_decay = 0.1;
  p = single_row({1.0});
  sgd_step(p, as_grads(single_row({0.0})), OptimizerState(cfg));
  CHECK(p.layers[0].weights(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("adam step") {
  OptimizerConfig cfg{OptimizerKind::adam, 1e-3, 0.0, 1e5};
  for (double g : {1e-6, -0.3, 5.0, 1e4}) {
    Parameters p = single_row({2.0});
    OptimizerState st(cfg);
    adam_step(p, as_grads(single_row({g})), st);
    CHECK(std::abs(p.layers[0].weights(0, 0) - 2.0) == doctest::Approx(1e-3).epsilon(1e-2));
    CHECK(st.step == 1);
  }

  Parameters still = single_row({2.0, -1.0});
  OptimizerState st(cfg);
  for (int k = 0; k < 10; ++k) adam_step(still, as_grads(single_row({0.0, 0.0})), st);
  CHECK(still == single_row({2.0, -1.0}));

  // f(p) = p^2 from p = 1.
  cfg.learning_rate = 0.1;
  Parameters q = single_row({1.0});
  OptimizerState qs(cfg);
  std::vector<double> path;
  for (int k = 0; k < 100; ++k) {
    const double p = q.layers[0].weights(0, 0);
    adam_step(q, as_grads(single_row({2.0 * p})), qs);
    path.push_back(std::abs(q.layers[0].weights(0, 0)));
  }
  CHECK(path.back() < 0.01);
  for (std::size_t k = 1; k < 10; ++k) CHECK(path[k] < path[k - 1]);

  // Per-coordinate step bound over random gradient sequences.
  Rng rng(17);
  cfg.learning_rate = 1e-2;
  for (int trial = 0; trial < 20; ++trial) {
    Parameters r = single_row({0.0, 0.0, 0.0});
    OptimizerState rs(cfg);
    for (int k = 0; k < 200; ++k) {
      const Parameters before = r;
      adam_step(r, as_grads(single_row({rng.normal(0, 1e3), rng.normal(), rng.normal(0, 1e-5)})), rs);
      for (std::size_t c = 0; c < 3; ++c) {
        const double step = std::abs(r.layers[0].weights(0, c) - before.layers[0].weights(0, c));
        CHECK(step <= cfg.learning_rate / (1.0 - cfg.beta1) * (1.0 + 1e-8));
      }
    }
  }
}

TEST_CASE("optimizer_step clips before the update") {
  OptimizerConfig cfg{OptimizerKind::sgd, 1.0, 0.0, 1.0};
  Parameters p = single_row({0.0, 0.0});
  OptimizerState st(cfg);
  optimizer_step(p, as_grads(single_row({3.0, 4.0})), st);
  CHECK(p.layers[0].weights(0, 0) == doctest::Approx(-0.6));
  CHECK(p.layers[0].weights(0, 1) == doctest::Approx(-0.8));
}

TEST_CASE("optimizer config") {
  CHECK(parse_optimizer("adam") == OptimizerKind::adam);
  CHECK(parse_optimizer("sgd") == OptimizerKind::sgd);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
  OptimizerConfig bad;
  bad.grad_clip = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
