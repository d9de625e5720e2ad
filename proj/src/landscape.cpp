#include "snngrad/landscape.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "snngrad/errors.hpp"
#include "snngrad/losses.hpp"
#include "snngrad/trainer.hpp"

namespace snn {

std::vector<double> flatten(const ParamGrads& g) {
  std::vector<double> out;
  for (const auto& l : g.layers) {
    out.insert(out.end(), l.weights.flat().begin(), l.weights.flat().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

std::vector<double> flatten(const Parameters& p) {
  ParamGrads g;
  g.layers = p.layers;
  return flatten(g);
}

Parameters offset_params(const Parameters& base, const std::vector<double>& delta) {
  Parameters p = base;
  std::size_t k = 0;
  for (auto& l : p.layers) {
    for (double& w : l.weights.flat()) {
      if (k >= delta.size()) throw ConfigError("offset vector shorter than the parameter vector");
      w += delta[k++];
    }
    for (double& b : l.bias) {
      if (k >= delta.size()) throw ConfigError("offset vector shorter than the parameter vector");
      b += delta[k++];
    }
  }
  if (k != delta.size()) throw ConfigError("offset vector longer than the parameter vector");
  return p;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  for (double& x : v) x /= n;
}

// Sign fixed so that the largest-magnitude entry is positive.
void fix_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (!v.empty() && v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

PcaDirections pca_directions(const std::vector<std::vector<double>>& history) {
  if (history.size() < 3) throw ConfigError("PCA needs at least 3 gradient vectors");
  const std::size_t n = history.size();
  const std::size_t p = history.front().size();
  Eigen::MatrixXd x(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    if (history[r].size() != p) throw ConfigError("gradient history vectors differ in length");
    for (std::size_t c = 0; c < p; ++c) x(r, c) = history[r][c];
  }
  x.rowwise() -= x.colwise().mean();

  Eigen::MatrixXd top(p, 2);
  Eigen::Vector2d eig;
  // Work in whichever of the Gram and covariance matrices is smaller.
  if (n <= p) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x * x.transpose());
    const auto& vals = es.eigenvalues();  // ascending
    eig << vals(n - 1), vals(n - 2);
    top.col(0) = x.transpose() * es.eigenvectors().col(n - 1);
    top.col(1) = x.transpose() * es.eigenvectors().col(n - 2);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x);
    const auto& vals = es.eigenvalues();
    eig << vals(p - 1), vals(p - 2);
    top.col(0) = es.eigenvectors().col(p - 1);
    top.col(1) = es.eigenvectors().col(p - 2);
  }
  if (!(eig(0) > 0.0) || !(eig(1) > 1e-12 * eig(0))) {
    throw ConfigError("gradient history has rank < 2 after centring");
  }

  PcaDirections d;
  d.dim0.assign(top.col(0).data(), top.col(0).data() + p);
  d.dim1.assign(top.col(1).data(), top.col(1).data() + p);
  normalize(d.dim0);
  for (int pass = 0; pass < 2; ++pass) {
    const double c = dot(d.dim1, d.dim0);
    for (std::size_t i = 0; i < p; ++i) d.dim1[i] -= c * d.dim0[i];
    normalize(d.dim1);
  }
  fix_sign(d.dim0);
  fix_sign(d.dim1);
  d.variance0 = eig(0) / static_cast<double>(n - 1);
  d.variance1 = eig(1) / static_cast<double>(n - 1);
  return d;
}

RealMatrix reconstruct_from_differences(const RealMatrix& dx, const RealMatrix& dy) {
  const std::size_t n = dy.rows();
  const std::size_t m = dx.cols();
  if (n == 0 || m == 0) throw ConfigError("empty gradient field");
  if (dx.rows() + 1 != n || dy.cols() + 1 != m) throw ConfigError("difference fields do not describe one grid");

  // Unknowns are all nodes except the centre, which is pinned to 0.
  const std::size_t anchor = (n / 2) * m + m / 2;
  auto unknown = [&](std::size_t node) -> long {
    if (node == anchor) return -1;
    return static_cast<long>(node < anchor ? node : node - 1);
  };
  const long count = static_cast<long>(n * m - 1);
  if (count == 0) return RealMatrix(n, m, 0.0);

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(count);
  auto add_edge = [&](std::size_t from, std::size_t to, double diff) {
    // (z_to - z_from - diff)^2
    const long a = unknown(from), b = unknown(to);
    if (b >= 0) {
      triplets.emplace_back(b, b, 1.0);
      rhs(b) += diff;
    }
    if (a >= 0) {
      triplets.emplace_back(a, a, 1.0);
      rhs(a) -= diff;
    }
    if (a >= 0 && b >= 0) {
      triplets.emplace_back(a, b, -1.0);
      triplets.emplace_back(b, a, -1.0);
    }
  };
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) add_edge(i * m + j, (i + 1) * m + j, dx(i, j));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j + 1 < m; ++j) add_edge(i * m + j, i * m + j + 1, dy(i, j));
  }

  Eigen::SparseMatrix<double> normal(count, count);
  normal.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(normal);
  if (solver.info() != Eigen::Success) throw ConfigError("surface reconstruction: factorization failed");
  const Eigen::VectorXd z = solver.solve(rhs);

  RealMatrix out(n, m, 0.0);
  for (std::size_t node = 0; node < n * m; ++node) {
    const long u = unknown(node);
    if (u >= 0) out(node / m, node % m) = z(u);
  }
  return out;
}

RealMatrix reconstruct_surface(const RealMatrix& gx, const RealMatrix& gy, double hx, double hy) {
  const std::size_t n = gx.rows(), m = gx.cols();
  if (gy.rows() != n || gy.cols() != m) throw ConfigError("gradient components differ in shape");
  if (n == 0 || m == 0) throw ConfigError("empty gradient field");
  RealMatrix dx(n - 1, m), dy(n, m - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) dx(i, j) = 0.5 * hx * (gx(i, j) + gx(i + 1, j));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j + 1 < m; ++j) dy(i, j) = 0.5 * hy * (gy(i, j) + gy(i, j + 1));
  }
  return reconstruct_from_differences(dx, dy);
}

std::vector<LandscapeMethod> default_landscape_methods(const MethodConfig& base) {
  MethodConfig act = base, tim = base, ant = base;
  act.lambda_act = 1.0, act.lambda_tim = 0.0, act.use_reset_paths = false;
  tim.lambda_act = 0.0, tim.lambda_tim = 1.0, tim.use_reset_paths = false;
  ant.lambda_act = 1.0, ant.lambda_tim = 1.0, ant.use_reset_paths = false;
  return {{"activation", act}, {"timing", tim}, {"antlr", ant}};
}

LandscapeGrid landscape_scan(const Parameters& center, const LandscapeProblem& problem,
                             const PcaDirections& dims, double scale, std::size_t resolution, double extent,
                             const std::vector<LandscapeMethod>& methods, std::size_t workers) {
  if (resolution < 3 || resolution % 2 == 0) throw ConfigError("landscape resolution must be odd and >= 3");
  if (!(scale > 0.0) || !(extent > 0.0)) throw ConfigError("landscape scale and extent must be positive");
  const std::size_t p = flatten(center).size();
  if (dims.dim0.size() != p || dims.dim1.size() != p) throw ConfigError("directions do not match the parameters");

  LandscapeGrid g;
  g.dims = dims;
  g.scale = scale;
  g.extent = extent;
  g.resolution = resolution;
  const double h = 2.0 * extent / static_cast<double>(resolution - 1);
  for (std::size_t k = 0; k < resolution; ++k) g.coords.push_back(-extent + h * static_cast<double>(k));
  g.coords[resolution / 2] = 0.0;

  g.true_loss = RealMatrix(resolution, resolution);
  g.spike_count = Matrix<std::size_t>(resolution, resolution);
  g.unchanged = Matrix<std::uint8_t>(resolution, resolution);
  for (const auto& m : methods) {
    g.methods.push_back(m.name);
    g.grad0.emplace_back(resolution, resolution);
    g.grad1.emplace_back(resolution, resolution);
  }

  const SpikeTrainLoss loss{problem.targets, problem.kappa};
  std::vector<std::vector<std::size_t>> per_neuron(resolution * resolution);
  parallel_for(resolution * resolution, workers, [&](std::size_t idx) {
    const std::size_t i = idx / resolution, j = idx % resolution;
    std::vector<double> delta(p);
    for (std::size_t k = 0; k < p; ++k) {
      delta[k] = scale * (g.coords[i] * dims.dim0[k] + g.coords[j] * dims.dim1[k]);
    }
    const Parameters params = offset_params(center, delta);
    const ForwardTrace trace = forward_rnn(params, problem.input, problem.shape, problem.neuron);
    const LossGrads seeds = spike_train_loss(trace.output_spikes(), loss);
    g.true_loss(i, j) = seeds.value;
    g.spike_count(i, j) = trace.non_input_spike_count();
    for (std::size_t l = 1; l < trace.num_layers(); ++l) {
      const SpikeMatrix& s = trace.spikes[l];
      for (std::size_t n = 0; n < s.cols(); ++n) {
        std::size_t k = 0;
        for (std::size_t t = 0; t < s.rows(); ++t) k += s(t, n) != 0;
        per_neuron[idx].push_back(k);
      }
    }
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const auto flat = flatten(backprop(trace, params, seeds, methods[k].method, problem.neuron).grads);
      g.grad0[k](i, j) = scale * dot(flat, dims.dim0);
      g.grad1[k](i, j) = scale * dot(flat, dims.dim1);
    }
  });

  const std::size_t c = resolution / 2;
  for (std::size_t i = 0; i < resolution; ++i) {
    for (std::size_t j = 0; j < resolution; ++j) {
      g.unchanged(i, j) = per_neuron[i * resolution + j] == per_neuron[c * resolution + c];
    }
  }
  for (std::size_t k = 0; k < methods.size(); ++k) g.surface.push_back(reconstruct_surface(g.grad0[k], g.grad1[k], h, h));
  return g;
}

LandscapeStats landscape_stats(const LandscapeGrid& grid, double zero_tol) {
  auto find = [&](const std::string& name) -> long {
    for (std::size_t k = 0; k < grid.methods.size(); ++k) {
      if (grid.methods[k] == name) return static_cast<long>(k);
    }
    return -1;
  };
  const long act = find("activation"), tim = find("timing");
  LandscapeStats s;
  std::size_t tim_nonzero = 0, act_zero = 0;
  for (std::size_t i = 0; i < grid.resolution; ++i) {
    for (std::size_t j = 0; j < grid.resolution; ++j) {
      if (!grid.unchanged(i, j)) continue;
      ++s.unchanged_points;
      if (tim >= 0 && std::hypot(grid.grad0[tim](i, j), grid.grad1[tim](i, j)) > zero_tol) ++tim_nonzero;
      if (act >= 0 && std::hypot(grid.grad0[act](i, j), grid.grad1[act](i, j)) <= zero_tol) ++act_zero;
    }
  }
  if (s.unchanged_points > 0) {
    s.timing_nonzero_fraction = static_cast<double>(tim_nonzero) / static_cast<double>(s.unchanged_points);
    s.activation_zero_fraction = static_cast<double>(act_zero) / static_cast<double>(s.unchanged_points);
  }
  return s;
}

LandscapeRun train_for_landscape(const ExperimentConfig& cfg) {
  cfg.validate();
  LandscapeRun run;
  MatchingProblem mp = make_matching_problem(cfg, 0);
  run.problem = {cfg.shape(), cfg.neuron, cfg.kappa_exp, mp.input, mp.targets};
  const std::vector<LossSpec> terms{SpikeTrainLoss{mp.targets, cfg.kappa_exp}};
  OptimizerState opt(cfg.optim);
  double sum_sq = 0.0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    SampleOutcome o = sample_gradient(mp.params, mp.input, terms, cfg);
    run.loss_curve.push_back(o.loss);
    if (o.loss == 0.0) {
      run.reached_zero = true;
      break;
    }
    auto flat = flatten(o.grads);
    sum_sq += dot(flat, flat);
    run.grad_history.push_back(std::move(flat));
    optimizer_step(mp.params, std::move(o.grads), opt);
  }
  if (!run.reached_zero) {
    const auto trace = forward_rnn(mp.params, mp.input, cfg.shape(), cfg.neuron);
    const double final_loss = compute_loss(trace.output_spikes(), terms).value;
    run.loss_curve.push_back(final_loss);
    run.reached_zero = final_loss == 0.0;
  }
  if (!run.grad_history.empty()) run.rms_grad_norm = std::sqrt(sum_sq / static_cast<double>(run.grad_history.size()));
  run.optimum = std::move(mp.params);
  return run;
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<double>& coords, const RealMatrix& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  char buf[64];
  out << "dim0\\dim1";
  for (double c : coords) {
    std::snprintf(buf, sizeof buf, ",%.17g", c);
    out << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", coords.at(i));
    out << buf;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", m(i, j));
      out << buf;
    }
    out << '\n';
  }
}

void write_landscape(const std::filesystem::path& dir, const LandscapeGrid& grid) {
  std::filesystem::create_directories(dir);
  auto as_real = [](const auto& mat) {
    RealMatrix r(mat.rows(), mat.cols());
    for (std::size_t k = 0; k < mat.size(); ++k) r.flat()[k] = static_cast<double>(mat.flat()[k]);
    return r;
  };
  write_grid_csv(dir / "true_loss.csv", grid.coords, grid.true_loss);
  write_grid_csv(dir / "spike_count.csv", grid.coords, as_real(grid.spike_count));
  write_grid_csv(dir / "unchanged_mask.csv", grid.coords, as_real(grid.unchanged));
  for (std::size_t k = 0; k < grid.methods.size(); ++k) {
    write_grid_csv(dir / (grid.methods[k] + "_surface.csv"), grid.coords, grid.surface[k]);
    write_grid_csv(dir / (grid.methods[k] + "_grad0.csv"), grid.coords, grid.grad0[k]);
    write_grid_csv(dir / (grid.methods[k] + "_grad1.csv"), grid.coords, grid.grad1[k]);
  }
  nlohmann::json meta{{"resolution", grid.resolution},
                      {"extent", grid.extent},
                      {"scale", grid.scale},
                      {"coords", grid.coords},
                      {"methods", grid.methods},
                      {"variance0", grid.dims.variance0},
                      {"variance1", grid.dims.variance1}};
  std::ofstream(dir / "landscape.json") << meta.dump(2) << '\n';
}

}  // namespace snn
