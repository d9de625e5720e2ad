#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "snngrad/config.hpp"
#include "snngrad/grad.hpp"
#include "snngrad/matrix.hpp"
#include "snngrad/neuron.hpp"

namespace snn {

// Parameters and gradients as one flat vector, layer by layer, weights
// (row-major) before biases.
std::vector<double> flatten(const ParamGrads& g);
std::vector<double> flatten(const Parameters& p);
Parameters offset_params(const Parameters& base, const std::vector<double>& delta);

struct PcaDirections {
  std::vector<double> dim0;
  std::vector<double> dim1;
  double variance0 = 0.0;  // eigenvalues of the sample covariance
  double variance1 = 0.0;
};

// Top two principal directions of the mean-centred history. Throws
// ConfigError when the centred history has rank < 2.
PcaDirections pca_directions(const std::vector<std::vector<double>>& history);

// Least-squares integration of a forward-difference field: dx is
// (n - 1) x m with dx(i, j) ~ z(i + 1, j) - z(i, j), dy is n x (m - 1).
// The result is anchored to 0 at the centre node (n / 2, m / 2).
RealMatrix reconstruct_from_differences(const RealMatrix& dx, const RealMatrix& dy);

// Point samples of (dz/dx, dz/dy) on a grid with spacings hx (rows) and hy
// (columns). Each edge difference is the trapezoid average of its two end
// samples, which is exact for quadratic surfaces.
RealMatrix reconstruct_surface(const RealMatrix& gx, const RealMatrix& gy, double hx, double hy);

struct LandscapeMethod {
  std::string name;
  MethodConfig method;
};

// activation, timing and ANTLR (1, 1), sharing the surrogate settings of `base`.
std::vector<LandscapeMethod> default_landscape_methods(const MethodConfig& base);

// Rows follow Dim0, columns Dim1; coordinate k is -extent + 2 extent k / (n - 1)
// in units of `scale`.
struct LandscapeGrid {
  PcaDirections dims;
  double scale = 1.0;
  double extent = 1.0;
  std::size_t resolution = 41;
  std::vector<double> coords;

  RealMatrix true_loss;
  Matrix<std::size_t> spike_count;  // hidden + output spikes
  Matrix<std::uint8_t> unchanged;   // every neuron fires as often as at the centre

  std::vector<std::string> methods;
  std::vector<RealMatrix> grad0;    // dL/d(coordinate 0) = scale * g . Dim0
  std::vector<RealMatrix> grad1;
  std::vector<RealMatrix> surface;  // reconstructed, centre = 0
};

struct LandscapeProblem {
  NetworkShape shape;
  NeuronConfig neuron;
  double kappa = 0.95;
  SpikeMatrix input;
  SpikeMatrix targets;
};

LandscapeGrid landscape_scan(const Parameters& center, const LandscapeProblem& problem,
                             const PcaDirections& dims, double scale, std::size_t resolution, double extent,
                             const std::vector<LandscapeMethod>& methods, std::size_t workers);

struct LandscapeStats {
  std::size_t unchanged_points = 0;
  double timing_nonzero_fraction = 0.0;    // on unchanged points
  double activation_zero_fraction = 0.0;   // on unchanged points
};

// |projected gradient| <= zero_tol counts as zero.
LandscapeStats landscape_stats(const LandscapeGrid& grid, double zero_tol);

struct LandscapeRun {
  LandscapeProblem problem;
  Parameters optimum;
  std::vector<std::vector<double>> grad_history;
  std::vector<double> loss_curve;
  double rms_grad_norm = 0.0;
  bool reached_zero = false;
};

// Trains the matching instance of `cfg` (trial 0) with cfg.method, recording
// every update's gradient; stops once the loss is exactly zero.
LandscapeRun train_for_landscape(const ExperimentConfig& cfg);

// CSV grid: a header row "dim0\dim1,<coords...>" then one row per Dim0 value.
void write_grid_csv(const std::filesystem::path& path, const std::vector<double>& coords, const RealMatrix& m);
void write_landscape(const std::filesystem::path& dir, const LandscapeGrid& grid);

}  // namespace snn
