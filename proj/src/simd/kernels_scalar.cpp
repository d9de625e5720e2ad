#include "snngrad/simd/kernels.hpp"

namespace snn::simd {
namespace {

void add_rows(double* out, const double* weights, std::size_t cols,
              const std::uint32_t* rows, std::size_t n_rows) {
  for (std::size_t k = 0; k < n_rows; ++k) {
    const double* w = weights + static_cast<std::size_t>(rows[k]) * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += w[j];
  }
}

void axpy(double* out, const double* x, double scale, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] += scale * x[j];
}

double dot(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t body = n - n % 4;
  for (std::size_t j = 0; j < body; j += 4) {
    lane[0] += a[j] * b[j];
    lane[1] += a[j + 1] * b[j + 1];
    lane[2] += a[j + 2] * b[j + 2];
    lane[3] += a[j + 3] * b[j + 3];
  }
  double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t j = body; j < n; ++j) sum += a[j] * b[j];
  return sum;
}

void lif_step(const LifCoefficients& c, const std::uint8_t* prev_spikes,
              const double* syn, const double* bias, const double* i_prev,
              const double* v_prev, double* i_out, double* v_out,
              std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double keep = prev_spikes[j] ? 0.0 : 1.0;
    const double i = c.alpha_i * i_prev[j] * keep + c.beta_i * syn[j];
    i_out[j] = i;
    v_out[j] = c.alpha_v * v_prev[j] * keep + c.beta_v * i + c.beta_bias * bias[j];
  }
}

void threshold(const double* v, double theta, std::uint8_t* out,
               std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = v[j] >= theta ? 1 : 0;
}

void adjoint_step(const AdjointCoefficients& c, const std::uint8_t* spikes,
                  const double* dv, const double* dv_dep_next,
                  const double* di_next, const double* trace_next,
                  double* dv_dep, double* di, double* trace, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double keep = spikes[j] ? 0.0 : 1.0;
    const double dep = dv[j] + c.alpha_v * dv_dep_next[j] * keep;
    dv_dep[j] = dep;
    di[j] = c.beta_v * dep + c.alpha_i * di_next[j] * keep;
    trace[j] = dv[j] + c.alpha_i * trace_next[j] * keep;
  }
}

constexpr KernelTable kScalar{
    Isa::scalar, "scalar", add_rows, axpy, dot, lif_step, threshold, adjoint_step,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace snn::simd
