// AArch64 variant. Uses separate mul/add (vmulq/vaddq, never vfmaq) so lanes
// round exactly like the scalar reference.
#include "snngrad/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace snn::simd {
namespace {

inline float64x2_t keep_pair(const std::uint8_t* spikes) {
  const double k0 = spikes[0] ? 0.0 : 1.0;
  const double k1 = spikes[1] ? 0.0 : 1.0;
  return float64x2_t{k0, k1};
}

void add_rows(double* out, const double* weights, std::size_t cols,
              const std::uint32_t* rows, std::size_t n_rows) {
  const std::size_t body = cols - cols % 2;
  for (std::size_t k = 0; k < n_rows; ++k) {
    const double* w = weights + static_cast<std::size_t>(rows[k]) * cols;
    std::size_t j = 0;
    for (; j < body; j += 2) vst1q_f64(out + j, vaddq_f64(vld1q_f64(out + j), vld1q_f64(w + j)));
    for (; j < cols; ++j) out[j] += w[j];
  }
}

void axpy(double* out, const double* x, double scale, std::size_t n) {
  const float64x2_t s = vdupq_n_f64(scale);
  const std::size_t body = n - n % 2;
  std::size_t j = 0;
  for (; j < body; j += 2) {
    vst1q_f64(out + j, vaddq_f64(vld1q_f64(out + j), vmulq_f64(s, vld1q_f64(x + j))));
  }
  for (; j < n; ++j) out[j] += scale * x[j];
}

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  const std::size_t body = n - n % 4;
  std::size_t j = 0;
  for (; j < body; j += 4) {
    acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(a + j), vld1q_f64(b + j)));
    acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(a + j + 2), vld1q_f64(b + j + 2)));
  }
  double sum = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
               (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (; j < n; ++j) sum += a[j] * b[j];
  return sum;
}

void lif_step(const LifCoefficients& c, const std::uint8_t* prev_spikes,
              const double* syn, const double* bias, const double* i_prev,
              const double* v_prev, double* i_out, double* v_out,
              std::size_t n) {
  const float64x2_t av = vdupq_n_f64(c.alpha_v);
  const float64x2_t ai = vdupq_n_f64(c.alpha_i);
  const float64x2_t bv = vdupq_n_f64(c.beta_v);
  const float64x2_t bi = vdupq_n_f64(c.beta_i);
  const float64x2_t bb = vdupq_n_f64(c.beta_bias);
  const std::size_t body = n - n % 2;
  std::size_t j = 0;
  for (; j < body; j += 2) {
    const float64x2_t keep = keep_pair(prev_spikes + j);
    const float64x2_t i = vaddq_f64(vmulq_f64(vmulq_f64(ai, vld1q_f64(i_prev + j)), keep),
                                    vmulq_f64(bi, vld1q_f64(syn + j)));
    vst1q_f64(i_out + j, i);
    float64x2_t v = vaddq_f64(vmulq_f64(vmulq_f64(av, vld1q_f64(v_prev + j)), keep),
                              vmulq_f64(bv, i));
    v = vaddq_f64(v, vmulq_f64(bb, vld1q_f64(bias + j)));
    vst1q_f64(v_out + j, v);
  }
  for (; j < n; ++j) {
    const double keep = prev_spikes[j] ? 0.0 : 1.0;
    const double i = c.alpha_i * i_prev[j] * keep + c.beta_i * syn[j];
    i_out[j] = i;
    v_out[j] = c.alpha_v * v_prev[j] * keep + c.beta_v * i + c.beta_bias * bias[j];
  }
}

void threshold(const double* v, double theta, std::uint8_t* out,
               std::size_t n) {
  const float64x2_t th = vdupq_n_f64(theta);
  const std::size_t body = n - n % 2;
  std::size_t j = 0;
  for (; j < body; j += 2) {
    const uint64x2_t ge = vcgeq_f64(vld1q_f64(v + j), th);
    out[j] = vgetq_lane_u64(ge, 0) ? 1 : 0;
    out[j + 1] = vgetq_lane_u64(ge, 1) ? 1 : 0;
  }
  for (; j < n; ++j) out[j] = v[j] >= theta ? 1 : 0;
}

void adjoint_step(const AdjointCoefficients& c, const std::uint8_t* spikes,
                  const double* dv, const double* dv_dep_next,
                  const double* di_next, const double* trace_next,
                  double* dv_dep, double* di, double* trace, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(c.alpha_v);
  const float64x2_t ai = vdupq_n_f64(c.alpha_i);
  const float64x2_t bv = vdupq_n_f64(c.beta_v);
  const std::size_t body = n - n % 2;
  std::size_t j = 0;
  for (; j < body; j += 2) {
    const float64x2_t keep = keep_pair(spikes + j);
    const float64x2_t local = vld1q_f64(dv + j);
    const float64x2_t dep =
        vaddq_f64(local, vmulq_f64(vmulq_f64(av, vld1q_f64(dv_dep_next + j)), keep));
    vst1q_f64(dv_dep + j, dep);
    vst1q_f64(di + j, vaddq_f64(vmulq_f64(bv, dep),
                                vmulq_f64(vmulq_f64(ai, vld1q_f64(di_next + j)), keep)));
    vst1q_f64(trace + j,
              vaddq_f64(local, vmulq_f64(vmulq_f64(ai, vld1q_f64(trace_next + j)), keep)));
  }
  for (; j < n; ++j) {
    const double keep = spikes[j] ? 0.0 : 1.0;
    const double dep = dv[j] + c.alpha_v * dv_dep_next[j] * keep;
    dv_dep[j] = dep;
    di[j] = c.beta_v * dep + c.alpha_i * di_next[j] * keep;
    trace[j] = dv[j] + c.alpha_i * trace_next[j] * keep;
  }
}

constexpr KernelTable kNeon{
    Isa::neon, "neon", add_rows, axpy, dot, lif_step, threshold, adjoint_step,
};

}  // namespace

const KernelTable* neon_kernels() { return &kNeon; }

}  // namespace snn::simd

#else

namespace snn::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace snn::simd

#endif
