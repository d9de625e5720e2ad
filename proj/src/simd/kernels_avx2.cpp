// Built with -mavx2 (no FMA) so that every lane follows the scalar rounding.
#include "snngrad/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

#include <cstring>

namespace snn::simd {
namespace {

// 0.0 where spike, 1.0 where silent, for four consecutive neurons.
inline __m256d keep_mask(const std::uint8_t* spikes) {
  std::uint32_t packed;
  std::memcpy(&packed, spikes, sizeof(packed));
  const __m128i bytes = _mm_cvtsi32_si128(static_cast<int>(packed));
  const __m256i lanes = _mm256_cvtepu8_epi64(bytes);
  const __m256i zero = _mm256_setzero_si256();
  const __m256i silent = _mm256_cmpeq_epi64(lanes, zero);
  return _mm256_and_pd(_mm256_castsi256_pd(silent), _mm256_set1_pd(1.0));
}

void add_rows(double* out, const double* weights, std::size_t cols,
              const std::uint32_t* rows, std::size_t n_rows) {
  const std::size_t body = cols - cols % 4;
  for (std::size_t k = 0; k < n_rows; ++k) {
    const double* w = weights + static_cast<std::size_t>(rows[k]) * cols;
    std::size_t j = 0;
    for (; j < body; j += 4) {
      _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_loadu_pd(out + j),
                                              _mm256_loadu_pd(w + j)));
    }
    for (; j < cols; ++j) out[j] += w[j];
  }
}

void axpy(double* out, const double* x, double scale, std::size_t n) {
  const __m256d s = _mm256_set1_pd(scale);
  const std::size_t body = n - n % 4;
  std::size_t j = 0;
  for (; j < body; j += 4) {
    const __m256d prod = _mm256_mul_pd(s, _mm256_loadu_pd(x + j));
    _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_loadu_pd(out + j), prod));
  }
  for (; j < n; ++j) out[j] += scale * x[j];
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t body = n - n % 4;
  std::size_t j = 0;
  for (; j < body; j += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + j),
                                           _mm256_loadu_pd(b + j)));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; j < n; ++j) sum += a[j] * b[j];
  return sum;
}

void lif_step(const LifCoefficients& c, const std::uint8_t* prev_spikes,
              const double* syn, const double* bias, const double* i_prev,
              const double* v_prev, double* i_out, double* v_out,
              std::size_t n) {
  const __m256d av = _mm256_set1_pd(c.alpha_v);
  const __m256d ai = _mm256_set1_pd(c.alpha_i);
  const __m256d bv = _mm256_set1_pd(c.beta_v);
  const __m256d bi = _mm256_set1_pd(c.beta_i);
  const __m256d bb = _mm256_set1_pd(c.beta_bias);
  const std::size_t body = n - n % 4;
  std::size_t j = 0;
  for (; j < body; j += 4) {
    const __m256d keep = keep_mask(prev_spikes + j);
    const __m256d decayed_i =
        _mm256_mul_pd(_mm256_mul_pd(ai, _mm256_loadu_pd(i_prev + j)), keep);
    const __m256d i = _mm256_add_pd(
        decayed_i, _mm256_mul_pd(bi, _mm256_loadu_pd(syn + j)));
    _mm256_storeu_pd(i_out + j, i);
    const __m256d decayed_v =
        _mm256_mul_pd(_mm256_mul_pd(av, _mm256_loadu_pd(v_prev + j)), keep);
    __m256d v = _mm256_add_pd(decayed_v, _mm256_mul_pd(bv, i));
    v = _mm256_add_pd(v, _mm256_mul_pd(bb, _mm256_loadu_pd(bias + j)));
    _mm256_storeu_pd(v_out + j, v);
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
  const __m256d th = _mm256_set1_pd(theta);
  const std::size_t body = n - n % 4;
  std::size_t j = 0;
  for (; j < body; j += 4) {
    const int mask =
        _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(v + j), th, _CMP_GE_OQ));
    out[j] = mask & 1;
    out[j + 1] = (mask >> 1) & 1;
    out[j + 2] = (mask >> 2) & 1;
    out[j + 3] = (mask >> 3) & 1;
  }
  for (; j < n; ++j) out[j] = v[j] >= theta ? 1 : 0;
}

void adjoint_step(const AdjointCoefficients& c, const std::uint8_t* spikes,
                  const double* dv, const double* dv_dep_next,
                  const double* di_next, const double* trace_next,
                  double* dv_dep, double* di, double* trace, std::size_t n) {
  const __m256d av = _mm256_set1_pd(c.alpha_v);
  const __m256d ai = _mm256_set1_pd(c.alpha_i);
  const __m256d bv = _mm256_set1_pd(c.beta_v);
  const std::size_t body = n - n % 4;
  std::size_t j = 0;
  for (; j < body; j += 4) {
    const __m256d keep = keep_mask(spikes + j);
    const __m256d local = _mm256_loadu_pd(dv + j);
    const __m256d dep = _mm256_add_pd(
        local,
        _mm256_mul_pd(_mm256_mul_pd(av, _mm256_loadu_pd(dv_dep_next + j)), keep));
    _mm256_storeu_pd(dv_dep + j, dep);
    const __m256d carried_i =
        _mm256_mul_pd(_mm256_mul_pd(ai, _mm256_loadu_pd(di_next + j)), keep);
    _mm256_storeu_pd(di + j, _mm256_add_pd(_mm256_mul_pd(bv, dep), carried_i));
    const __m256d carried_t =
        _mm256_mul_pd(_mm256_mul_pd(ai, _mm256_loadu_pd(trace_next + j)), keep);
    _mm256_storeu_pd(trace + j, _mm256_add_pd(local, carried_t));
  }
  for (; j < n; ++j) {
    const double keep = spikes[j] ? 0.0 : 1.0;
    const double dep = dv[j] + c.alpha_v * dv_dep_next[j] * keep;
    dv_dep[j] = dep;
    di[j] = c.beta_v * dep + c.alpha_i * di_next[j] * keep;
    trace[j] = dv[j] + c.alpha_i * trace_next[j] * keep;
  }
}

constexpr KernelTable kAvx2{
    Isa::avx2, "avx2", add_rows, axpy, dot, lif_step, threshold, adjoint_step,
};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2; }

}  // namespace snn::simd

#else

namespace snn::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace snn::simd

#endif
