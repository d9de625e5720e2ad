#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

// Data-parallel inner loops of the forward and backward passes.
//
// Every ISA variant computes bit-identical results to the scalar reference:
// elementwise kernels use the same operation order without contraction, and
// `dot` uses a fixed 4-lane partial-sum layout that the scalar code mirrors.
// Kernel selection therefore never changes a training trajectory.
namespace snn::simd {

enum class Isa { scalar, avx2, neon };

struct LifCoefficients {
  double alpha_v;
  double alpha_i;
  double beta_v;
  double beta_i;
  double beta_bias;
};

struct AdjointCoefficients {
  double alpha_v;
  double alpha_i;
  double beta_v;
};

struct KernelTable {
  Isa isa;
  std::string_view name;

  // out[j] += weights[rows[k] * cols + j] for k = 0..n_rows-1, in order.
  void (*add_rows)(double* out, const double* weights, std::size_t cols,
                   const std::uint32_t* rows, std::size_t n_rows);

  // out[j] += scale * x[j]
  void (*axpy)(double* out, const double* x, double scale, std::size_t n);

  // sum_j a[j] * b[j] with the canonical 4-lane reduction order.
  double (*dot)(const double* a, const double* b, std::size_t n);

  // One step of the current/potential recursion with reset:
  //   keep = 1 - prev_spikes
  //   i_out = alpha_i * i_prev * keep + beta_i * syn
  //   v_out = alpha_v * v_prev * keep + beta_v * i_out + beta_bias * bias
  void (*lif_step)(const LifCoefficients& c, const std::uint8_t* prev_spikes,
                   const double* syn, const double* bias, const double* i_prev,
                   const double* v_prev, double* i_out, double* v_out,
                   std::size_t n);

  // out[j] = v[j] >= theta
  void (*threshold)(const double* v, double theta, std::uint8_t* out,
                    std::size_t n);

  // One backward step of the accumulated adjoints (reset cut by spikes):
  //   keep = 1 - spikes
  //   dv_dep = dv + alpha_v * dv_dep_next * keep
  //   di     = beta_v * dv_dep + alpha_i * di_next * keep
  //   trace  = dv + alpha_i * trace_next * keep
  void (*adjoint_step)(const AdjointCoefficients& c, const std::uint8_t* spikes,
                       const double* dv, const double* dv_dep_next,
                       const double* di_next, const double* trace_next,
                       double* dv_dep, double* di, double* trace,
                       std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled for this target.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

bool isa_supported(Isa isa);
std::vector<const KernelTable*> available_kernels();

// Selected once from SNNGRAD_ISA (scalar|avx2|neon|auto), defaulting to the
// widest supported variant.
const KernelTable& active_kernels();
void set_active_isa(Isa isa);

std::string_view isa_name(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

}  // namespace snn::simd
