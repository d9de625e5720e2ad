#include <cstring>
#include <vector>

#include "doctest.h"
#include "snngrad/analysis.hpp"
#include "snngrad/grad.hpp"
#include "snngrad/neuron.hpp"
#include "snngrad/random.hpp"
#include "snngrad/simd/kernels.hpp"

using namespace snn;
using simd::KernelTable;

namespace {

std::vector<double> randn(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * 3.0;
  return v;
}

std::vector<std::uint8_t> bits(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = rng.below(3) == 0;
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Restores the dispatch choice when a test that switches ISAs finishes.
struct IsaGuard {
  simd::Isa saved = simd::active_kernels().isa;
  ~IsaGuard() { simd::set_active_isa(saved); }
};

}  // namespace

TEST_CASE("scalar table is always available") {
  CHECK(simd::isa_supported(simd::Isa::scalar));
  CHECK(simd::available_kernels().front()->isa == simd::Isa::scalar);
  CHECK(simd::parse_isa("avx2") == simd::Isa::avx2);
  CHECK_FALSE(simd::parse_isa("sse9").has_value());
}

TEST_CASE("every variant matches the scalar kernels bit for bit") {
  const KernelTable& ref = simd::scalar_kernels();
  for (const KernelTable* k : simd::available_kernels()) {
    CAPTURE(k->name);
    Rng rng(42);
    for (std::size_t n = 0; n < 41; ++n) {
      CAPTURE(n);
      const auto a = randn(rng, n);
      const auto b = randn(rng, n);
      const double da = ref.dot(a.data(), b.data(), n);
      const double db = k->dot(a.data(), b.data(), n);
      CHECK(std::memcmp(&da, &db, sizeof da) == 0);

      auto y0 = randn(rng, n);
      auto y1 = y0;
      ref.axpy(y0.data(), a.data(), 0.7, n);
      k->axpy(y1.data(), a.data(), 0.7, n);
      CHECK(same_bits(y0, y1));

      const std::size_t rows = 7;
      const auto w = randn(rng, rows * n);
      const std::uint32_t pick[] = {0, 3, 6, 3};
      auto r0 = randn(rng, n);
      auto r1 = r0;
      ref.add_rows(r0.data(), w.data(), n, pick, 4);
      k->add_rows(r1.data(), w.data(), n, pick, 4);
      CHECK(same_bits(r0, r1));

      const simd::LifCoefficients lc{0.93, 0.81, 1.1, 0.9, 0.7};
      const auto s = bits(rng, n);
      const auto syn = randn(rng, n);
      const auto bias = randn(rng, n);
      const auto ip = randn(rng, n);
      const auto vp = randn(rng, n);
      std::vector<double> i0(n), v0(n), i1(n), v1(n);
      ref.lif_step(lc, s.data(), syn.data(), bias.data(), ip.data(), vp.data(), i0.data(), v0.data(), n);
      k->lif_step(lc, s.data(), syn.data(), bias.data(), ip.data(), vp.data(), i1.data(), v1.data(), n);
      CHECK(same_bits(i0, i1));
      CHECK(same_bits(v0, v1));

      std::vector<std::uint8_t> t0(n), t1(n);
      ref.threshold(v0.data(), 0.5, t0.data(), n);
      k->threshold(v0.data(), 0.5, t1.data(), n);
      CHECK(t0 == t1);

      const simd::AdjointCoefficients ac{0.9, 0.8, 1.2};
      const auto dv = randn(rng, n);
      const auto dn = randn(rng, n);
      const auto in = randn(rng, n);
      const auto tn = randn(rng, n);
      std::vector<double> d0(n), e0(n), p0(n), d1(n), e1(n), p1(n);
      ref.adjoint_step(ac, s.data(), dv.data(), dn.data(), in.data(), tn.data(), d0.data(), e0.data(), p0.data(), n);
      k->adjoint_step(ac, s.data(), dv.data(), dn.data(), in.data(), tn.data(), d1.data(), e1.data(), p1.data(), n);
      CHECK(same_bits(d0, d1));
      CHECK(same_bits(e0, e1));
      CHECK(same_bits(p0, p1));
    }
  }
}

TEST_CASE("threshold is inclusive") {
  for (const KernelTable* k : simd::available_kernels()) {
    const double v[] = {0.999999, 1.0, 1.000001, -1.0, 1.0};
    std::uint8_t out[5];
    k->threshold(v, 1.0, out, 5);
    CHECK(out[0] == 0);
    CHECK(out[1] == 1);
    CHECK(out[2] == 1);
    CHECK(out[3] == 0);
    CHECK(out[4] == 1);
  }
}

TEST_CASE("forward and backward passes are identical under every ISA") {
  IsaGuard guard;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RandomInstance inst = random_instance(seed);
    simd::set_active_isa(simd::Isa::scalar);
    const ForwardTrace ref = forward_rnn(inst.params, inst.input, inst.shape, inst.cfg);
    Rng rng(seed);
    const LossGrads seeds = random_seeds(ref, rng);
    const auto ref_grads = backprop_antlr(ref, inst.params, seeds, MethodConfig::antlr(), inst.cfg).grads;
    for (const KernelTable* k : simd::available_kernels()) {
      CAPTURE(k->name);
      simd::set_active_isa(k->isa);
      const ForwardTrace trace = forward_rnn(inst.params, inst.input, inst.shape, inst.cfg);
      CHECK(trace.spikes == ref.spikes);
      CHECK(trace.potential == ref.potential);
      const auto grads = backprop_antlr(trace, inst.params, seeds, MethodConfig::antlr(), inst.cfg).grads;
      CHECK(grads == ref_grads);
    }
  }
}
