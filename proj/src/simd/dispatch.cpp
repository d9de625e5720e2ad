#include <atomic>
#include <cstdlib>
#include <string>

#include "snngrad/errors.hpp"
#include "snngrad/simd/kernels.hpp"

namespace snn::simd {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_kernels();
    case Isa::avx2:
      return cpu_has_avx2() ? avx2_kernels() : nullptr;
    case Isa::neon:
      return neon_kernels();
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("SNNGRAD_ISA")) {
    const std::string_view name(env);
    if (name != "auto" && !name.empty()) {
      const auto isa = parse_isa(name);
      if (!isa) throw ConfigError("SNNGRAD_ISA: unknown kernel variant '" + std::string(name) + "'");
      const KernelTable* table = table_for(*isa);
      if (!table) throw ConfigError("SNNGRAD_ISA: variant '" + std::string(name) + "' unsupported on this CPU");
      return table;
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (const KernelTable* table = table_for(isa)) return table;
  }
  return &scalar_kernels();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

bool isa_supported(Isa isa) { return table_for(isa) != nullptr; }

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (const KernelTable* table = table_for(isa)) out.push_back(table);
  }
  return out;
}

const KernelTable& active_kernels() {
  const KernelTable* table = g_active.load(std::memory_order_acquire);
  if (!table) {
    const KernelTable* chosen = pick_default();
    g_active.compare_exchange_strong(table, chosen, std::memory_order_acq_rel);
    table = g_active.load(std::memory_order_acquire);
  }
  return *table;
}

void set_active_isa(Isa isa) {
  const KernelTable* table = table_for(isa);
  if (!table) throw ConfigError("kernel variant '" + std::string(isa_name(isa)) + "' unsupported on this CPU");
  g_active.store(table, std::memory_order_release);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "neon") return Isa::neon;
  return std::nullopt;
}

}  // namespace snn::simd
