#include <atomic>
#include <cstdlib>
#include <string>

#include "gridcast/error.hpp"
#include "gridcast/kernels/kernels.hpp"

namespace gridcast::kernels {

bool cpu_supports_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_kernels() {
#if defined(GRIDCAST_WITH_AVX2)
  return cpu_supports_avx2() ? &detail::avx2_table : nullptr;
#else
  return nullptr;
#endif
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  throw ConfigError("unknown kernel ISA '" + std::string(name) + "' (expected scalar|avx2)");
}

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_kernels();
    case Isa::avx2:
      return avx2_kernels();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("GRIDCAST_ISA"); env != nullptr && *env != '\0') {
    if (const auto* t = table_for(parse_isa(env))) return t;
    return &scalar_kernels();
  }
  if (const auto* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{initial_table()};
  return ptr;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) {
  const auto* t = table_for(isa);
  if (t == nullptr) throw ConfigError("kernel variant not available on this build/CPU");
  current().store(t, std::memory_order_relaxed);
}

}  // namespace gridcast::kernels
