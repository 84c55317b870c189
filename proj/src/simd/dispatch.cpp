#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "hybridsa/simd/kernels.hpp"

namespace hybridsa::simd {
namespace {

bool cpu_has_avx2() {
#if defined(HYBRIDSA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* best_table() {
  if (const char* forced = std::getenv("HYBRIDSA_SIMD"); forced != nullptr && *forced != '\0') {
    return &kernels_for(parse_backend(forced));
  }
#if defined(HYBRIDSA_HAVE_AVX2)
  if (cpu_has_avx2()) return &avx2::table();
#endif
#if defined(HYBRIDSA_HAVE_NEON)
  return &neon::table();
#endif
  return &scalar::table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{best_table()};
  return slot;
}

}  // namespace

bool backend_supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return cpu_has_avx2();
    case Backend::kNeon:
#if defined(HYBRIDSA_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Backend backend) {
  if (!backend_supported(backend)) {
    throw std::invalid_argument("SIMD backend not available on this machine: " +
                                std::string(backend_name(backend)));
  }
  switch (backend) {
#if defined(HYBRIDSA_HAVE_AVX2)
    case Backend::kAvx2:
      return avx2::table();
#endif
#if defined(HYBRIDSA_HAVE_NEON)
    case Backend::kNeon:
      return neon::table();
#endif
    default:
      return scalar::table();
  }
}

const KernelTable& kernels() { return *active_slot().load(std::memory_order_relaxed); }

Backend active_backend() { return kernels().backend; }

void set_backend(Backend backend) {
  active_slot().store(&kernels_for(backend), std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  throw std::invalid_argument("unknown SIMD backend: " + std::string(name));
}

}  // namespace hybridsa::simd
