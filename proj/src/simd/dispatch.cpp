#include "patchmil/simd/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace patchmil::simd {

bool avx2_available() {
#if defined(PATCHMIL_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() {
  static const KernelTable& chosen = []() -> const KernelTable& {
    const char* forced = std::getenv("PATCHMIL_SIMD");
    if (forced != nullptr && std::string_view(forced) == "scalar") return scalar::table();
#if defined(PATCHMIL_HAVE_AVX2)
    if (avx2_available()) return avx2::table();
#endif
    return scalar::table();
  }();
  return chosen;
}

}  // namespace patchmil::simd
