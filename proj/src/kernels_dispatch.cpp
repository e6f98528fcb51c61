#include "daenet/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace daenet::kernels {

bool avx2_compiled();  // defined in kernels_avx2.cpp

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  return avx2_compiled() && __builtin_cpu_supports("avx2") &&
         __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops& active() {
  static const Ops* selected = [] {
    const char* env = std::getenv("DAENET_KERNELS");
    if (env != nullptr) {
      if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
      if (std::strcmp(env, "avx2") == 0) {
        if (avx2_available()) return &avx2_ops();
        std::fprintf(stderr,
                     "daenet: DAENET_KERNELS=avx2 requested but AVX2/FMA is "
                     "unavailable; using scalar kernels\n");
        return &scalar_ops();
      }
      std::fprintf(stderr, "daenet: unknown DAENET_KERNELS value '%s'; using "
                           "automatic selection\n",
                   env);
    }
    return avx2_available() ? &avx2_ops() : &scalar_ops();
  }();
  return *selected;
}

}  // namespace daenet::kernels
