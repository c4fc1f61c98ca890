#include "gmc/simd.hpp"

namespace gmc::simd {

bool avx2_active() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active_table() {
  static const KernelTable& table = avx2_active() ? avx2_table() : scalar_table();
  return table;
}

}  // namespace gmc::simd
