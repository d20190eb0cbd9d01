#include "bgn/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace bgn::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const Ops* select() {
  const Ops* avx2 = avx2_or_null();
  const bool usable = avx2 != nullptr && cpu_has_avx2();
  if (const char* env = std::getenv("BGN_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return &scalar();
    if (std::strcmp(env, "avx2") == 0 && usable) return avx2;
    return &scalar();
  }
  return usable ? avx2 : &scalar();
}

}  // namespace

const Ops& active() {
  static const Ops* selected = select();
  return *selected;
}

}  // namespace bgn::kernels
