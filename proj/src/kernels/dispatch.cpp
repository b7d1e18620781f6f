#include "mmrf/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mmrf::kernels {

namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(MMRF_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(MMRF_HAVE_NEON)
      return true;  // mandatory on AArch64
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& select() {
  if (const char* env = std::getenv("MMRF_KERNELS")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa) && cpu_has(isa)) return table(isa);
    }
  }
  if (cpu_has(Isa::avx2)) return table(Isa::avx2);
  if (cpu_has(Isa::neon)) return table(Isa::neon);
  return detail::scalar_table;
}

}  // namespace

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

bool supported(Isa isa) { return cpu_has(isa); }

const KernelTable& table(Isa isa) {
  if (!cpu_has(isa)) {
    throw std::runtime_error("kernel variant '" + std::string(isa_name(isa)) + "' is not available on this CPU");
  }
  switch (isa) {
#if defined(MMRF_HAVE_AVX2)
    case Isa::avx2:
      return detail::avx2_table;
#endif
#if defined(MMRF_HAVE_NEON)
    case Isa::neon:
      return detail::neon_table;
#endif
    default:
      return detail::scalar_table;
  }
}

const KernelTable& active() {
  static const KernelTable& chosen = select();
  return chosen;
}

}  // namespace mmrf::kernels
