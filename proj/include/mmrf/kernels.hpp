#pragma once

// Inner-loop arithmetic kernels. Every routine has a portable scalar
// reference and, where the target supports it, an AVX2+FMA (x86-64) or NEON
// (AArch64) variant. The variant is chosen once at runtime from the CPU's
// capabilities; MMRF_KERNELS=scalar|avx2|neon overrides the choice.

#include <cstddef>
#include <string_view>

namespace mmrf::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  const char* name;
  /// sum_k a[k] * b[k]
  float (*dot)(const float* a, const float* b, std::size_t n);
  /// y[k] += alpha * x[k]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  /// out[j] = dot(query, rows + j * stride, n) for j in [0, count)
  void (*dot_rows)(const float* query, const float* rows, std::size_t stride, std::size_t count,
                   std::size_t n, float* out);
};

bool supported(Isa isa);

/// Table for a specific ISA; throws std::runtime_error if unsupported here.
const KernelTable& table(Isa isa);

/// Table selected for this process.
const KernelTable& active();

std::string_view isa_name(Isa isa);

namespace detail {
extern const KernelTable scalar_table;
#if defined(MMRF_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(MMRF_HAVE_NEON)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace mmrf::kernels
