#include "mmrf/kernels.hpp"

#include <arm_neon.h>

namespace mmrf::kernels::detail {

namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + k), vld1q_f32(b + k));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + k + 4), vld1q_f32(b + k + 4));
  }
  for (; k + 4 <= n; k += 4) acc0 = vfmaq_f32(acc0, vld1q_f32(a + k), vld1q_f32(b + k));
  float sum = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; k < n; ++k) sum += a[k] * b[k];
  return sum;
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) vst1q_f32(y + k, vfmaq_f32(vld1q_f32(y + k), va, vld1q_f32(x + k)));
  for (; k < n; ++k) y[k] += alpha * x[k];
}

void dot_rows_neon(const float* query, const float* rows, std::size_t stride, std::size_t count,
                   std::size_t n, float* out) {
  for (std::size_t j = 0; j < count; ++j) out[j] = dot_neon(query, rows + j * stride, n);
}

}  // namespace

const KernelTable neon_table{Isa::neon, "neon", dot_neon, axpy_neon, dot_rows_neon};

}  // namespace mmrf::kernels::detail
