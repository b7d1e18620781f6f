// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "mmrf/kernels.hpp"

#include <immintrin.h>

namespace mmrf::kernels::detail {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  __m256 acc2 = _mm256_setzero_ps();
  __m256 acc3 = _mm256_setzero_ps();
  std::size_t k = 0;
  for (; k + 32 <= n; k += 32) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), acc1);
    acc2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 16), _mm256_loadu_ps(b + k + 16), acc2);
    acc3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 24), _mm256_loadu_ps(b + k + 24), acc3);
  }
  for (; k + 8 <= n; k += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc0);
  }
  float sum = hsum(_mm256_add_ps(_mm256_add_ps(acc0, acc1), _mm256_add_ps(acc2, acc3)));
  for (; k < n; ++k) sum += a[k] * b[k];
  return sum;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    _mm256_storeu_ps(y + k, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + k), _mm256_loadu_ps(y + k)));
  }
  for (; k < n; ++k) y[k] += alpha * x[k];
}

// Four rows per pass so each query load feeds four FMAs.
void dot_rows_avx2(const float* query, const float* rows, std::size_t stride, std::size_t count,
                   std::size_t n, float* out) {
  std::size_t j = 0;
  for (; j + 4 <= count; j += 4) {
    const float* r0 = rows + j * stride;
    const float* r1 = r0 + stride;
    const float* r2 = r1 + stride;
    const float* r3 = r2 + stride;
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    __m256 acc2 = _mm256_setzero_ps();
    __m256 acc3 = _mm256_setzero_ps();
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
      const __m256 q = _mm256_loadu_ps(query + k);
      acc0 = _mm256_fmadd_ps(q, _mm256_loadu_ps(r0 + k), acc0);
      acc1 = _mm256_fmadd_ps(q, _mm256_loadu_ps(r1 + k), acc1);
      acc2 = _mm256_fmadd_ps(q, _mm256_loadu_ps(r2 + k), acc2);
      acc3 = _mm256_fmadd_ps(q, _mm256_loadu_ps(r3 + k), acc3);
    }
    float s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
    for (; k < n; ++k) {
      s0 += query[k] * r0[k];
      s1 += query[k] * r1[k];
      s2 += query[k] * r2[k];
      s3 += query[k] * r3[k];
    }
    out[j] = s0;
    out[j + 1] = s1;
    out[j + 2] = s2;
    out[j + 3] = s3;
  }
  for (; j < count; ++j) out[j] = dot_avx2(query, rows + j * stride, n);
}

}  // namespace

const KernelTable avx2_table{Isa::avx2, "avx2", dot_avx2, axpy_avx2, dot_rows_avx2};

}  // namespace mmrf::kernels::detail
