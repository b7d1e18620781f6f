#include "mmrf/kernels.hpp"

namespace mmrf::kernels::detail {

namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float sum = 0.0f;
  for (std::size_t k = 0; k < n; ++k) sum += a[k] * b[k];
  return sum;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

void dot_rows_scalar(const float* query, const float* rows, std::size_t stride, std::size_t count,
                     std::size_t n, float* out) {
  for (std::size_t j = 0; j < count; ++j) out[j] = dot_scalar(query, rows + j * stride, n);
}

}  // namespace

const KernelTable scalar_table{Isa::scalar, "scalar", dot_scalar, axpy_scalar, dot_rows_scalar};

}  // namespace mmrf::kernels::detail
