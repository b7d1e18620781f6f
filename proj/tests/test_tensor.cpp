#include <limits>

#include "doctest.h"
#include "fixtures.hpp"
#include "mmrf/tensor.hpp"

using namespace mmrf;

TEST_CASE("indexing is row-major over (row, col, channel)") {
  Tensor t(2, 3, 4);
  t(1, 2, 3) = 5.0f;
  CHECK(t.index(1, 2, 3) == 23);
  CHECK(t.data()[23] == 5.0f);
  CHECK(t.pixel(1, 2)[3] == 5.0f);
  CHECK(t.shape_string() == "2x3x4");
}

TEST_CASE("constructor rejects mismatched data and bad extents") {
  CHECK_THROWS_AS(Tensor(2, 2, 1, std::vector<float>(3)), ShapeError);
  CHECK_THROWS_AS(Tensor(-1, 2, 1), ShapeError);
}

TEST_CASE("elementwise ops require identical shapes") {
  Tensor a(2, 2, 1, 3.0f), b(2, 2, 1, 2.0f);
  CHECK(add(a, b)(1, 1, 0) == 5.0f);
  CHECK(sub(a, b)(0, 1, 0) == 1.0f);
  CHECK(mul(a, b)(1, 0, 0) == 6.0f);
  CHECK(scaled(a, 0.5f)(0, 0, 0) == 1.5f);
  CHECK_THROWS_AS(add(a, Tensor(2, 3, 1)), ShapeError);
  CHECK_THROWS_AS(mul(a, Tensor(2, 2, 2)), ShapeError);
}

TEST_CASE("bilinear upsampling of a ramp uses half-pixel centres") {
  Tensor t(2, 2, 1, std::vector<float>{0, 1, 0, 1});
  const Tensor up = resample_bilinear(t, 2, 4);
  const float expected[] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) CHECK(up(r, c, 0) == doctest::Approx(expected[c]).epsilon(1e-7));
}

TEST_CASE("bilinear resampling to the same size is an exact copy") {
  const Tensor t = testing::random_tensor(5, 7, 3, 11);
  CHECK(resample_bilinear(t, 5, 7) == t);
}

TEST_CASE("bilinear downsampling by two averages 2x2 blocks") {
  const Tensor t = testing::random_tensor(8, 6, 2, 4);
  const Tensor d = resample_bilinear(t, 4, 3);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c)
      for (int ch = 0; ch < 2; ++ch) {
        const double mean = (t(2 * r, 2 * c, ch) + t(2 * r + 1, 2 * c, ch) + t(2 * r, 2 * c + 1, ch) +
                             t(2 * r + 1, 2 * c + 1, ch)) / 4.0;
        CHECK(d(r, c, ch) == doctest::Approx(mean).epsilon(1e-6));
      }
}

TEST_CASE("resampling a constant field keeps it constant") {
  const Tensor t(3, 5, 2, 0.375f);
  const Tensor r = resample_bilinear(t, 7, 4);
  for (float v : r.data()) CHECK(v == 0.375f);
}

TEST_CASE("sum of squares accumulates in double") {
  Tensor t(1, 3, 1, std::vector<float>{1, -2, 3});
  CHECK(sum_squares(t) == 14.0);
}

TEST_CASE("channel slice and concat are inverse") {
  const Tensor t = testing::random_tensor(3, 4, 5, 8);
  const Tensor a = slice_channels(t, 0, 2);
  const Tensor b = slice_channels(t, 2, 5);
  CHECK(a.channels() == 2);
  CHECK(concat_channels(a, b) == t);
  CHECK_THROWS_AS(slice_channels(t, 3, 2), ShapeError);
  CHECK_THROWS_AS(concat_channels(a, Tensor(4, 4, 1)), ShapeError);
}

TEST_CASE("clamp and finiteness") {
  Tensor t(1, 3, 1, std::vector<float>{-1, 0.5f, 2});
  const Tensor c = clamped(t, 0, 1);
  CHECK(c(0, 0, 0) == 0.0f);
  CHECK(c(0, 1, 0) == 0.5f);
  CHECK(c(0, 2, 0) == 1.0f);
  CHECK(all_finite(t));
  t(0, 1, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(all_finite(t));
}
