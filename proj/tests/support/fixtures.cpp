#include "fixtures.hpp"

#include <cmath>
#include <filesystem>

#include "mmrf/random.hpp"

namespace mmrf::testing {

Tensor scene_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  const double cy = h * (0.35 + 0.3 * rng.uniform());
  const double cx = w * (0.35 + 0.3 * rng.uniform());
  const double radius = 0.25 * std::min(h, w);
  const double tint = rng.uniform();
  Tensor img(h, w, 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double u = (c + 0.5) / w;
      const double v = (r + 0.5) / h;
      double rgb[3] = {0.2 + 0.5 * u, 0.3 + 0.4 * v * tint, 0.6 - 0.3 * u * v};
      const double d = std::hypot(r - cy, c - cx);
      const double disc = 1.0 / (1.0 + std::exp((d - radius) * 0.8));
      rgb[0] += 0.35 * disc;
      rgb[1] += 0.25 * disc;
      if (r > 0.75 * h && r < 0.85 * h) {
        for (double& x : rgb) x *= 0.4;
      }
      rgb[2] += 0.08 * std::sin(0.9 * c) * std::cos(0.7 * r);
      for (int ch = 0; ch < 3; ++ch) img(r, c, ch) = static_cast<float>(std::clamp(rgb[ch], 0.0, 1.0));
    }
  }
  return img;
}

SoftMaskSet disc_masks(int h, int w) {
  Tensor m(h, w, 2);
  const double radius = 0.3 * std::min(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double d = std::hypot(r - 0.5 * h, c - 0.5 * w);
      const auto fg = static_cast<float>(1.0 / (1.0 + std::exp((d - radius) * 0.5)));
      m(r, c, 0) = fg;
      m(r, c, 1) = 1.0f - fg;
    }
  }
  return SoftMaskSet(std::move(m), {"fg", "bg"});
}

Tensor random_tensor(int h, int w, int c, std::uint64_t seed, float lo, float hi) {
  Rng rng(seed);
  Tensor t(h, w, c);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

std::string temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("mmrf_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace mmrf::testing
