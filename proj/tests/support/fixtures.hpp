#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmrf/masks.hpp"
#include "mmrf/tensor.hpp"

namespace mmrf::testing {

/// Smooth RGB scene: a tinted gradient with a bright disc and a dark bar.
Tensor scene_image(int h, int w, std::uint64_t seed = 0);

/// Two soft masks ("fg" is a blurred disc, "bg" its complement).
SoftMaskSet disc_masks(int h, int w);

/// Uniform random tensor in [lo, hi).
Tensor random_tensor(int h, int w, int c, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f);

/// Fresh empty directory under the system temp dir.
std::string temp_dir(const std::string& tag);

}  // namespace mmrf::testing
