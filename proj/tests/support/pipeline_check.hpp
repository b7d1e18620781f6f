#pragma once

#include <cstdint>

namespace mmrf::testing {

struct GradientCheck {
  double worst_relative = 0.0;
  int directions = 0;
  /// Directions whose difference step changed a relu sign or pool winner.
  int kink_crossings = 0;
};

/// Builds a random toy-network level (content size x size, `masks` soft mask
/// channels, style layer relu1_1, content layer relu2_1), fixes the
/// assignment at a random image and compares the analytic gradient of the
/// total energy with central differences of the double-precision oracle.
GradientCheck check_pipeline_gradient(std::uint64_t seed, int size, int masks, int directions, double eps);

}  // namespace mmrf::testing
