#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mmrf/tensor.hpp"

namespace mmrf {

/// Returns f(x) and writes df/dx into grad.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 50;
  int max_line_search_steps = 20;
  double armijo_c1 = 1e-4;
  double shrink = 0.5;
  /// Stop once the largest gradient component falls to this value.
  double gradient_tolerance = 1e-12;
  /// Pairs with <s, y> at or below this are not stored.
  double curvature_floor = 1e-10;
};

struct LbfgsResult {
  std::vector<double> x;
  double energy = 0.0;
  int iterations = 0;
  int evaluations = 0;
  /// f(x0) followed by f after every accepted step.
  std::vector<double> accepted_energies;
  bool line_search_failed = false;
  bool converged = false;
};

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-loop-recursion L-BFGS with Armijo backtracking. Returns the lowest
/// iterate visited, so f(result) <= f(x0).
LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsOptions& options = {});

using TensorObjective = std::function<double(const Tensor& x, Tensor& grad)>;

/// Tensor-shaped wrapper over the vector solver.
Tensor lbfgs_minimize(const TensorObjective& f, const Tensor& x0, const LbfgsOptions& options = {},
                      LbfgsResult* report = nullptr);

}  // namespace mmrf
