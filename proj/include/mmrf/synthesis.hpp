#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmrf/features.hpp"
#include "mmrf/lbfgs.hpp"
#include "mmrf/masks.hpp"
#include "mmrf/mrf.hpp"
#include "mmrf/tensor.hpp"

namespace mmrf {

struct SynthesisConfig {
  double alpha_style = 1e-4;
  double alpha_content = 20.0;
  double beta = 20.0;
  int patch_size = 3;
  int stride = 1;
  /// Empty selects the network defaults (see default_style_layers).
  std::vector<std::string> style_layers;
  std::vector<std::string> content_layers;
  int pyramid_levels = 3;
  double level_scale = 0.5;
  int outer_iterations = 10;
  int lbfgs_iterations = 50;
  int lbfgs_memory = 10;
  int line_search_steps = 20;
  std::uint64_t seed = 0;
  std::vector<double> rotations{-0.2617993877991494, 0.0, 0.2617993877991494};
  std::vector<double> scales{0.85, 1.0, 1.15};

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
  bool operator==(const SynthesisConfig&) const = default;
};

/// relu3_1 and relu4_1 when present, otherwise every relu*_1 layer.
std::vector<std::string> default_style_layers(const FeatureNetwork& net);
/// The deepest default style layer.
std::vector<std::string> default_content_layers(const FeatureNetwork& net);

struct StyleLayerContext {
  std::string layer;
  PatchDictionary dictionary;
  /// beta * content masks at this layer's resolution.
  Tensor weighted_masks;
  NNAssignment assignment;
};

struct ContentLayerContext {
  std::string layer;
  Tensor target;
};

/// Everything the energy needs at one pyramid level.
struct LevelContext {
  const FeatureNetwork* net = nullptr;
  std::vector<StyleLayerContext> style;
  std::vector<ContentLayerContext> content;
  double alpha_style = 0.0;
  double alpha_content = 0.0;
  int patch_size = 3;
  int stride = 1;
};

/// Builds dictionaries and content targets for images already at level size.
/// Assignments are left empty until reassign().
LevelContext prepare_level(const FeatureNetwork& net, const Tensor& content, const Tensor& style,
                           const SoftMaskSet& content_masks, const SoftMaskSet& style_masks,
                           const SynthesisConfig& cfg);

/// Recomputes the nearest-neighbour assignment of every style layer at x.
void reassign(LevelContext& ctx, const Tensor& x, MatchMetric metric = MatchMetric::ncc);

struct EnergyBreakdown {
  double total = 0.0;
  double style = 0.0;
  double content = 0.0;
  /// Style energy with the mask part weighted by beta rather than beta
  /// squared. Reported only, never optimized.
  double style_linear_beta = 0.0;
  Tensor grad;
};

/// alpha_style * sum E_s + alpha_content * sum E_c and its image gradient.
EnergyBreakdown total_energy_and_grad(const Tensor& x, const LevelContext& ctx);

struct TraceRow {
  int level = 0;
  int iteration = 0;
  double total = 0.0;
  double style = 0.0;
  double content = 0.0;
  double elapsed_seconds = 0.0;
  double style_linear_beta = 0.0;
};

struct SolveLog {
  int level = 0;
  int iteration = 0;
  std::vector<double> accepted_energies;
  bool line_search_failed = false;
  /// Energy at the solve's start under the previous and the fresh
  /// assignment; absent for the first solve of a level.
  std::optional<double> energy_before_reassign;
  double energy_after_reassign = 0.0;
};

struct LayerAssignment {
  std::string layer;
  int grid_rows = 0;
  int grid_cols = 0;
  NNAssignment assignment;
};

struct SynthesisResult {
  Tensor image;
  std::vector<TraceRow> trace;
  std::vector<SolveLog> solves;
  /// Assignments in effect at the end of the finest level.
  std::vector<LayerAssignment> assignments;
};

using TraceCallback = std::function<void(const TraceRow&)>;

/// Coarse-to-fine synthesis from seeded uniform noise. Levels count down
/// from pyramid_levels - 1 (coarsest) to 0 (content size).
SynthesisResult synthesize(const Tensor& content, const Tensor& style, const SoftMaskSet& content_masks,
                           const SoftMaskSet& style_masks, const FeatureNetwork& net, const SynthesisConfig& cfg,
                           const TraceCallback& on_row = {});

/// Peak signal-to-noise ratio in dB for images in [0, 1].
double psnr(const Tensor& a, const Tensor& b);

}  // namespace mmrf
