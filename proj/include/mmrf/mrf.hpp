#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mmrf/tensor.hpp"

namespace mmrf {

/// Flattened t x t x C windows of a map, in row-major order of their
/// top-left corners. Each patch is stored in (row, column, channel) order.
struct PatchSet {
  int patch_size = 0;
  int channels = 0;
  int stride = 1;
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<float> values;
  std::vector<std::pair<int, int>> positions;

  std::size_t length() const { return static_cast<std::size_t>(patch_size) * patch_size * channels; }
  std::size_t count() const { return positions.size(); }
  std::span<const float> patch(std::size_t i) const { return {values.data() + i * length(), length()}; }
};

/// Valid (unpadded) patches at the given stride.
PatchSet extract_patches(const Tensor& map, int patch_size, int stride);

struct PatchProvenance {
  int row = 0;
  int col = 0;
  int rotation = 0;
  int scale = 0;
};

/// Style patches over (features, beta * masks), each channel-interleaved as
/// produced by extract_patches on the concatenated map. Immutable once built.
class PatchDictionary {
 public:
  PatchDictionary(int patch_size, int feature_channels, int mask_channels, float beta, std::vector<float> entries,
                  std::vector<PatchProvenance> provenance);

  int patch_size() const { return patch_size_; }
  int feature_channels() const { return feature_channels_; }
  int mask_channels() const { return mask_channels_; }
  int channels() const { return feature_channels_ + mask_channels_; }
  float beta() const { return beta_; }
  std::size_t length() const { return length_; }
  std::size_t size() const { return provenance_.size(); }

  std::span<const float> entry(std::size_t j) const { return {entries_.data() + j * length_, length_}; }
  /// Unit-length copy of entry j (all zeros for a zero entry).
  std::span<const float> unit(std::size_t j) const { return {units_.data() + j * length_, length_}; }
  const float* units() const { return units_.data(); }
  float norm(std::size_t j) const { return norms_[j]; }
  const PatchProvenance& provenance(std::size_t j) const { return provenance_[j]; }

  /// Recomputes every norm and compares with the stored value.
  bool norms_consistent(double relative_tolerance = 1e-5) const;

 private:
  int patch_size_;
  int feature_channels_;
  int mask_channels_;
  float beta_;
  std::size_t length_;
  std::vector<float> entries_;
  std::vector<float> units_;
  std::vector<float> norms_;
  std::vector<PatchProvenance> provenance_;
};

/// Map rotated by `angle` radians about its centre after resampling by
/// `scale`. The canvas is the rotated extent; `support` marks pixels whose
/// sample lies inside the source.
struct TransformedMap {
  Tensor map;
  std::vector<std::uint8_t> support;
};
TransformedMap transform_map(const Tensor& map, double angle, double scale);

/// Dictionary over every (rotation, scale) variant of (features, beta * masks).
/// Patches touching samples outside the transformed source are dropped.
PatchDictionary build_dictionary(const Tensor& style_features, const Tensor& style_masks, float beta, int patch_size,
                                 std::span<const double> rotations, std::span<const double> scales);

enum class MatchMetric { ncc, squared_distance };

struct NNAssignment {
  std::vector<int> index;
  /// NCC of the pair, or squared distance under MatchMetric::squared_distance.
  std::vector<float> score;
};

/// Nearest dictionary entry for each query. Under NCC the highest
/// normalized cross-correlation wins (zero vectors score 0); ties go to the
/// smallest entry index. Under squared_distance the smallest distance wins.
NNAssignment find_nn(const PatchSet& queries, const PatchDictionary& dict, MatchMetric metric = MatchMetric::ncc);

/// Query patches of the synthesized image: (features, weighted masks).
PatchSet query_patches(const Tensor& features, const Tensor& weighted_masks, int patch_size, int stride);

struct StyleEnergy {
  double feature_term = 0.0;
  /// Mask part of the concatenated distance (carries beta squared).
  double mask_term = 0.0;
  float beta = 0.0f;
  /// d(feature_term + mask_term) / d(features).
  Tensor grad;

  double total() const { return feature_term + mask_term; }
  /// Feature term plus the mask distance weighted linearly by beta.
  double linear_beta_form() const { return feature_term + (beta > 0.0f ? mask_term / beta : 0.0); }
};

/// Patch energy for a fixed assignment. Masks are constants, so only
/// feature channels receive gradient.
StyleEnergy style_energy_and_grad(const Tensor& features, const Tensor& weighted_masks, const NNAssignment& assignment,
                                  const PatchDictionary& dict, int patch_size, int stride);

struct ContentEnergy {
  double energy = 0.0;
  Tensor grad;
};

ContentEnergy content_energy_and_grad(const Tensor& features, const Tensor& target);

}  // namespace mmrf
