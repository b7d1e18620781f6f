#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmrf/tensor.hpp"

namespace mmrf {

/// K aligned per-pixel probability channels with one label each.
class SoftMaskSet {
 public:
  SoftMaskSet(Tensor masks, std::vector<std::string> labels);

  const Tensor& masks() const { return masks_; }
  const std::vector<std::string>& labels() const { return labels_; }
  int count() const { return masks_.channels(); }
  int height() const { return masks_.height(); }
  int width() const { return masks_.width(); }

  /// Channel index of label, or -1.
  int find(std::string_view label) const;
  Tensor channel(int index) const { return slice_channels(masks_, index, index + 1); }

  /// Same labels with channels permuted to match `order`.
  SoftMaskSet reordered(const std::vector<std::string>& order) const;

 private:
  Tensor masks_;
  std::vector<std::string> labels_;
};

/// Per-channel min-max rescale to [0, 1]; constant channels become zero.
/// Labels default to class00, class01, ...
SoftMaskSet rescale_probability_maps(const Tensor& raw, std::vector<std::string> labels = {});

/// Mean probability of each label over both images (equal weight per image).
std::vector<std::pair<std::string, double>> label_scores(const SoftMaskSet& content, const SoftMaskSet& style);

/// Keeps the k labels with the highest joint mean probability, highest first,
/// ties broken by label. Both results carry the same label order.
std::pair<SoftMaskSet, SoftMaskSet> select_top_k(const SoftMaskSet& content, const SoftMaskSet& style, int k);

struct YCbCr {
  double y, cb, cr;
};

/// BT.601 full-range conversion; inputs in [0, 1], outputs on the 0..255 scale.
YCbCr rgb_to_ycbcr(double r, double g, double b);

struct SkinRule {
  double min_luma = 80.0;
  double cb_low = 77.0;
  double cb_high = 127.0;
  double cr_low = 133.0;
  double cr_high = 173.0;

  bool accepts(const YCbCr& p) const {
    return p.y > min_luma && p.cb >= cb_low && p.cb <= cb_high && p.cr >= cr_low && p.cr <= cr_high;
  }
};

/// Binary single-channel skin map of an RGB image in [0, 1].
Tensor detect_skin(const Tensor& rgb, const SkinRule& rule = {});

/// Soft intersection (elementwise product) of two single-channel masks.
Tensor intersect_masks(const Tensor& a, const Tensor& b);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Inclusive landmark index range.
struct LandmarkRange {
  int first = 0;
  int last = 0;
  bool operator==(const LandmarkRange&) const = default;
};

/// 68 facial landmarks and the index ranges forming each facial part.
/// A part with several ranges is the union of one hull per range.
struct LandmarkSet {
  static constexpr int kCount = 68;

  std::vector<Point2> points;
  std::vector<LandmarkRange> eyes{{36, 41}, {42, 47}};
  std::vector<LandmarkRange> nose{{27, 35}};
  std::vector<LandmarkRange> inner_mouth{{60, 67}};
  std::vector<LandmarkRange> outer_mouth{{48, 59}};

  /// Throws ShapeError unless there are 68 points inside a height x width
  /// image and every range is valid.
  void validate(int height, int width) const;

  bool operator==(const LandmarkSet&) const = default;
};

/// Convex hull (monotone chain, positive-turn order), collinear points dropped.
std::vector<Point2> convex_hull(std::vector<Point2> points);

/// Binary mask of the filled convex hull of `points`. Pixel centres sit at
/// integer coordinates; hull edges are always drawn with Bresenham lines so
/// degenerate hulls still cover a one-pixel-wide path.
Tensor rasterize_convex_hull(const std::vector<Point2>& points, int height, int width);

/// Gaussian blur with sigma = radius / 2, truncated at 3 sigma, renormalized,
/// symmetric reflection at borders. Radius 0 returns the input.
Tensor blur_mask(const Tensor& mask, double radius);

SoftMaskSet blur_masks(const SoftMaskSet& masks, double radius);

struct FacialMaskOptions {
  double upward_extension = 0.5;
  double blur_radius = 5.0;
};

/// Channels face, eyes, nose, mouth rasterized from landmark hulls. The face
/// hull is stretched upward by a fraction of its height and intersected with
/// person_mask; all channels are blurred.
SoftMaskSet facial_part_masks(const LandmarkSet& landmarks, int height, int width, const Tensor& person_mask,
                              const FacialMaskOptions& options = {});

/// beta * masks resampled to height x width.
Tensor weighted_masks(const SoftMaskSet& masks, int height, int width, float beta);

/// (features, beta * masks) with masks resampled to the features' size.
Tensor augment_features(const Tensor& features, const SoftMaskSet& masks, float beta);

/// RGB rendering: body red, background green, face/skin blue, eyes cyan,
/// nose yellow, mouth magenta; clamped to [0, 1].
Tensor composite_visualization(const SoftMaskSet& masks);

/// True when `label` has a colour in composite_visualization.
bool has_composite_colour(std::string_view label);

}  // namespace mmrf
