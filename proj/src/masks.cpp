#include "mmrf/masks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace mmrf {

SoftMaskSet::SoftMaskSet(Tensor masks, std::vector<std::string> labels)
    : masks_(std::move(masks)), labels_(std::move(labels)) {
  if (masks_.empty()) throw ShapeError("mask set is empty");
  if (static_cast<int>(labels_.size()) != masks_.channels()) {
    throw ShapeError("mask set has " + std::to_string(masks_.channels()) + " channels but " +
                     std::to_string(labels_.size()) + " labels");
  }
  std::set<std::string, std::less<>> seen;
  for (const std::string& label : labels_) {
    if (label.empty()) throw ShapeError("mask label is empty");
    if (!seen.insert(label).second) throw ShapeError("duplicate mask label '" + label + "'");
  }
  for (float v : masks_.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ShapeError("mask values must lie in [0, 1], found " + std::to_string(v));
    }
  }
}

int SoftMaskSet::find(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return static_cast<int>(i);
  }
  return -1;
}

SoftMaskSet SoftMaskSet::reordered(const std::vector<std::string>& order) const {
  Tensor out(height(), width(), static_cast<int>(order.size()));
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int src = find(order[k]);
    if (src < 0) throw ShapeError("mask set has no label '" + order[k] + "'");
    for (int r = 0; r < height(); ++r)
      for (int c = 0; c < width(); ++c) out(r, c, static_cast<int>(k)) = masks_(r, c, src);
  }
  return SoftMaskSet(std::move(out), order);
}

SoftMaskSet rescale_probability_maps(const Tensor& raw, std::vector<std::string> labels) {
  const int channels = raw.channels();
  if (labels.empty()) {
    for (int k = 0; k < channels; ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "class%02d", k);
      labels.emplace_back(name);
    }
  }
  std::vector<float> lo(channels, 0.0f), hi(channels, 0.0f);
  for (int k = 0; k < channels; ++k) lo[k] = hi[k] = raw(0, 0, k);
  for (int r = 0; r < raw.height(); ++r)
    for (int c = 0; c < raw.width(); ++c)
      for (int k = 0; k < channels; ++k) {
        lo[k] = std::min(lo[k], raw(r, c, k));
        hi[k] = std::max(hi[k], raw(r, c, k));
      }
  Tensor out(raw.height(), raw.width(), channels);
  for (int r = 0; r < raw.height(); ++r)
    for (int c = 0; c < raw.width(); ++c)
      for (int k = 0; k < channels; ++k) {
        if (hi[k] > lo[k]) {
          const double v = (static_cast<double>(raw(r, c, k)) - lo[k]) / (static_cast<double>(hi[k]) - lo[k]);
          out(r, c, k) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
  return SoftMaskSet(std::move(out), std::move(labels));
}

namespace {

double channel_mean(const Tensor& t, int ch) {
  double sum = 0.0;
  for (int r = 0; r < t.height(); ++r)
    for (int c = 0; c < t.width(); ++c) sum += t(r, c, ch);
  return sum / (static_cast<double>(t.height()) * t.width());
}

void require_same_labels(const SoftMaskSet& a, const SoftMaskSet& b) {
  std::set<std::string> sa(a.labels().begin(), a.labels().end());
  std::set<std::string> sb(b.labels().begin(), b.labels().end());
  if (sa == sb) return;
  std::string only_a, only_b;
  for (const auto& l : sa)
    if (!sb.count(l)) only_a += (only_a.empty() ? "" : ", ") + l;
  for (const auto& l : sb)
    if (!sa.count(l)) only_b += (only_b.empty() ? "" : ", ") + l;
  throw ShapeError("mask label sets differ: only in content {" + only_a + "}, only in style {" + only_b + "}");
}

}  // namespace

std::vector<std::pair<std::string, double>> label_scores(const SoftMaskSet& content, const SoftMaskSet& style) {
  require_same_labels(content, style);
  std::vector<std::pair<std::string, double>> scores;
  for (int k = 0; k < content.count(); ++k) {
    const std::string& label = content.labels()[k];
    const double score =
        0.5 * (channel_mean(content.masks(), k) + channel_mean(style.masks(), style.find(label)));
    scores.emplace_back(label, score);
  }
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return scores;
}

std::pair<SoftMaskSet, SoftMaskSet> select_top_k(const SoftMaskSet& content, const SoftMaskSet& style, int k) {
  if (k < 1 || k > content.count()) {
    throw ShapeError("top-k selection needs 1 <= k <= " + std::to_string(content.count()) + ", got " +
                     std::to_string(k));
  }
  const auto scores = label_scores(content, style);
  std::vector<std::string> keep;
  for (int i = 0; i < k; ++i) keep.push_back(scores[i].first);
  return {content.reordered(keep), style.reordered(keep)};
}

YCbCr rgb_to_ycbcr(double r, double g, double b) {
  r *= 255.0;
  g *= 255.0;
  b *= 255.0;
  return {0.299 * r + 0.587 * g + 0.114 * b, 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
          128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b};
}

Tensor detect_skin(const Tensor& rgb, const SkinRule& rule) {
  if (rgb.channels() != 3) throw ShapeError("detect_skin expects an RGB image, got " + rgb.shape_string());
  Tensor out(rgb.height(), rgb.width(), 1);
  for (int r = 0; r < rgb.height(); ++r)
    for (int c = 0; c < rgb.width(); ++c) {
      const YCbCr p = rgb_to_ycbcr(rgb(r, c, 0), rgb(r, c, 1), rgb(r, c, 2));
      out(r, c, 0) = rule.accepts(p) ? 1.0f : 0.0f;
    }
  return out;
}

Tensor intersect_masks(const Tensor& a, const Tensor& b) {
  if (a.channels() != 1 || b.channels() != 1 || !a.same_spatial(b)) {
    throw ShapeError("intersect_masks: need matching single-channel masks, got " + a.shape_string() + " and " +
                     b.shape_string());
  }
  return clamped(mul(a, b), 0.0f, 1.0f);
}

void LandmarkSet::validate(int height, int width) const {
  if (points.size() != kCount) {
    throw ShapeError("landmark set needs " + std::to_string(kCount) + " points, got " +
                     std::to_string(points.size()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point2& p = points[i];
    if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) {
      std::ostringstream msg;
      msg << "landmark " << i << " at (" << p.x << ", " << p.y << ") lies outside the " << width << "x" << height
          << " image";
      throw ShapeError(msg.str());
    }
  }
  for (const auto* group : {&eyes, &nose, &inner_mouth, &outer_mouth}) {
    if (group->empty()) throw ShapeError("landmark region has no index range");
    for (const LandmarkRange& range : *group) {
      if (range.first < 0 || range.last >= kCount || range.first > range.last) {
        throw ShapeError("landmark range " + std::to_string(range.first) + "-" + std::to_string(range.last) +
                         " is invalid");
      }
    }
  }
}

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

void draw_line(Tensor& mask, int x0, int y0, int x1, int y1) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (y0 >= 0 && y0 < mask.height() && x0 >= 0 && x0 < mask.width()) mask(y0, x0, 0) = 1.0f;
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

std::vector<Point2> range_points(const LandmarkSet& set, const LandmarkRange& range) {
  return {set.points.begin() + range.first, set.points.begin() + range.last + 1};
}

Tensor union_of_hulls(const LandmarkSet& set, const std::vector<LandmarkRange>& ranges, int height, int width) {
  Tensor out(height, width, 1);
  for (const LandmarkRange& range : ranges) {
    const Tensor part = rasterize_convex_hull(range_points(set, range), height, width);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(out.data()[i], part.data()[i]);
  }
  return out;
}

int reflect(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

std::vector<Point2> convex_hull(std::vector<Point2> points) {
  std::sort(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;
  std::vector<Point2> hull(2 * points.size());
  std::size_t k = 0;
  for (const Point2& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return hull;
}

Tensor rasterize_convex_hull(const std::vector<Point2>& points, int height, int width) {
  Tensor mask(height, width, 1);
  const std::vector<Point2> hull = convex_hull(points);
  if (hull.empty()) return mask;

  if (hull.size() >= 3) {
    double min_x = hull[0].x, max_x = hull[0].x, min_y = hull[0].y, max_y = hull[0].y;
    for (const Point2& p : hull) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    const int r0 = std::max(0, static_cast<int>(std::ceil(min_y)));
    const int r1 = std::min(height - 1, static_cast<int>(std::floor(max_y)));
    const int c0 = std::max(0, static_cast<int>(std::ceil(min_x)));
    const int c1 = std::min(width - 1, static_cast<int>(std::floor(max_x)));
    constexpr double kEdgeTolerance = 1e-9;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const Point2 p{static_cast<double>(c), static_cast<double>(r)};
        bool inside = true;
        for (std::size_t i = 0; i < hull.size() && inside; ++i) {
          inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= -kEdgeTolerance;
        }
        if (inside) mask(r, c, 0) = 1.0f;
      }
    }
  }
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point2& a = hull[i];
    const Point2& b = hull[(i + 1) % hull.size()];
    draw_line(mask, static_cast<int>(std::lround(a.x)), static_cast<int>(std::lround(a.y)),
              static_cast<int>(std::lround(b.x)), static_cast<int>(std::lround(b.y)));
  }
  return mask;
}

Tensor blur_mask(const Tensor& mask, double radius) {
  if (radius < 0.0) throw ShapeError("blur radius must be non-negative");
  if (radius == 0.0) return mask;
  const double sigma = radius / 2.0;
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> weights(2 * half + 1);
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    weights[i + half] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    total += weights[i + half];
  }
  for (double& w : weights) w /= total;

  const int h = mask.height(), w = mask.width(), channels = mask.channels();
  std::vector<double> rows(mask.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) acc += weights[i + half] * mask(r, reflect(c + i, w), ch);
        rows[mask.index(r, c, ch)] = acc;
      }
  Tensor out(h, w, channels);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) acc += weights[i + half] * rows[mask.index(reflect(r + i, h), c, ch)];
        out(r, c, ch) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  return out;
}

SoftMaskSet blur_masks(const SoftMaskSet& masks, double radius) {
  return SoftMaskSet(blur_mask(masks.masks(), radius), masks.labels());
}

SoftMaskSet facial_part_masks(const LandmarkSet& landmarks, int height, int width, const Tensor& person_mask,
                              const FacialMaskOptions& options) {
  landmarks.validate(height, width);
  if (person_mask.channels() != 1 || person_mask.height() != height || person_mask.width() != width) {
    throw ShapeError("person mask " + person_mask.shape_string() + " does not match image " +
                     std::to_string(height) + "x" + std::to_string(width));
  }

  std::vector<Point2> outline = convex_hull(landmarks.points);
  double top = outline.front().y, bottom = outline.front().y;
  for (const Point2& p : outline) {
    top = std::min(top, p.y);
    bottom = std::max(bottom, p.y);
  }
  const double lift = options.upward_extension * (bottom - top);
  const std::size_t n = outline.size();
  for (std::size_t i = 0; i < n; ++i) outline.push_back({outline[i].x, std::max(0.0, outline[i].y - lift)});
  const Tensor face = intersect_masks(rasterize_convex_hull(outline, height, width), person_mask);

  std::vector<LandmarkRange> mouth = landmarks.outer_mouth;
  mouth.insert(mouth.end(), landmarks.inner_mouth.begin(), landmarks.inner_mouth.end());
  const Tensor parts[] = {face, union_of_hulls(landmarks, landmarks.eyes, height, width),
                          union_of_hulls(landmarks, landmarks.nose, height, width),
                          union_of_hulls(landmarks, mouth, height, width)};

  Tensor stacked(height, width, 4);
  for (int k = 0; k < 4; ++k)
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) stacked(r, c, k) = parts[k](r, c, 0);
  return SoftMaskSet(blur_mask(stacked, options.blur_radius), {"face", "eyes", "nose", "mouth"});
}

Tensor weighted_masks(const SoftMaskSet& masks, int height, int width, float beta) {
  return scaled(resample_bilinear(masks.masks(), height, width), beta);
}

Tensor augment_features(const Tensor& features, const SoftMaskSet& masks, float beta) {
  return concat_channels(features, weighted_masks(masks, features.height(), features.width(), beta));
}

namespace {

const std::map<std::string, std::array<float, 3>, std::less<>>& palette() {
  static const std::map<std::string, std::array<float, 3>, std::less<>> colours{
      {"body", {1, 0, 0}}, {"background", {0, 1, 0}}, {"face", {0, 0, 1}}, {"skin", {0, 0, 1}},
      {"eyes", {0, 1, 1}}, {"nose", {1, 1, 0}},       {"mouth", {1, 0, 1}}};
  return colours;
}

}  // namespace

bool has_composite_colour(std::string_view label) { return palette().count(label) > 0; }

Tensor composite_visualization(const SoftMaskSet& masks) {
  std::vector<std::array<float, 3>> colours;
  for (const std::string& label : masks.labels()) {
    auto it = palette().find(label);
    if (it == palette().end()) throw ShapeError("no composite colour for mask label '" + label + "'");
    colours.push_back(it->second);
  }
  Tensor out(masks.height(), masks.width(), 3);
  for (int r = 0; r < masks.height(); ++r)
    for (int c = 0; c < masks.width(); ++c) {
      for (int k = 0; k < masks.count(); ++k) {
        const float v = masks.masks()(r, c, k);
        for (int ch = 0; ch < 3; ++ch) out(r, c, ch) += v * colours[k][ch];
      }
      for (int ch = 0; ch < 3; ++ch) out(r, c, ch) = std::min(out(r, c, ch), 1.0f);
    }
  return out;
}

}  // namespace mmrf
