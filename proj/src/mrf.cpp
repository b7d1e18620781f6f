#include "mmrf/mrf.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <sstream>

#include "mmrf/kernels.hpp"

namespace mmrf {

PatchSet extract_patches(const Tensor& map, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1) throw ShapeError("patch size and stride must be >= 1");
  if (patch_size > map.height() || patch_size > map.width()) {
    std::ostringstream msg;
    msg << "patch size " << patch_size << " exceeds map " << map.shape_string();
    throw ShapeError(msg.str());
  }
  PatchSet set;
  set.patch_size = patch_size;
  set.channels = map.channels();
  set.stride = stride;
  set.grid_rows = (map.height() - patch_size) / stride + 1;
  set.grid_cols = (map.width() - patch_size) / stride + 1;
  const std::size_t row_span = static_cast<std::size_t>(patch_size) * map.channels();
  set.values.resize(static_cast<std::size_t>(set.grid_rows) * set.grid_cols * set.length());
  float* dst = set.values.data();
  for (int gr = 0; gr < set.grid_rows; ++gr) {
    for (int gc = 0; gc < set.grid_cols; ++gc) {
      const int r0 = gr * stride, c0 = gc * stride;
      set.positions.emplace_back(r0, c0);
      for (int dy = 0; dy < patch_size; ++dy) {
        const float* src = map.pixel(r0 + dy, c0).data();
        dst = std::copy(src, src + row_span, dst);
      }
    }
  }
  return set;
}

namespace {

double norm_of(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * x;
  return std::sqrt(sum);
}

// Double-precision NCC with sequential accumulation, used to settle
// candidates whose single-precision scores are within rounding of the best.
double ncc_exact(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += static_cast<double>(a[k]) * b[k];
    aa += static_cast<double>(a[k]) * a[k];
    bb += static_cast<double>(b[k]) * b[k];
  }
  const double denom = std::sqrt(aa) * std::sqrt(bb);
  return denom > 0.0 ? dot / denom : 0.0;
}

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

PatchDictionary::PatchDictionary(int patch_size, int feature_channels, int mask_channels, float beta,
                                 std::vector<float> entries, std::vector<PatchProvenance> provenance)
    : patch_size_(patch_size),
      feature_channels_(feature_channels),
      mask_channels_(mask_channels),
      beta_(beta),
      length_(static_cast<std::size_t>(patch_size) * patch_size * (feature_channels + mask_channels)),
      entries_(std::move(entries)),
      provenance_(std::move(provenance)) {
  if (provenance_.empty()) throw ShapeError("patch dictionary is empty");
  if (entries_.size() != provenance_.size() * length_) {
    throw ShapeError("patch dictionary payload does not match entry count and length");
  }
  units_.resize(entries_.size());
  norms_.resize(provenance_.size());
  for (std::size_t j = 0; j < provenance_.size(); ++j) {
    const double n = norm_of(entry(j));
    norms_[j] = static_cast<float>(n);
    if (n > 0.0) {
      for (std::size_t k = 0; k < length_; ++k) units_[j * length_ + k] = static_cast<float>(entries_[j * length_ + k] / n);
    }
  }
}

bool PatchDictionary::norms_consistent(double relative_tolerance) const {
  for (std::size_t j = 0; j < size(); ++j) {
    const double n = norm_of(entry(j));
    if (std::abs(n - norms_[j]) > relative_tolerance * std::max(n, 1e-30) && !(n == 0.0 && norms_[j] == 0.0f)) {
      return false;
    }
  }
  return true;
}

TransformedMap transform_map(const Tensor& map, double angle, double scale) {
  if (!(scale > 0.0)) throw ShapeError("patch scale must be positive");
  Tensor source = map;
  if (scale != 1.0) {
    const int h = std::max(1, static_cast<int>(std::lround(map.height() * scale)));
    const int w = std::max(1, static_cast<int>(std::lround(map.width() * scale)));
    source = resample_bilinear(map, h, w);
  }
  if (angle == 0.0) {
    return {source, std::vector<std::uint8_t>(static_cast<std::size_t>(source.height()) * source.width(), 1)};
  }

  const double cs = snap(std::cos(angle));
  const double sn = snap(std::sin(angle));
  const int h = source.height(), w = source.width();
  const int out_h = static_cast<int>(std::ceil(snap((h - 1) * std::abs(cs) + (w - 1) * std::abs(sn)))) + 1;
  const int out_w = static_cast<int>(std::ceil(snap((h - 1) * std::abs(sn) + (w - 1) * std::abs(cs)))) + 1;
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double oy = (out_h - 1) / 2.0, ox = (out_w - 1) / 2.0;

  TransformedMap result{Tensor(out_h, out_w, source.channels()),
                        std::vector<std::uint8_t>(static_cast<std::size_t>(out_h) * out_w, 0)};
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const double dy = r - oy, dx = c - ox;
      const double sy = snap(cy + cs * dy + sn * dx);
      const double sx = snap(cx - sn * dy + cs * dx);
      if (sy < 0.0 || sy > h - 1 || sx < 0.0 || sx > w - 1) continue;
      result.support[static_cast<std::size_t>(r) * out_w + c] = 1;
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (int ch = 0; ch < source.channels(); ++ch) {
        const double top = (1.0 - fx) * source(y0, x0, ch) + fx * source(y0, x1, ch);
        const double bottom = (1.0 - fx) * source(y1, x0, ch) + fx * source(y1, x1, ch);
        result.map(r, c, ch) = static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return result;
}

PatchDictionary build_dictionary(const Tensor& style_features, const Tensor& style_masks, float beta, int patch_size,
                                 std::span<const double> rotations, std::span<const double> scales) {
  if (!style_features.same_spatial(style_masks)) {
    throw ShapeError("style features " + style_features.shape_string() + " and masks " + style_masks.shape_string() +
                     " are not aligned");
  }
  if (rotations.empty() || scales.empty()) throw ShapeError("need at least one rotation and one scale");
  const Tensor augmented = concat_channels(style_features, scaled(style_masks, beta));

  std::vector<float> entries;
  std::vector<PatchProvenance> provenance;
  for (std::size_t ri = 0; ri < rotations.size(); ++ri) {
    for (std::size_t si = 0; si < scales.size(); ++si) {
      const TransformedMap variant = transform_map(augmented, rotations[ri], scales[si]);
      if (variant.map.height() < patch_size || variant.map.width() < patch_size) continue;
      const PatchSet patches = extract_patches(variant.map, patch_size, 1);
      const int w = variant.map.width();
      for (std::size_t i = 0; i < patches.count(); ++i) {
        const auto [r0, c0] = patches.positions[i];
        bool inside = true;
        for (int dy = 0; dy < patch_size && inside; ++dy)
          for (int dx = 0; dx < patch_size && inside; ++dx)
            inside = variant.support[static_cast<std::size_t>(r0 + dy) * w + c0 + dx] != 0;
        if (!inside) continue;
        auto p = patches.patch(i);
        entries.insert(entries.end(), p.begin(), p.end());
        provenance.push_back({r0, c0, static_cast<int>(ri), static_cast<int>(si)});
      }
    }
  }
  if (provenance.empty()) {
    throw ShapeError("no style patches survive the rotation/scale filtering; use a larger style image");
  }
  return PatchDictionary(patch_size, style_features.channels(), style_masks.channels(), beta, std::move(entries),
                         std::move(provenance));
}

PatchSet query_patches(const Tensor& features, const Tensor& weighted_masks, int patch_size, int stride) {
  return extract_patches(concat_channels(features, weighted_masks), patch_size, stride);
}

namespace {

NNAssignment find_nn_distance(const PatchSet& queries, const PatchDictionary& dict) {
  NNAssignment out;
  out.index.resize(queries.count());
  out.score.resize(queries.count());
  for (std::size_t i = 0; i < queries.count(); ++i) {
    auto q = queries.patch(i);
    double best = INFINITY;
    int best_j = 0;
    for (std::size_t j = 0; j < dict.size(); ++j) {
      auto d = dict.entry(j);
      double dist = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) {
        const double diff = static_cast<double>(q[k]) - d[k];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_j = static_cast<int>(j);
      }
    }
    out.index[i] = best_j;
    out.score[i] = static_cast<float>(best);
  }
  return out;
}

}  // namespace

NNAssignment find_nn(const PatchSet& queries, const PatchDictionary& dict, MatchMetric metric) {
  if (queries.length() != dict.length()) {
    std::ostringstream msg;
    msg << "query patches have length " << queries.length() << ", dictionary entries " << dict.length();
    throw ShapeError(msg.str());
  }
  if (metric == MatchMetric::squared_distance) return find_nn_distance(queries, dict);

  const auto& kern = kernels::active();
  const std::size_t n = dict.length();
  // Rounding bound on a single-precision dot of two unit vectors.
  const float slack = static_cast<float>((n + 8) * FLT_EPSILON);
  constexpr std::size_t kQueryBlock = 32;
  constexpr std::size_t kEntryBlock = 256;

  NNAssignment out;
  out.index.resize(queries.count());
  out.score.resize(queries.count());

  std::vector<float> units(kQueryBlock * n);
  std::vector<float> scores(kEntryBlock);
  std::vector<float> best(kQueryBlock);
  std::vector<std::vector<std::pair<float, int>>> candidates(kQueryBlock);

  for (std::size_t q0 = 0; q0 < queries.count(); q0 += kQueryBlock) {
    const std::size_t qn = std::min(kQueryBlock, queries.count() - q0);
    for (std::size_t b = 0; b < qn; ++b) {
      auto q = queries.patch(q0 + b);
      const double len = norm_of(q);
      for (std::size_t k = 0; k < n; ++k) units[b * n + k] = len > 0.0 ? static_cast<float>(q[k] / len) : 0.0f;
      best[b] = -INFINITY;
      candidates[b].clear();
    }
    for (std::size_t e0 = 0; e0 < dict.size(); e0 += kEntryBlock) {
      const std::size_t en = std::min(kEntryBlock, dict.size() - e0);
      const float* rows = dict.units() + e0 * n;
      for (std::size_t b = 0; b < qn; ++b) {
        kern.dot_rows(units.data() + b * n, rows, n, en, n, scores.data());
        auto& cand = candidates[b];
        for (std::size_t j = 0; j < en; ++j) {
          const float s = scores[j];
          if (s > best[b]) {
            best[b] = s;
            std::erase_if(cand, [&](const auto& c) { return c.first < s - slack; });
          }
          if (s >= best[b] - slack) cand.emplace_back(s, static_cast<int>(e0 + j));
        }
      }
    }
    for (std::size_t b = 0; b < qn; ++b) {
      auto q = queries.patch(q0 + b);
      double top = -INFINITY;
      int top_j = 0;
      for (const auto& [s, j] : candidates[b]) {
        if (s < best[b] - slack) continue;
        const double exact = ncc_exact(q, dict.entry(j));
        if (exact > top || (exact == top && j < top_j)) {
          top = exact;
          top_j = j;
        }
      }
      out.index[q0 + b] = top_j;
      out.score[q0 + b] = static_cast<float>(top);
    }
  }
  return out;
}

StyleEnergy style_energy_and_grad(const Tensor& features, const Tensor& weighted_masks, const NNAssignment& assignment,
                                  const PatchDictionary& dict, int patch_size, int stride) {
  if (features.channels() != dict.feature_channels() || weighted_masks.channels() != dict.mask_channels()) {
    std::ostringstream msg;
    msg << "style energy: features " << features.shape_string() << " / masks " << weighted_masks.shape_string()
        << " do not match dictionary channels " << dict.feature_channels() << "+" << dict.mask_channels();
    throw ShapeError(msg.str());
  }
  const PatchSet queries = query_patches(features, weighted_masks, patch_size, stride);
  if (assignment.index.size() != queries.count()) {
    throw ShapeError("assignment covers " + std::to_string(assignment.index.size()) + " patches, expected " +
                     std::to_string(queries.count()));
  }
  StyleEnergy result;
  result.beta = dict.beta();
  result.grad = Tensor(features.height(), features.width(), features.channels());
  const int channels = dict.channels();
  const int n_feat = dict.feature_channels();
  for (std::size_t i = 0; i < queries.count(); ++i) {
    auto q = queries.patch(i);
    auto d = dict.entry(static_cast<std::size_t>(assignment.index[i]));
    const auto [r0, c0] = queries.positions[i];
    std::size_t k = 0;
    for (int dy = 0; dy < patch_size; ++dy) {
      for (int dx = 0; dx < patch_size; ++dx) {
        float* g = result.grad.pixel(r0 + dy, c0 + dx).data();
        for (int ch = 0; ch < channels; ++ch, ++k) {
          const double diff = static_cast<double>(q[k]) - d[k];
          if (ch < n_feat) {
            result.feature_term += diff * diff;
            g[ch] += static_cast<float>(2.0 * diff);
          } else {
            result.mask_term += diff * diff;
          }
        }
      }
    }
  }
  return result;
}

ContentEnergy content_energy_and_grad(const Tensor& features, const Tensor& target) {
  if (!features.same_shape(target)) {
    throw ShapeError("content energy: shape mismatch " + features.shape_string() + " vs " + target.shape_string());
  }
  ContentEnergy result;
  result.grad = Tensor(features.height(), features.width(), features.channels());
  auto x = features.data();
  auto c = target.data();
  auto g = result.grad.data();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = static_cast<double>(x[k]) - c[k];
    result.energy += diff * diff;
    g[k] = static_cast<float>(2.0 * diff);
  }
  return result;
}

}  // namespace mmrf
