#include "mmrf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mmrf {

namespace {

void check_dims(int height, int width, int channels) {
  if (height < 1 || width < 1 || channels < 1) {
    std::ostringstream msg;
    msg << "tensor dimensions must be positive, got " << height << "x" << width << "x" << channels;
    throw ShapeError(msg.str());
  }
}

}  // namespace

Tensor::Tensor(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Tensor::Tensor(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    std::ostringstream msg;
    msg << "tensor " << shape_string() << " needs " << static_cast<std::size_t>(height) * width * channels
        << " values, got " << data_.size();
    throw ShapeError(msg.str());
  }
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << height_ << "x" << width_ << "x" << channels_;
  return out.str();
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  if (!a.same_shape(b)) {
    throw ShapeError("elementwise: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.height(), a.width(), a.channels());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] - y[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
      break;
  }
  return out;
}

Tensor scaled(const Tensor& t, float factor) {
  Tensor out = t;
  for (float& v : out.data()) v *= factor;
  return out;
}

Tensor resample_bilinear(const Tensor& t, int new_height, int new_width) {
  if (new_height < 1 || new_width < 1) {
    std::ostringstream msg;
    msg << "resample_bilinear: target size must be positive, got " << new_height << "x" << new_width;
    throw ShapeError(msg.str());
  }
  if (new_height == t.height() && new_width == t.width()) return t;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int src_size, int dst_size) {
    std::vector<Tap> out(dst_size);
    const double ratio = static_cast<double>(src_size) / dst_size;
    for (int i = 0; i < dst_size; ++i) {
      double s = (i + 0.5) * ratio - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
      const int lo = static_cast<int>(std::floor(s));
      const int hi = std::min(lo + 1, src_size - 1);
      out[i] = {lo, hi, s - lo};
    }
    return out;
  };
  const auto rows = taps(t.height(), new_height);
  const auto cols = taps(t.width(), new_width);

  const int channels = t.channels();
  Tensor out(new_height, new_width, channels);
  for (int r = 0; r < new_height; ++r) {
    const Tap& ry = rows[r];
    for (int c = 0; c < new_width; ++c) {
      const Tap& cx = cols[c];
      for (int ch = 0; ch < channels; ++ch) {
        const double top = (1.0 - cx.frac) * t(ry.lo, cx.lo, ch) + cx.frac * t(ry.lo, cx.hi, ch);
        const double bottom = (1.0 - cx.frac) * t(ry.hi, cx.lo, ch) + cx.frac * t(ry.hi, cx.hi, ch);
        out(r, c, ch) = static_cast<float>((1.0 - ry.frac) * top + ry.frac * bottom);
      }
    }
  }
  return out;
}

double sum_squares(const Tensor& t) {
  double total = 0.0;
  for (float v : t.data()) total += static_cast<double>(v) * v;
  return total;
}

Tensor slice_channels(const Tensor& t, int begin, int end) {
  if (begin < 0 || end > t.channels() || begin >= end) {
    std::ostringstream msg;
    msg << "slice_channels: range [" << begin << ", " << end << ") invalid for " << t.shape_string();
    throw ShapeError(msg.str());
  }
  Tensor out(t.height(), t.width(), end - begin);
  for (int r = 0; r < t.height(); ++r) {
    for (int c = 0; c < t.width(); ++c) {
      auto src = t.pixel(r, c);
      std::copy(src.begin() + begin, src.begin() + end, out.pixel(r, c).begin());
    }
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (!a.same_spatial(b)) {
    throw ShapeError("concat_channels: spatial mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.height(), a.width(), a.channels() + b.channels());
  for (int r = 0; r < a.height(); ++r) {
    for (int c = 0; c < a.width(); ++c) {
      auto dst = out.pixel(r, c);
      auto pa = a.pixel(r, c);
      auto pb = b.pixel(r, c);
      std::copy(pa.begin(), pa.end(), dst.begin());
      std::copy(pb.begin(), pb.end(), dst.begin() + a.channels());
    }
  }
  return out;
}

Tensor clamped(const Tensor& t, float lo, float hi) {
  Tensor out = t;
  for (float& v : out.data()) v = std::clamp(v, lo, hi);
  return out;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
}

}  // namespace mmrf
