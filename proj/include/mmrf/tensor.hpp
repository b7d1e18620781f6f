#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmrf {

/// Raised when operands disagree in shape or an argument is out of range.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense height x width x channels array of 32-bit floats, stored row-major
/// in (row, column, channel) order.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int height, int width, int channels, float fill = 0.0f);
  Tensor(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }
  float& operator()(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  float operator()(int row, int col, int ch) const { return data_[index(row, col, ch)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<float> pixel(int row, int col) {
    return {data_.data() + index(row, col, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const float> pixel(int row, int col) const {
    return {data_.data() + index(row, col, 0), static_cast<std::size_t>(channels_)};
  }

  bool same_shape(const Tensor& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_spatial(const Tensor& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  std::string shape_string() const;

  bool operator==(const Tensor& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

enum class ElementwiseOp { add, sub, mul };

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::mul); }

Tensor scaled(const Tensor& t, float factor);

/// Bilinear resampling with half-pixel centres (align-corners = false).
/// Sample coordinates are clamped to the source extent.
Tensor resample_bilinear(const Tensor& t, int new_height, int new_width);

/// Sum of squared entries, accumulated in double in storage order.
double sum_squares(const Tensor& t);

/// Channels [begin, end) of t.
Tensor slice_channels(const Tensor& t, int begin, int end);

/// Channel-wise concatenation of two spatially aligned tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor clamped(const Tensor& t, float lo, float hi);

bool all_finite(const Tensor& t);

}  // namespace mmrf
