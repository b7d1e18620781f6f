#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmrf/tensor.hpp"

namespace mmrf {

enum class LayerKind : std::uint8_t { conv = 0, relu = 1, pool = 2 };
enum class PoolMode : std::uint32_t { max = 0, average = 1 };

/// One stage of a feature network. Conv fields are meaningful for conv
/// layers, window/mode for pool layers; stride is shared.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 0;
  int stride = 1;
  int padding = 0;
  int window = 0;
  PoolMode mode = PoolMode::max;

  static LayerSpec conv(std::string name, int in_channels, int out_channels, int kernel_size);
  static LayerSpec relu(std::string name);
  static LayerSpec pool(std::string name, int window, PoolMode mode = PoolMode::max);

  bool operator==(const LayerSpec&) const = default;
};

/// Kernel in (out, in, ky, kx) order, bias per output channel.
struct ConvWeights {
  std::vector<float> kernel;
  std::vector<float> bias;

  bool operator==(const ConvWeights&) const = default;
};

class NetworkError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Layer name -> post-layer activation.
using FeaturePyramid = std::map<std::string, Tensor, std::less<>>;

/// Immutable convolution / relu / pool stack. Conv layers preserve spatial
/// size (same padding, stride 1); pool layers are non-overlapping and floor
/// the spatial size.
class FeatureNetwork {
 public:
  /// conv_weights holds one entry per conv layer, in layer order.
  FeatureNetwork(std::vector<LayerSpec> layers, std::vector<ConvWeights> conv_weights,
                 std::optional<std::array<float, 3>> input_offsets = std::nullopt);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ConvWeights>& conv_weights() const { return weights_; }
  const std::optional<std::array<float, 3>>& input_offsets() const { return offsets_; }

  bool has_layer(std::string_view name) const;
  std::vector<std::string> layer_names() const;
  std::size_t layer_index(std::string_view name) const;

  /// Spatial size and channel count of the named layer's output for an
  /// input of the given size.
  struct Shape {
    int height, width, channels;
  };
  Shape output_shape(std::string_view name, int height, int width) const;

  FeaturePyramid forward(const Tensor& image, std::span<const std::string> capture) const;

  /// Gradient of E = sum_l <grads[l], x^l> with respect to the input image.
  Tensor backward_to_input(const Tensor& image, const FeaturePyramid& grads) const;

  bool operator==(const FeatureNetwork& other) const {
    return layers_ == other.layers_ && weights_ == other.weights_ && offsets_ == other.offsets_;
  }

 private:
  struct Activations;
  Activations run(const Tensor& image, std::size_t last_layer) const;
  std::string known_names() const;

  std::vector<LayerSpec> layers_;
  std::vector<ConvWeights> weights_;
  std::optional<std::array<float, 3>> offsets_;
  std::vector<int> conv_slot_;
  // Kernels repacked to (out, ky, kx, in) so each output is one dot product
  // against an (ky, kx, in) input window.
  std::vector<std::vector<float>> packed_;
};

/// conv1_1(3->8) relu1_1 pool1 conv2_1(8->16) relu2_1.
std::vector<LayerSpec> toy_layout();

/// VGG-19 conv/pool prefix through relu4_1.
std::vector<LayerSpec> vggish_layout();

/// Toy network with weights drawn from a fixed seed. Each conv starts with
/// centre-tap identity filters for its input channels; the remaining filters
/// are random and paired with their negations, so the following relu keeps
/// both half-spaces of each projection. Biases are zero.
FeatureNetwork make_toy_network(std::uint64_t seed);

/// Uniform random weights and biases for an arbitrary layout.
FeatureNetwork make_random_network(std::vector<LayerSpec> layers, std::uint64_t seed,
                                   float bias_scale = 0.1f);

}  // namespace mmrf
