#include "mmrf/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mmrf/kernels.hpp"
#include "mmrf/random.hpp"

namespace mmrf {

LayerSpec LayerSpec::conv(std::string name, int in_channels, int out_channels, int kernel_size) {
  LayerSpec spec;
  spec.kind = LayerKind::conv;
  spec.name = std::move(name);
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.kernel_size = kernel_size;
  spec.stride = 1;
  spec.padding = (kernel_size - 1) / 2;
  return spec;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec spec;
  spec.kind = LayerKind::relu;
  spec.name = std::move(name);
  return spec;
}

LayerSpec LayerSpec::pool(std::string name, int window, PoolMode mode) {
  LayerSpec spec;
  spec.kind = LayerKind::pool;
  spec.name = std::move(name);
  spec.window = window;
  spec.stride = window;
  spec.mode = mode;
  return spec;
}

FeatureNetwork::FeatureNetwork(std::vector<LayerSpec> layers, std::vector<ConvWeights> conv_weights,
                               std::optional<std::array<float, 3>> input_offsets)
    : layers_(std::move(layers)), weights_(std::move(conv_weights)), offsets_(input_offsets) {
  if (layers_.empty()) throw NetworkError("network has no layers");
  std::set<std::string, std::less<>> names;
  int channels = 3;
  std::size_t conv_count = 0;
  for (const LayerSpec& layer : layers_) {
    if (layer.name.empty()) throw NetworkError("layer with empty name");
    if (!names.insert(layer.name).second) throw NetworkError("duplicate layer name '" + layer.name + "'");
    std::ostringstream msg;
    msg << "layer '" << layer.name << "': ";
    switch (layer.kind) {
      case LayerKind::conv: {
        if (layer.kernel_size < 1 || layer.kernel_size % 2 == 0) {
          msg << "kernel size " << layer.kernel_size << " must be odd and >= 1";
          throw NetworkError(msg.str());
        }
        if (layer.padding != (layer.kernel_size - 1) / 2) {
          msg << "padding " << layer.padding << " must be " << (layer.kernel_size - 1) / 2;
          throw NetworkError(msg.str());
        }
        if (layer.stride != 1) {
          msg << "conv stride " << layer.stride << " unsupported (must be 1)";
          throw NetworkError(msg.str());
        }
        if (layer.in_channels != channels || layer.out_channels < 1) {
          msg << "expects " << layer.in_channels << " input channels, previous layer gives " << channels;
          throw NetworkError(msg.str());
        }
        if (conv_count >= weights_.size()) {
          msg << "missing weights";
          throw NetworkError(msg.str());
        }
        const ConvWeights& w = weights_[conv_count];
        const std::size_t expected = static_cast<std::size_t>(layer.out_channels) * layer.in_channels *
                                     layer.kernel_size * layer.kernel_size;
        if (w.kernel.size() != expected || w.bias.size() != static_cast<std::size_t>(layer.out_channels)) {
          msg << "weights have " << w.kernel.size() << " kernel / " << w.bias.size() << " bias values, expected "
              << expected << " / " << layer.out_channels;
          throw NetworkError(msg.str());
        }
        channels = layer.out_channels;
        ++conv_count;
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::pool:
        if (layer.window < 1 || layer.stride != layer.window) {
          msg << "pool window " << layer.window << " and stride " << layer.stride << " must be equal and >= 1";
          throw NetworkError(msg.str());
        }
        if (layer.mode != PoolMode::max && layer.mode != PoolMode::average) {
          msg << "unknown pool mode";
          throw NetworkError(msg.str());
        }
        break;
      default:
        msg << "unknown layer kind";
        throw NetworkError(msg.str());
    }
  }
  if (conv_count != weights_.size()) {
    throw NetworkError("network has " + std::to_string(conv_count) + " conv layers but " +
                       std::to_string(weights_.size()) + " weight sets");
  }

  conv_slot_.assign(layers_.size(), -1);
  int slot = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& layer = layers_[i];
    if (layer.kind != LayerKind::conv) continue;
    conv_slot_[i] = slot;
    const ConvWeights& w = weights_[slot];
    const int k = layer.kernel_size;
    const int in = layer.in_channels;
    std::vector<float> packed(w.kernel.size());
    for (int o = 0; o < layer.out_channels; ++o)
      for (int c = 0; c < in; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            packed[((static_cast<std::size_t>(o) * k + ky) * k + kx) * in + c] =
                w.kernel[((static_cast<std::size_t>(o) * in + c) * k + ky) * k + kx];
    packed_.push_back(std::move(packed));
    ++slot;
  }
}

bool FeatureNetwork::has_layer(std::string_view name) const {
  return std::any_of(layers_.begin(), layers_.end(), [&](const LayerSpec& l) { return l.name == name; });
}

std::vector<std::string> FeatureNetwork::layer_names() const {
  std::vector<std::string> names;
  for (const LayerSpec& l : layers_) names.push_back(l.name);
  return names;
}

std::string FeatureNetwork::known_names() const {
  std::string out;
  for (const LayerSpec& l : layers_) {
    if (!out.empty()) out += ", ";
    out += l.name;
  }
  return out;
}

std::size_t FeatureNetwork::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  throw NetworkError("unknown layer '" + std::string(name) + "' (valid: " + known_names() + ")");
}

FeatureNetwork::Shape FeatureNetwork::output_shape(std::string_view name, int height, int width) const {
  const std::size_t last = layer_index(name);
  Shape shape{height, width, 3};
  for (std::size_t i = 0; i <= last; ++i) {
    const LayerSpec& layer = layers_[i];
    if (layer.kind == LayerKind::conv) shape.channels = layer.out_channels;
    if (layer.kind == LayerKind::pool) {
      shape.height /= layer.window;
      shape.width /= layer.window;
    }
  }
  return shape;
}

struct FeatureNetwork::Activations {
  // outputs[i] is the output of layer i; input is the offset-adjusted image.
  Tensor input;
  std::vector<Tensor> outputs;
  // Flat input index of the max for each pool output element.
  std::vector<std::vector<std::size_t>> argmax;
};

namespace {

// Gathers the k x k x C zero-padded window around (row, col) into out.
void gather_window(const Tensor& in, int row, int col, int k, int pad, float* out) {
  const int channels = in.channels();
  for (int ky = 0; ky < k; ++ky) {
    const int y = row + ky - pad;
    for (int kx = 0; kx < k; ++kx) {
      const int x = col + kx - pad;
      float* dst = out + (static_cast<std::size_t>(ky) * k + kx) * channels;
      if (y < 0 || y >= in.height() || x < 0 || x >= in.width()) {
        std::fill(dst, dst + channels, 0.0f);
      } else {
        auto src = in.pixel(y, x);
        std::copy(src.begin(), src.end(), dst);
      }
    }
  }
}

Tensor conv_forward(const Tensor& in, const LayerSpec& layer, const std::vector<float>& packed,
                    const std::vector<float>& bias) {
  const auto& kern = kernels::active();
  const int k = layer.kernel_size;
  const std::size_t window = static_cast<std::size_t>(k) * k * in.channels();
  Tensor out(in.height(), in.width(), layer.out_channels);
  std::vector<float> buffer(window);
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      gather_window(in, r, c, k, layer.padding, buffer.data());
      float* dst = out.pixel(r, c).data();
      kern.dot_rows(buffer.data(), packed.data(), window, layer.out_channels, window, dst);
      for (int o = 0; o < layer.out_channels; ++o) dst[o] += bias[o];
    }
  }
  return out;
}

Tensor conv_backward(const Tensor& grad_out, const LayerSpec& layer, const std::vector<float>& packed) {
  const auto& kern = kernels::active();
  const int k = layer.kernel_size;
  const int in_ch = layer.in_channels;
  const std::size_t window = static_cast<std::size_t>(k) * k * in_ch;
  Tensor grad_in(grad_out.height(), grad_out.width(), in_ch);
  std::vector<float> buffer(window);
  for (int r = 0; r < grad_out.height(); ++r) {
    for (int c = 0; c < grad_out.width(); ++c) {
      auto g = grad_out.pixel(r, c);
      std::fill(buffer.begin(), buffer.end(), 0.0f);
      for (int o = 0; o < layer.out_channels; ++o) {
        if (g[o] != 0.0f) kern.axpy(g[o], packed.data() + o * window, buffer.data(), window);
      }
      for (int ky = 0; ky < k; ++ky) {
        const int y = r + ky - layer.padding;
        if (y < 0 || y >= grad_in.height()) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int x = c + kx - layer.padding;
          if (x < 0 || x >= grad_in.width()) continue;
          auto dst = grad_in.pixel(y, x);
          const float* src = buffer.data() + (static_cast<std::size_t>(ky) * k + kx) * in_ch;
          for (int ch = 0; ch < in_ch; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
  return grad_in;
}

Tensor pool_forward(const Tensor& in, const LayerSpec& layer, std::vector<std::size_t>* argmax) {
  const int w = layer.window;
  const int out_h = in.height() / w;
  const int out_w = in.width() / w;
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("pool layer '" + layer.name + "' receives " + in.shape_string() +
                     ", smaller than its window " + std::to_string(w));
  }
  Tensor out(out_h, out_w, in.channels());
  if (argmax) argmax->assign(out.size(), 0);
  const float inv_area = 1.0f / static_cast<float>(w * w);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      for (int ch = 0; ch < in.channels(); ++ch) {
        if (layer.mode == PoolMode::max) {
          std::size_t best_index = in.index(r * w, c * w, ch);
          float best = in.data()[best_index];
          for (int dy = 0; dy < w; ++dy) {
            for (int dx = 0; dx < w; ++dx) {
              const std::size_t idx = in.index(r * w + dy, c * w + dx, ch);
              // strict comparison keeps the first maximum in scan order
              if (in.data()[idx] > best) {
                best = in.data()[idx];
                best_index = idx;
              }
            }
          }
          out(r, c, ch) = best;
          if (argmax) (*argmax)[out.index(r, c, ch)] = best_index;
        } else {
          float sum = 0.0f;
          for (int dy = 0; dy < w; ++dy)
            for (int dx = 0; dx < w; ++dx) sum += in(r * w + dy, c * w + dx, ch);
          out(r, c, ch) = sum * inv_area;
        }
      }
    }
  }
  return out;
}

}  // namespace

FeatureNetwork::Activations FeatureNetwork::run(const Tensor& image, std::size_t last_layer) const {
  if (image.channels() != 3) {
    throw ShapeError("feature network expects a 3-channel image, got " + image.shape_string());
  }
  Activations acts;
  acts.input = image;
  if (offsets_) {
    for (int r = 0; r < image.height(); ++r)
      for (int c = 0; c < image.width(); ++c)
        for (int ch = 0; ch < 3; ++ch) acts.input(r, c, ch) -= (*offsets_)[ch];
  }
  acts.outputs.reserve(last_layer + 1);
  acts.argmax.resize(last_layer + 1);
  for (std::size_t i = 0; i <= last_layer; ++i) {
    const LayerSpec& layer = layers_[i];
    const Tensor& in = i == 0 ? acts.input : acts.outputs.back();
    switch (layer.kind) {
      case LayerKind::conv:
        acts.outputs.push_back(conv_forward(in, layer, packed_[conv_slot_[i]], weights_[conv_slot_[i]].bias));
        break;
      case LayerKind::relu: {
        Tensor out = in;
        for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
        acts.outputs.push_back(std::move(out));
        break;
      }
      case LayerKind::pool:
        acts.outputs.push_back(
            pool_forward(in, layer, layer.mode == PoolMode::max ? &acts.argmax[i] : nullptr));
        break;
    }
  }
  return acts;
}

FeaturePyramid FeatureNetwork::forward(const Tensor& image, std::span<const std::string> capture) const {
  std::vector<std::size_t> indices;
  for (const std::string& name : capture) indices.push_back(layer_index(name));
  FeaturePyramid pyramid;
  if (indices.empty()) return pyramid;
  const std::size_t last = *std::max_element(indices.begin(), indices.end());
  Activations acts = run(image, last);
  for (std::size_t idx : indices) pyramid.insert_or_assign(layers_[idx].name, acts.outputs[idx]);
  return pyramid;
}

Tensor FeatureNetwork::backward_to_input(const Tensor& image, const FeaturePyramid& grads) const {
  if (image.channels() != 3) {
    throw ShapeError("feature network expects a 3-channel image, got " + image.shape_string());
  }
  if (grads.empty()) return Tensor(image.height(), image.width(), 3);
  std::size_t last = 0;
  for (const auto& [name, g] : grads) last = std::max(last, layer_index(name));
  Activations acts = run(image, last);
  for (const auto& [name, g] : grads) {
    const Tensor& act = acts.outputs[layer_index(name)];
    if (!g.same_shape(act)) {
      throw ShapeError("gradient for layer '" + name + "' has shape " + g.shape_string() + ", activation is " +
                       act.shape_string());
    }
  }

  Tensor grad = Tensor(acts.outputs[last].height(), acts.outputs[last].width(), acts.outputs[last].channels());
  for (std::size_t step = last + 1; step-- > 0;) {
    const LayerSpec& layer = layers_[step];
    if (auto it = grads.find(layer.name); it != grads.end()) {
      auto dst = grad.data();
      auto src = it->second.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    const Tensor& in = step == 0 ? acts.input : acts.outputs[step - 1];
    switch (layer.kind) {
      case LayerKind::conv:
        grad = conv_backward(grad, layer, packed_[conv_slot_[step]]);
        break;
      case LayerKind::relu: {
        auto g = grad.data();
        auto x = in.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (!(x[k] > 0.0f)) g[k] = 0.0f;
        }
        break;
      }
      case LayerKind::pool: {
        Tensor grad_in(in.height(), in.width(), in.channels());
        const Tensor& out = acts.outputs[step];
        const int w = layer.window;
        if (layer.mode == PoolMode::max) {
          const auto& argmax = acts.argmax[step];
          for (std::size_t k = 0; k < out.size(); ++k) grad_in.data()[argmax[k]] += grad.data()[k];
        } else {
          const float inv_area = 1.0f / static_cast<float>(w * w);
          for (int r = 0; r < out.height(); ++r)
            for (int c = 0; c < out.width(); ++c)
              for (int ch = 0; ch < out.channels(); ++ch) {
                const float share = grad(r, c, ch) * inv_area;
                for (int dy = 0; dy < w; ++dy)
                  for (int dx = 0; dx < w; ++dx) grad_in(r * w + dy, c * w + dx, ch) += share;
              }
        }
        grad = std::move(grad_in);
        break;
      }
    }
  }
  return grad;
}

std::vector<LayerSpec> toy_layout() {
  return {LayerSpec::conv("conv1_1", 3, 8, 3), LayerSpec::relu("relu1_1"), LayerSpec::pool("pool1", 2),
          LayerSpec::conv("conv2_1", 8, 16, 3), LayerSpec::relu("relu2_1")};
}

std::vector<LayerSpec> vggish_layout() {
  std::vector<LayerSpec> layers;
  const int widths[] = {64, 128, 256, 512};
  const int depths[] = {2, 2, 4, 1};
  int channels = 3;
  for (int block = 0; block < 4; ++block) {
    for (int i = 0; i < depths[block]; ++i) {
      const std::string suffix = std::to_string(block + 1) + "_" + std::to_string(i + 1);
      layers.push_back(LayerSpec::conv("conv" + suffix, channels, widths[block], 3));
      layers.push_back(LayerSpec::relu("relu" + suffix));
      channels = widths[block];
    }
    if (block < 3) layers.push_back(LayerSpec::pool("pool" + std::to_string(block + 1), 2));
  }
  return layers;
}

FeatureNetwork make_toy_network(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LayerSpec> layers = toy_layout();
  std::vector<ConvWeights> weights;
  for (const LayerSpec& layer : layers) {
    if (layer.kind != LayerKind::conv) continue;
    const int k = layer.kernel_size;
    const int fan_in = layer.in_channels * k * k;
    const double limit = std::sqrt(6.0 / fan_in);
    ConvWeights w;
    w.kernel.assign(static_cast<std::size_t>(layer.out_channels) * fan_in, 0.0f);
    const auto filter = [&](int o) { return w.kernel.begin() + static_cast<std::ptrdiff_t>(o) * fan_in; };

    // Identity taps first: inputs to every conv are non-negative, so these
    // channels pass the relu untouched.
    const int identity = std::min(layer.in_channels, layer.out_channels);
    for (int i = 0; i < identity; ++i) filter(i)[(i * k + k / 2) * k + k / 2] = 1.0f;

    const int rest = layer.out_channels - identity;
    const int pairs = rest / 2;
    for (int p = 0; p < pairs; ++p) {
      for (int j = 0; j < fan_in; ++j) {
        const auto v = static_cast<float>(rng.uniform(-limit, limit));
        filter(identity + p)[j] = v;
        filter(identity + pairs + p)[j] = -v;
      }
    }
    if (rest % 2 == 1) {
      for (int j = 0; j < fan_in; ++j) filter(layer.out_channels - 1)[j] = static_cast<float>(rng.uniform(-limit, limit));
    }
    w.bias.assign(layer.out_channels, 0.0f);
    weights.push_back(std::move(w));
  }
  return FeatureNetwork(std::move(layers), std::move(weights));
}

FeatureNetwork make_random_network(std::vector<LayerSpec> layers, std::uint64_t seed, float bias_scale) {
  Rng rng(seed);
  std::vector<ConvWeights> weights;
  for (const LayerSpec& layer : layers) {
    if (layer.kind != LayerKind::conv) continue;
    const int fan_in = layer.in_channels * layer.kernel_size * layer.kernel_size;
    const double limit = std::sqrt(6.0 / fan_in);
    ConvWeights w;
    w.kernel.resize(static_cast<std::size_t>(layer.out_channels) * fan_in);
    for (float& v : w.kernel) v = static_cast<float>(rng.uniform(-limit, limit));
    w.bias.resize(layer.out_channels);
    for (float& v : w.bias) v = static_cast<float>(rng.uniform(-bias_scale, bias_scale));
    weights.push_back(std::move(w));
  }
  return FeatureNetwork(std::move(layers), std::move(weights));
}

}  // namespace mmrf
