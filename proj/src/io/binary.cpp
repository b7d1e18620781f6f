#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "mmrf/io.hpp"

namespace mmrf {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { bytes(&v, sizeof v); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void floats(std::span<const float> v) { bytes(v.data(), v.size_bytes()); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      std::ostringstream msg;
      msg << "truncated " << what << ": expected " << n << " bytes at offset " << pos_ << ", only " << remaining()
          << " remain (file length " << data_.size() << ")";
      throw FormatError(FormatError::Kind::truncated, msg.str(), pos_);
    }
  }
  void bytes(void* dst, std::size_t n, std::string_view what) {
    need(n, what);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8(std::string_view what) {
    std::uint8_t v;
    bytes(&v, 1, what);
    return v;
  }
  std::uint16_t u16(std::string_view what) {
    std::uint16_t v;
    bytes(&v, 2, what);
    return v;
  }
  std::uint32_t u32(std::string_view what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::vector<float> floats(std::size_t n, std::string_view what) {
    std::vector<float> v(n);
    bytes(v.data(), n * sizeof(float), what);
    return v;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

constexpr char kTensorMagic[4] = {'M', 'M', 'T', '1'};
constexpr char kWeightMagic[4] = {'M', 'M', 'R', 'F'};
constexpr char kMeanTag[4] = {'M', 'E', 'A', 'N'};

template <typename Fn>
auto with_path(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what(), e.offset());
  }
}

void check_finite(std::span<const float> values, std::size_t base_offset, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      const std::size_t at = base_offset + i * sizeof(float);
      throw FormatError(FormatError::Kind::malformed,
                        std::string(what) + " holds a non-finite value at offset " + std::to_string(at), at);
    }
  }
}

}  // namespace

Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, path.string() + ": cannot open for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::io, path.string() + ": write failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  const Bytes bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

Bytes encode_tensor(const Tensor& t) {
  Writer w;
  w.bytes(kTensorMagic, 4);
  w.u32(static_cast<std::uint32_t>(t.height()));
  w.u32(static_cast<std::uint32_t>(t.width()));
  w.u32(static_cast<std::uint32_t>(t.channels()));
  w.floats(t.data());
  return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "tensor magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "not a tensor file (magic is not MMT1)", 0);
  }
  const std::uint32_t h = r.u32("tensor height");
  const std::uint32_t w = r.u32("tensor width");
  const std::uint32_t c = r.u32("tensor channels");
  if (h == 0 || w == 0 || c == 0 || h > (1u << 20) || w > (1u << 20) || c > (1u << 20)) {
    throw FormatError(FormatError::Kind::shape,
                      "tensor dimensions " + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) +
                          " are invalid",
                      4);
  }
  const std::size_t count = static_cast<std::size_t>(h) * w * c;
  const std::size_t payload_at = r.offset();
  auto values = r.floats(count, "tensor payload");
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::shape,
                      std::to_string(r.remaining()) + " trailing bytes after a " + std::to_string(h) + "x" +
                          std::to_string(w) + "x" + std::to_string(c) + " payload",
                      r.offset());
  }
  check_finite(values, payload_at, "tensor payload");
  return Tensor(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::move(values));
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) { write_file_bytes(path, encode_tensor(t)); }

Tensor read_tensor_file(const std::filesystem::path& path) {
  return with_path(path, [&] { return decode_tensor(read_file_bytes(path)); });
}

Bytes encode_weights(const FeatureNetwork& net) {
  Writer w;
  w.bytes(kWeightMagic, 4);
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  std::size_t conv = 0;
  for (const LayerSpec& layer : net.layers()) {
    w.u8(static_cast<std::uint8_t>(layer.kind));
    w.u16(static_cast<std::uint16_t>(layer.name.size()));
    w.bytes(layer.name.data(), layer.name.size());
    switch (layer.kind) {
      case LayerKind::conv: {
        w.u32(static_cast<std::uint32_t>(layer.in_channels));
        w.u32(static_cast<std::uint32_t>(layer.out_channels));
        w.u32(static_cast<std::uint32_t>(layer.kernel_size));
        w.u32(static_cast<std::uint32_t>(layer.stride));
        w.u32(static_cast<std::uint32_t>(layer.padding));
        const ConvWeights& cw = net.conv_weights()[conv++];
        w.floats(cw.kernel);
        w.floats(cw.bias);
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::pool:
        w.u32(static_cast<std::uint32_t>(layer.window));
        w.u32(static_cast<std::uint32_t>(layer.stride));
        w.u32(static_cast<std::uint32_t>(layer.mode));
        break;
    }
  }
  if (net.input_offsets()) {
    w.bytes(kMeanTag, 4);
    w.floats(*net.input_offsets());
  }
  return w.take();
}

FeatureNetwork decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "weight file magic");
  if (std::memcmp(magic, kWeightMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "not a weight file (magic is not MMRF)", 0);
  }
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("format version");
  if (version != kWeightFormatVersion) {
    throw FormatError(FormatError::Kind::unsupported_version,
                      "unsupported weight format version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32("layer count");
  if (count == 0 || count > 4096) {
    throw FormatError(FormatError::Kind::malformed, "implausible layer count " + std::to_string(count), 8);
  }

  std::vector<LayerSpec> layers;
  std::vector<ConvWeights> weights;
  int channels = 3;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t layer_at = r.offset();
    const std::uint8_t kind = r.u8("layer kind");
    if (kind > 2) {
      throw FormatError(FormatError::Kind::malformed,
                        "unknown layer kind " + std::to_string(kind) + " at offset " + std::to_string(layer_at),
                        layer_at);
    }
    const std::uint16_t name_len = r.u16("layer name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "layer name");
    LayerSpec spec;
    spec.kind = static_cast<LayerKind>(kind);
    spec.name = name;
    const std::size_t header_at = r.offset();
    auto shape_error = [&](const std::string& what) {
      throw FormatError(FormatError::Kind::shape, "layer '" + name + "': " + what, header_at);
    };
    switch (spec.kind) {
      case LayerKind::conv: {
        spec.in_channels = static_cast<int>(r.u32("conv in_channels"));
        spec.out_channels = static_cast<int>(r.u32("conv out_channels"));
        spec.kernel_size = static_cast<int>(r.u32("conv kernel size"));
        spec.stride = static_cast<int>(r.u32("conv stride"));
        spec.padding = static_cast<int>(r.u32("conv padding"));
        if (spec.in_channels != channels) {
          shape_error("declares " + std::to_string(spec.in_channels) + " input channels, previous layer gives " +
                      std::to_string(channels));
        }
        if (spec.out_channels < 1 || spec.out_channels > 65536 || spec.kernel_size < 1 || spec.kernel_size > 64 ||
            spec.kernel_size % 2 == 0 || spec.padding != (spec.kernel_size - 1) / 2 || spec.stride != 1) {
          shape_error("inconsistent conv header (out " + std::to_string(spec.out_channels) + ", k " +
                      std::to_string(spec.kernel_size) + ", stride " + std::to_string(spec.stride) + ", pad " +
                      std::to_string(spec.padding) + ")");
        }
        const std::size_t kernel_len =
            static_cast<std::size_t>(spec.out_channels) * spec.in_channels * spec.kernel_size * spec.kernel_size;
        const std::size_t payload_at = r.offset();
        r.need((kernel_len + spec.out_channels) * sizeof(float), "payload of conv layer '" + name + "'");
        ConvWeights cw;
        cw.kernel = r.floats(kernel_len, "conv kernel");
        cw.bias = r.floats(spec.out_channels, "conv bias");
        check_finite(cw.kernel, payload_at, "conv kernel");
        check_finite(cw.bias, payload_at + kernel_len * sizeof(float), "conv bias");
        weights.push_back(std::move(cw));
        channels = spec.out_channels;
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::pool: {
        spec.window = static_cast<int>(r.u32("pool window"));
        spec.stride = static_cast<int>(r.u32("pool stride"));
        const std::uint32_t mode = r.u32("pool mode");
        if (spec.window < 1 || spec.stride != spec.window || mode > 1) {
          shape_error("inconsistent pool header (window " + std::to_string(spec.window) + ", stride " +
                      std::to_string(spec.stride) + ", mode " + std::to_string(mode) + ")");
        }
        spec.mode = static_cast<PoolMode>(mode);
        break;
      }
    }
    layers.push_back(std::move(spec));
  }

  std::optional<std::array<float, 3>> offsets;
  if (r.remaining() > 0) {
    const std::size_t tail_at = r.offset();
    char tag[4] = {};
    if (r.remaining() != 16 || (r.bytes(tag, 4, "trailer tag"), std::memcmp(tag, kMeanTag, 4) != 0)) {
      throw FormatError(FormatError::Kind::shape,
                        std::to_string(bytes.size() - tail_at) +
                            " unexpected trailing bytes after the last layer; declared shapes disagree with the "
                            "payload length",
                        tail_at);
    }
    std::array<float, 3> mean;
    r.bytes(mean.data(), sizeof mean, "input offsets");
    check_finite(mean, tail_at + 4, "input offsets");
    offsets = mean;
  }
  try {
    return FeatureNetwork(std::move(layers), std::move(weights), offsets);
  } catch (const NetworkError& e) {
    throw FormatError(FormatError::Kind::shape, e.what(), 0);
  }
}

void save_weights(const std::filesystem::path& path, const FeatureNetwork& net) {
  write_file_bytes(path, encode_weights(net));
}

FeatureNetwork load_weights(const std::filesystem::path& path) {
  return with_path(path, [&] { return decode_weights(read_file_bytes(path)); });
}

}  // namespace mmrf
