#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmrf/features.hpp"
#include "mmrf/masks.hpp"
#include "mmrf/synthesis.hpp"
#include "mmrf/tensor.hpp"

namespace mmrf {

class FormatError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, unsupported_version, truncated, shape, malformed };
  static constexpr std::size_t kNoOffset = std::numeric_limits<std::size_t>::max();

  FormatError(Kind kind, const std::string& message, std::size_t offset = kNoOffset)
      : std::runtime_error(message), kind_(kind), offset_(offset) {}

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

using Bytes = std::vector<std::uint8_t>;

Bytes read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Dense tensor container: "MMT1", height, width, channels (u32 LE), then
// row-major little-endian float32 values.
Bytes encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);

// Weight file: "MMRF", version, layer count (u32 LE); per layer a kind byte,
// u16 name length and UTF-8 name, a kind-specific u32 header and, for conv
// layers, kernel (out, in, k, k) then bias as float32. An optional trailing
// "MEAN" tag with three float32 input offsets ends the file.
inline constexpr std::uint32_t kWeightFormatVersion = 1;
Bytes encode_weights(const FeatureNetwork& net);
FeatureNetwork decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const std::filesystem::path& path, const FeatureNetwork& net);
FeatureNetwork load_weights(const std::filesystem::path& path);

/// CRC-32 (zlib polynomial).
std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

/// 8-bit PNG to a tensor in [0, 1]: RGB (3 channels) or grayscale (1).
Tensor read_png_rgb(const std::filesystem::path& path);
Tensor read_png_gray(const std::filesystem::path& path);
/// Writes 1- or 3-channel tensors as 8-bit PNG, rounding half up.
void write_png(const std::filesystem::path& path, const Tensor& image);
std::uint8_t to_byte(float v);

/// `key = value` lines grouped under `[section]` headers; `#` starts a
/// comment line. Entries before the first header belong to section "".
struct KeyValueDocument {
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };
  std::vector<Section> sections;

  const std::string* find(std::string_view section, std::string_view key) const;
  const Section* section(std::string_view name) const;
  void set(std::string_view section, std::string_view key, std::string value);
};

KeyValueDocument parse_key_value(std::string_view text, std::string_view source = "<text>");
std::string serialize_key_value(const KeyValueDocument& doc);

struct MaskManifest {
  std::string target;
  std::optional<std::string> landmarks;
  std::vector<std::pair<std::string, std::string>> masks;

  bool operator==(const MaskManifest&) const = default;
};

MaskManifest parse_manifest(std::string_view text, std::string_view source = "<manifest>");
std::string serialize_manifest(const MaskManifest& manifest);
MaskManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const MaskManifest& manifest);

/// Loads every mask PNG (paths relative to base_dir) and checks that each
/// is height x width; errors name the offending label.
SoftMaskSet load_mask_set(const MaskManifest& manifest, const std::filesystem::path& base_dir, int height,
                          int width);

LandmarkSet parse_landmarks(std::string_view text, std::string_view source = "<landmarks>");
std::string serialize_landmarks(const LandmarkSet& landmarks);
LandmarkSet read_landmarks(const std::filesystem::path& path);

/// Config keys live in a [synthesis] section.
SynthesisConfig config_from_document(const KeyValueDocument& doc);
KeyValueDocument config_to_document(const SynthesisConfig& cfg);

std::string format_double(double v);
std::vector<std::string> split_list(std::string_view text, char sep = ',');
std::vector<double> parse_double_list(std::string_view text);

}  // namespace mmrf
