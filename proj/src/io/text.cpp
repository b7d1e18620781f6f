#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "mmrf/io.hpp"

namespace mmrf {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void syntax_error(std::string_view source, int line, const std::string& what) {
  throw FormatError(FormatError::Kind::malformed, std::string(source) + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw FormatError(FormatError::Kind::malformed,
                      "expected a number for " + std::string(what) + ", got '" + std::string(text) + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(FormatError::Kind::malformed,
                      "expected an integer for " + std::string(what) + ", got '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  while (true) {
    const auto pos = text.find(sep);
    const std::string_view item = trim(text.substr(0, pos));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    text.remove_prefix(pos + 1);
  }
  return out;
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  for (const std::string& item : split_list(text)) out.push_back(parse_double(item, "list element"));
  return out;
}

const KeyValueDocument::Section* KeyValueDocument::section(std::string_view name) const {
  for (const Section& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

const std::string* KeyValueDocument::find(std::string_view sec, std::string_view key) const {
  const Section* s = section(sec);
  if (!s) return nullptr;
  for (const auto& [k, v] : s->entries)
    if (k == key) return &v;
  return nullptr;
}

void KeyValueDocument::set(std::string_view sec, std::string_view key, std::string value) {
  Section* target = nullptr;
  for (Section& s : sections)
    if (s.name == sec) target = &s;
  if (!target) target = &sections.emplace_back(Section{std::string(sec), {}});
  for (auto& [k, v] : target->entries) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  target->entries.emplace_back(std::string(key), std::move(value));
}

KeyValueDocument parse_key_value(std::string_view text, std::string_view source) {
  KeyValueDocument doc;
  doc.sections.push_back({"", {}});
  std::set<std::string> seen_sections{""};
  std::set<std::string> seen_keys;
  int line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    const std::string_view raw = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') syntax_error(source, line_no, "unterminated section header");
      const std::string name(trim(line.substr(1, line.size() - 2)));
      if (name.empty()) syntax_error(source, line_no, "empty section name");
      if (!seen_sections.insert(name).second) syntax_error(source, line_no, "duplicate section [" + name + "]");
      doc.sections.push_back({name, {}});
      seen_keys.clear();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) syntax_error(source, line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) syntax_error(source, line_no, "empty key");
    if (!seen_keys.insert(key).second) syntax_error(source, line_no, "duplicate key '" + key + "'");
    doc.sections.back().entries.emplace_back(key, value);
  }
  return doc;
}

std::string serialize_key_value(const KeyValueDocument& doc) {
  std::ostringstream out;
  bool first = true;
  for (const auto& section : doc.sections) {
    if (section.name.empty() && section.entries.empty()) continue;
    if (!first) out << '\n';
    first = false;
    if (!section.name.empty()) out << '[' << section.name << "]\n";
    for (const auto& [k, v] : section.entries) out << k << " = " << v << '\n';
  }
  return out.str();
}

MaskManifest parse_manifest(std::string_view text, std::string_view source) {
  const KeyValueDocument doc = parse_key_value(text, source);
  MaskManifest manifest;
  const std::string* target = doc.find("", "target");
  if (!target || target->empty()) {
    throw FormatError(FormatError::Kind::malformed, std::string(source) + ": manifest has no 'target' entry");
  }
  manifest.target = *target;
  if (const std::string* lm = doc.find("", "landmarks")) manifest.landmarks = *lm;
  for (const auto& [k, v] : doc.sections.front().entries) {
    if (k != "target" && k != "landmarks") {
      throw FormatError(FormatError::Kind::malformed, std::string(source) + ": unknown manifest key '" + k + "'");
    }
  }
  for (const auto& section : doc.sections) {
    if (!section.name.empty() && section.name != "masks") {
      throw FormatError(FormatError::Kind::malformed,
                        std::string(source) + ": unknown manifest section [" + section.name + "]");
    }
  }
  const auto* masks = doc.section("masks");
  if (!masks || masks->entries.empty()) {
    throw FormatError(FormatError::Kind::malformed, std::string(source) + ": manifest lists no masks");
  }
  manifest.masks = masks->entries;
  return manifest;
}

std::string serialize_manifest(const MaskManifest& manifest) {
  KeyValueDocument doc;
  doc.sections.push_back({"", {{"target", manifest.target}}});
  if (manifest.landmarks) doc.sections.front().entries.emplace_back("landmarks", *manifest.landmarks);
  doc.sections.push_back({"masks", manifest.masks});
  return serialize_key_value(doc);
}

MaskManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.string());
}

void write_manifest(const std::filesystem::path& path, const MaskManifest& manifest) {
  write_text_file(path, serialize_manifest(manifest));
}

SoftMaskSet load_mask_set(const MaskManifest& manifest, const std::filesystem::path& base_dir, int height,
                          int width) {
  Tensor stacked(height, width, static_cast<int>(manifest.masks.size()));
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < manifest.masks.size(); ++k) {
    const auto& [label, file] = manifest.masks[k];
    const Tensor mask = read_png_gray(base_dir / file);
    if (mask.height() != height || mask.width() != width) {
      throw FormatError(FormatError::Kind::shape, "mask '" + label + "' (" + (base_dir / file).string() + ") is " +
                                                      std::to_string(mask.height()) + "x" +
                                                      std::to_string(mask.width()) + ", image is " +
                                                      std::to_string(height) + "x" + std::to_string(width));
    }
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) stacked(r, c, static_cast<int>(k)) = mask(r, c, 0);
    labels.push_back(label);
  }
  try {
    return SoftMaskSet(std::move(stacked), std::move(labels));
  } catch (const ShapeError& e) {
    throw FormatError(FormatError::Kind::malformed, e.what());
  }
}

LandmarkSet parse_landmarks(std::string_view text, std::string_view source) {
  LandmarkSet set;
  std::set<std::string> regions;
  int line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    const std::string_view line = trim(text.substr(0, eol));
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_list(line, ' ');
    try {
      if (set.points.size() < LandmarkSet::kCount) {
        if (fields.size() != 2) syntax_error(source, line_no, "expected 'x y'");
        set.points.push_back({parse_double(fields[0], "landmark x"), parse_double(fields[1], "landmark y")});
        continue;
      }
      if (fields.size() < 2) syntax_error(source, line_no, "expected '<region> first-last ...'");
      std::vector<LandmarkRange>* target = nullptr;
      if (fields[0] == "eyes") target = &set.eyes;
      if (fields[0] == "nose") target = &set.nose;
      if (fields[0] == "inner_mouth") target = &set.inner_mouth;
      if (fields[0] == "outer_mouth") target = &set.outer_mouth;
      if (!target) syntax_error(source, line_no, "unknown landmark region '" + fields[0] + "'");
      if (!regions.insert(fields[0]).second) syntax_error(source, line_no, "region '" + fields[0] + "' repeated");
      target->clear();
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const auto dash = fields[i].find('-');
        if (dash == std::string::npos) syntax_error(source, line_no, "range '" + fields[i] + "' lacks '-'");
        const int first = parse_int<int>(std::string_view(fields[i]).substr(0, dash), "range start");
        const int last = parse_int<int>(std::string_view(fields[i]).substr(dash + 1), "range end");
        if (first < 0 || last >= LandmarkSet::kCount || first > last) {
          syntax_error(source, line_no, "range '" + fields[i] + "' is outside 0-67");
        }
        target->push_back({first, last});
      }
    } catch (const FormatError& e) {
      if (std::string_view(e.what()).starts_with(source)) throw;
      syntax_error(source, line_no, e.what());
    }
  }
  if (set.points.size() != LandmarkSet::kCount) {
    throw FormatError(FormatError::Kind::malformed, std::string(source) + ": expected 68 landmark lines, found " +
                                                        std::to_string(set.points.size()));
  }
  if (regions.size() != 4) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string(source) + ": need region lines for eyes, nose, inner_mouth and outer_mouth");
  }
  return set;
}

std::string serialize_landmarks(const LandmarkSet& landmarks) {
  std::ostringstream out;
  for (const Point2& p : landmarks.points) out << format_double(p.x) << ' ' << format_double(p.y) << '\n';
  auto region = [&](const char* name, const std::vector<LandmarkRange>& ranges) {
    out << name;
    for (const auto& r : ranges) out << ' ' << r.first << '-' << r.last;
    out << '\n';
  };
  region("eyes", landmarks.eyes);
  region("nose", landmarks.nose);
  region("inner_mouth", landmarks.inner_mouth);
  region("outer_mouth", landmarks.outer_mouth);
  return out.str();
}

LandmarkSet read_landmarks(const std::filesystem::path& path) {
  return parse_landmarks(read_text_file(path), path.string());
}

SynthesisConfig config_from_document(const KeyValueDocument& doc) {
  SynthesisConfig cfg;
  const auto* section = doc.section("synthesis");
  if (!section) return cfg;
  for (const auto& [key, value] : section->entries) {
    if (key == "alpha_style") cfg.alpha_style = parse_double(value, key);
    else if (key == "alpha_content") cfg.alpha_content = parse_double(value, key);
    else if (key == "beta") cfg.beta = parse_double(value, key);
    else if (key == "patch_size") cfg.patch_size = parse_int<int>(value, key);
    else if (key == "stride") cfg.stride = parse_int<int>(value, key);
    else if (key == "style_layers") cfg.style_layers = split_list(value);
    else if (key == "content_layers") cfg.content_layers = split_list(value);
    else if (key == "pyramid_levels") cfg.pyramid_levels = parse_int<int>(value, key);
    else if (key == "level_scale") cfg.level_scale = parse_double(value, key);
    else if (key == "outer_iterations") cfg.outer_iterations = parse_int<int>(value, key);
    else if (key == "lbfgs_iterations") cfg.lbfgs_iterations = parse_int<int>(value, key);
    else if (key == "lbfgs_memory") cfg.lbfgs_memory = parse_int<int>(value, key);
    else if (key == "line_search_steps") cfg.line_search_steps = parse_int<int>(value, key);
    else if (key == "seed") cfg.seed = parse_int<std::uint64_t>(value, key);
    else if (key == "rotations") cfg.rotations = parse_double_list(value);
    else if (key == "scales") cfg.scales = parse_double_list(value);
    else throw FormatError(FormatError::Kind::malformed, "unknown synthesis config key '" + key + "'");
  }
  return cfg;
}

KeyValueDocument config_to_document(const SynthesisConfig& cfg) {
  auto join = [](const auto& items, auto fmt) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += ", ";
      out += fmt(item);
    }
    return out;
  };
  auto as_is = [](const std::string& s) { return s; };
  auto num = [](double v) { return format_double(v); };
  KeyValueDocument doc;
  doc.sections.push_back({"synthesis",
                          {{"alpha_style", num(cfg.alpha_style)},
                           {"alpha_content", num(cfg.alpha_content)},
                           {"beta", num(cfg.beta)},
                           {"patch_size", std::to_string(cfg.patch_size)},
                           {"stride", std::to_string(cfg.stride)},
                           {"style_layers", join(cfg.style_layers, as_is)},
                           {"content_layers", join(cfg.content_layers, as_is)},
                           {"pyramid_levels", std::to_string(cfg.pyramid_levels)},
                           {"level_scale", num(cfg.level_scale)},
                           {"outer_iterations", std::to_string(cfg.outer_iterations)},
                           {"lbfgs_iterations", std::to_string(cfg.lbfgs_iterations)},
                           {"lbfgs_memory", std::to_string(cfg.lbfgs_memory)},
                           {"line_search_steps", std::to_string(cfg.line_search_steps)},
                           {"seed", std::to_string(cfg.seed)},
                           {"rotations", join(cfg.rotations, num)},
                           {"scales", join(cfg.scales, num)}}});
  return doc;
}

}  // namespace mmrf
