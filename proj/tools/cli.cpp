#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "mmrf/features.hpp"
#include "mmrf/io.hpp"
#include "mmrf/kernels.hpp"
#include "mmrf/masks.hpp"
#include "mmrf/synthesis.hpp"

namespace fs = std::filesystem;

namespace mmrf::cli {

namespace {

/// Flag combinations that parse but make no sense.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthArgs {
  std::string content, style, content_masks, style_masks, weights, out, config;
  double alpha_style = 1e-4, alpha_content = 20.0, beta = 20.0, level_scale = 0.5;
  int patch_size = 3, stride = 1, levels = 3, outer_iters = 10, lbfgs_iters = 50;
  std::string style_layers, content_layers, rotations, scales;
  std::uint64_t seed = 0;
  std::string trace, dump_nn;
};

struct MasksArgs {
  std::string image, probs, labels, pair_image, pair_probs, pair_out_dir, landmarks, pair_landmarks, out_dir;
  std::string steps = "rescale";
  int k = 5;
  double blur_radius = 5.0;
  double face_extension = 0.5;
  SkinRule skin;
};

struct WeightsArgs {
  std::uint64_t seed = 42;
  std::string out;
  std::string file;
};

std::string csv_number(double v) { return format_double(v); }

fs::path sibling_with_suffix(const fs::path& file, const std::string& suffix) {
  fs::path p = file;
  p.replace_extension();
  return p.string() + suffix;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const SynthArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  SynthesisConfig cfg;
  if (!a.config.empty()) cfg = config_from_document(parse_key_value(read_text_file(a.config), a.config));
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (given("--alpha-style") || a.config.empty()) cfg.alpha_style = a.alpha_style;
  if (given("--alpha-content") || a.config.empty()) cfg.alpha_content = a.alpha_content;
  if (given("--beta") || a.config.empty()) cfg.beta = a.beta;
  if (given("--patch-size") || a.config.empty()) cfg.patch_size = a.patch_size;
  if (given("--stride") || a.config.empty()) cfg.stride = a.stride;
  if (given("--levels") || a.config.empty()) cfg.pyramid_levels = a.levels;
  if (given("--level-scale") || a.config.empty()) cfg.level_scale = a.level_scale;
  if (given("--outer-iters") || a.config.empty()) cfg.outer_iterations = a.outer_iters;
  if (given("--lbfgs-iters") || a.config.empty()) cfg.lbfgs_iterations = a.lbfgs_iters;
  if (given("--seed") || a.config.empty()) cfg.seed = a.seed;
  if (given("--style-layers")) cfg.style_layers = split_list(a.style_layers);
  if (given("--content-layers")) cfg.content_layers = split_list(a.content_layers);
  if (given("--rotations")) cfg.rotations = parse_double_list(a.rotations);
  if (given("--scales")) cfg.scales = parse_double_list(a.scales);
  cfg.validate();

  const FeatureNetwork net = load_weights(a.weights);
  if (cfg.style_layers.empty()) cfg.style_layers = default_style_layers(net);
  if (cfg.content_layers.empty()) cfg.content_layers = default_content_layers(net);
  for (const auto& layer : cfg.style_layers) net.layer_index(layer);
  for (const auto& layer : cfg.content_layers) net.layer_index(layer);

  const Tensor content = read_png_rgb(a.content);
  const Tensor style = read_png_rgb(a.style);
  const fs::path cm_path(a.content_masks), sm_path(a.style_masks);
  const SoftMaskSet content_masks =
      load_mask_set(read_manifest(cm_path), cm_path.parent_path(), content.height(), content.width());
  const SoftMaskSet style_masks =
      load_mask_set(read_manifest(sm_path), sm_path.parent_path(), style.height(), style.width());
  {
    std::set<std::string> cl(content_masks.labels().begin(), content_masks.labels().end());
    std::set<std::string> sl(style_masks.labels().begin(), style_masks.labels().end());
    if (cl != sl) {
      throw FormatError(FormatError::Kind::malformed,
                        a.style_masks + ": mask labels differ from " + a.content_masks);
    }
  }

  out << "kernels: " << kernels::active().name << "\n";
  const SynthesisResult result =
      synthesize(content, style, content_masks, style_masks, net, cfg, [&](const TraceRow& row) {
        out << "level " << row.level << " iter " << row.iteration << "  E=" << csv_number(row.total)
            << "  Es=" << csv_number(row.style) << "  Ec=" << csv_number(row.content) << "\n";
      });

  write_png(a.out, result.image);

  std::ostringstream report;
  const KeyValueDocument used = config_to_document(cfg);
  for (const auto& [key, value] : used.sections.front().entries) {
    report << "# " << key << " = " << value << "\n";
  }
  report << "# output = " << a.out << "\n";
  report << "level,iteration,E_total,E_style,E_content,E_style_linear_beta,elapsed_seconds\n";
  for (const TraceRow& row : result.trace) {
    report << row.level << ',' << row.iteration << ',' << csv_number(row.total) << ',' << csv_number(row.style)
           << ',' << csv_number(row.content) << ',' << csv_number(row.style_linear_beta) << ',' << std::fixed
           << std::setprecision(3) << row.elapsed_seconds << std::defaultfloat << "\n";
  }
  write_text_file(sibling_with_suffix(a.out, ".report.csv"), report.str());

  if (!a.trace.empty()) {
    std::ostringstream trace;
    trace << "level,iteration,E_total,E_style,E_content,E_style_linear_beta\n";
    for (const TraceRow& row : result.trace) {
      trace << row.level << ',' << row.iteration << ',' << csv_number(row.total) << ',' << csv_number(row.style)
            << ',' << csv_number(row.content) << ',' << csv_number(row.style_linear_beta) << "\n";
    }
    write_text_file(a.trace, trace.str());
    std::ostringstream solves;
    solves << "level,iteration,step,energy\n";
    for (const SolveLog& log : result.solves) {
      for (std::size_t s = 0; s < log.accepted_energies.size(); ++s) {
        solves << log.level << ',' << log.iteration << ',' << s << ',' << csv_number(log.accepted_energies[s])
               << "\n";
      }
    }
    write_text_file(sibling_with_suffix(a.trace, ".solves.csv"), solves.str());
  }

  if (!a.dump_nn.empty()) {
    fs::create_directories(a.dump_nn);
    for (const LayerAssignment& la : result.assignments) {
      Tensor map(la.grid_rows, la.grid_cols, 2);
      for (std::size_t i = 0; i < la.assignment.index.size(); ++i) {
        map.data()[2 * i] = static_cast<float>(la.assignment.index[i]);
        map.data()[2 * i + 1] = la.assignment.score[i];
      }
      write_tensor_file(fs::path(a.dump_nn) / ("nn_" + la.layer + ".mmt"), map);
    }
  }

  if (!result.trace.empty()) {
    const TraceRow& last = result.trace.back();
    out << "final E_total=" << csv_number(last.total) << " E_style=" << csv_number(last.style)
        << " E_content=" << csv_number(last.content) << "\n";
  }
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- masks

struct MaskWork {
  Tensor image;
  std::optional<SoftMaskSet> masks;
  std::set<std::string> facial;
};

void append(MaskWork& work, const Tensor& channels, const std::vector<std::string>& labels) {
  if (!work.masks) {
    work.masks = SoftMaskSet(channels, labels);
    return;
  }
  std::vector<std::string> all = work.masks->labels();
  for (const auto& l : labels) {
    if (work.masks->find(l) >= 0) throw FormatError(FormatError::Kind::malformed, "mask label '" + l + "' already exists");
    all.push_back(l);
  }
  work.masks = SoftMaskSet(concat_channels(work.masks->masks(), channels), all);
}

MaskWork load_mask_inputs(const std::string& image_path, const std::string& probs_path,
                          const std::vector<std::string>& labels, bool rescale) {
  MaskWork work;
  work.image = read_png_rgb(image_path);
  if (probs_path.empty()) return work;
  const Tensor raw = read_tensor_file(probs_path);
  if (!raw.same_spatial(work.image)) {
    throw FormatError(FormatError::Kind::shape, probs_path + ": probability maps are " + raw.shape_string() +
                                                    ", image " + image_path + " is " + work.image.shape_string());
  }
  if (!labels.empty() && static_cast<int>(labels.size()) != raw.channels()) {
    throw UsageError("--labels names " + std::to_string(labels.size()) + " classes, " + probs_path + " has " +
                     std::to_string(raw.channels()));
  }
  if (rescale) {
    work.masks = rescale_probability_maps(raw, labels);
  } else {
    std::vector<std::string> names = labels.empty() ? rescale_probability_maps(raw).labels() : labels;
    work.masks = SoftMaskSet(raw, names);
  }
  return work;
}

void apply_skin(MaskWork& work, const SkinRule& rule) {
  Tensor skin = detect_skin(work.image, rule);
  if (work.masks) {
    if (const int person = work.masks->find("person"); person >= 0) {
      skin = intersect_masks(skin, work.masks->channel(person));
    }
  }
  append(work, skin, {"skin"});
}

void apply_facial(MaskWork& work, const std::string& landmarks_path, const MasksArgs& a) {
  const LandmarkSet landmarks = read_landmarks(landmarks_path);
  Tensor person(work.image.height(), work.image.width(), 1, 1.0f);
  if (work.masks) {
    if (const int idx = work.masks->find("person"); idx >= 0) person = work.masks->channel(idx);
  }
  const SoftMaskSet parts = facial_part_masks(landmarks, work.image.height(), work.image.width(), person,
                                              {a.face_extension, a.blur_radius});
  append(work, parts.masks(), parts.labels());
  work.facial.insert(parts.labels().begin(), parts.labels().end());
}

void apply_blur(MaskWork& work, double radius) {
  if (!work.masks) return;
  Tensor blurred = work.masks->masks();
  for (int k = 0; k < work.masks->count(); ++k) {
    if (work.facial.count(work.masks->labels()[k])) continue;  // blurred when built
    const Tensor ch = blur_mask(work.masks->channel(k), radius);
    for (int r = 0; r < blurred.height(); ++r)
      for (int c = 0; c < blurred.width(); ++c) blurred(r, c, k) = ch(r, c, 0);
  }
  work.masks = SoftMaskSet(std::move(blurred), work.masks->labels());
}

void write_mask_outputs(const MaskWork& work, const std::string& image_path, const std::string& landmarks,
                        const fs::path& dir, bool composite, std::ostream& out) {
  if (!work.masks) throw UsageError("no masks were produced; give --probs or select skin/facial steps");
  fs::create_directories(dir);
  MaskManifest manifest;
  manifest.target = fs::absolute(image_path).lexically_normal().string();
  if (!landmarks.empty()) manifest.landmarks = fs::absolute(landmarks).lexically_normal().string();
  for (int k = 0; k < work.masks->count(); ++k) {
    const std::string& label = work.masks->labels()[k];
    if (label.find_first_of("/\\") != std::string::npos) {
      throw UsageError("mask label '" + label + "' cannot be used as a file name");
    }
    write_png(dir / (label + ".png"), work.masks->channel(k));
    manifest.masks.emplace_back(label, label + ".png");
  }
  write_manifest(dir / "manifest.toml", manifest);
  out << "wrote " << (dir / "manifest.toml").string() << " (" << work.masks->count() << " masks)\n";
  if (composite) {
    std::vector<std::string> colourable;
    for (const auto& l : work.masks->labels())
      if (has_composite_colour(l)) colourable.push_back(l);
    if (colourable.empty()) {
      out << "composite skipped: no mask has a composite colour\n";
    } else {
      write_png(dir / "composite.png", composite_visualization(work.masks->reordered(colourable)));
      out << "wrote " << (dir / "composite.png").string() << "\n";
    }
  }
}

int cmd_masks(const MasksArgs& a, std::ostream& out) {
  const std::vector<std::string> known{"rescale", "topk", "skin", "facial", "blur", "composite"};
  std::set<std::string> steps;
  for (const auto& s : split_list(a.steps)) {
    if (std::find(known.begin(), known.end(), s) == known.end()) throw UsageError("unknown mask step '" + s + "'");
    steps.insert(s);
  }
  const bool paired = !a.pair_image.empty();
  if (steps.count("topk") && (!paired || a.probs.empty() || a.pair_probs.empty() || a.pair_out_dir.empty())) {
    throw UsageError("topk needs --probs, --pair-image, --pair-probs and --pair-out-dir");
  }
  if (paired && a.pair_out_dir.empty()) throw UsageError("--pair-image needs --pair-out-dir");
  if (steps.count("facial")) {
    if (a.landmarks.empty()) throw UsageError("the facial step needs a --landmarks file");
    if (paired && a.pair_landmarks.empty()) throw UsageError("the facial step needs --pair-landmarks for the pair");
  }

  const auto labels = split_list(a.labels);
  const bool rescale = steps.count("rescale") > 0;
  MaskWork work = load_mask_inputs(a.image, a.probs, labels, rescale);
  std::optional<MaskWork> pair;
  if (paired) pair = load_mask_inputs(a.pair_image, a.pair_probs, labels, rescale);

  if (steps.count("topk")) {
    auto [c, s] = select_top_k(*work.masks, *pair->masks, a.k);
    work.masks = std::move(c);
    pair->masks = std::move(s);
  }
  if (steps.count("skin")) {
    apply_skin(work, a.skin);
    if (pair) apply_skin(*pair, a.skin);
  }
  if (steps.count("facial")) {
    apply_facial(work, a.landmarks, a);
    if (pair) apply_facial(*pair, a.pair_landmarks, a);
  }
  if (steps.count("blur")) {
    apply_blur(work, a.blur_radius);
    if (pair) apply_blur(*pair, a.blur_radius);
  }
  const bool composite = steps.count("composite") > 0;
  write_mask_outputs(work, a.image, a.landmarks, a.out_dir, composite, out);
  if (pair) write_mask_outputs(*pair, a.pair_image, a.pair_landmarks, a.pair_out_dir, composite, out);
  return kExitOk;
}

// ---------------------------------------------------------------- weights

int cmd_gen_toy(const WeightsArgs& a, std::ostream& out) {
  save_weights(a.out, make_toy_network(a.seed));
  out << "wrote " << a.out << " (toy network, seed " << a.seed << ")\n";
  return kExitOk;
}

std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

int cmd_inspect(const WeightsArgs& a, std::ostream& out) {
  const Bytes bytes = read_file_bytes(a.file);
  FeatureNetwork net = [&] {
    try {
      return decode_weights(bytes);
    } catch (const FormatError& e) {
      throw FormatError(e.kind(), a.file + ": " + e.what(), e.offset());
    }
  }();
  out << a.file << ": " << bytes.size() << " bytes, crc32 " << hex32(crc32_of(bytes)) << ", format version "
      << kWeightFormatVersion << ", " << net.layers().size() << " layers\n";
  std::size_t conv = 0;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const LayerSpec& l = net.layers()[i];
    out << std::setw(3) << i << "  ";
    switch (l.kind) {
      case LayerKind::conv: {
        const ConvWeights& w = net.conv_weights()[conv++];
        Bytes payload(reinterpret_cast<const std::uint8_t*>(w.kernel.data()),
                      reinterpret_cast<const std::uint8_t*>(w.kernel.data() + w.kernel.size()));
        payload.insert(payload.end(), reinterpret_cast<const std::uint8_t*>(w.bias.data()),
                       reinterpret_cast<const std::uint8_t*>(w.bias.data() + w.bias.size()));
        out << "conv  " << std::left << std::setw(10) << l.name << std::right << " kernel " << l.out_channels << "x"
            << l.in_channels << "x" << l.kernel_size << "x" << l.kernel_size << " bias " << l.out_channels
            << " stride " << l.stride << " pad " << l.padding << " crc32 " << hex32(crc32_of(payload)) << "\n";
        break;
      }
      case LayerKind::relu:
        out << "relu  " << l.name << "\n";
        break;
      case LayerKind::pool:
        out << "pool  " << std::left << std::setw(10) << l.name << std::right << " window " << l.window << " stride "
            << l.stride << (l.mode == PoolMode::max ? " max" : " average") << "\n";
        break;
    }
  }
  if (net.input_offsets()) {
    const auto& m = *net.input_offsets();
    out << "input offsets: " << m[0] << " " << m[1] << " " << m[2] << "\n";
  } else {
    out << "input offsets: none\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mask-guided MRF style transfer over neural feature patches", "mmrf"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Synthesize a stylized image");
  s->add_option("--content", synth.content, "Content image (PNG)")->required();
  s->add_option("--style", synth.style, "Style image (PNG)")->required();
  s->add_option("--content-masks", synth.content_masks, "Content mask manifest")->required();
  s->add_option("--style-masks", synth.style_masks, "Style mask manifest")->required();
  s->add_option("--weights", synth.weights, "Feature network weights (.mmw)")->required();
  s->add_option("--out", synth.out, "Output image (PNG)")->required();
  s->add_option("--config", synth.config, "Synthesis config file; flags override its values");
  s->add_option("--alpha-style", synth.alpha_style, "Style energy weight")->capture_default_str();
  s->add_option("--alpha-content", synth.alpha_content, "Content energy weight")->capture_default_str();
  s->add_option("--beta", synth.beta, "Mask channel weight; 15 to 35 works best")->capture_default_str();
  s->add_option("--patch-size", synth.patch_size, "Patch size in feature pixels")->capture_default_str();
  s->add_option("--stride", synth.stride, "Query patch stride")->capture_default_str();
  s->add_option("--style-layers", synth.style_layers, "Comma-separated style layers");
  s->add_option("--content-layers", synth.content_layers, "Comma-separated content layers");
  s->add_option("--levels", synth.levels, "Pyramid levels")->capture_default_str();
  s->add_option("--level-scale", synth.level_scale, "Scale between pyramid levels")->capture_default_str();
  s->add_option("--outer-iters", synth.outer_iters, "Assignment rounds per level")->capture_default_str();
  s->add_option("--lbfgs-iters", synth.lbfgs_iters, "L-BFGS iterations per round")->capture_default_str();
  s->add_option("--rotations", synth.rotations, "Style patch rotations in radians, comma-separated");
  s->add_option("--scales", synth.scales, "Style patch scales, comma-separated");
  s->add_option("--seed", synth.seed, "Random initialisation seed")->capture_default_str();
  s->add_option("--trace", synth.trace, "Write the energy trace CSV here");
  s->add_option("--dump-nn", synth.dump_nn, "Directory for nearest-neighbour maps (.mmt)");

  MasksArgs masks;
  auto* m = app.add_subcommand("masks", "Build soft semantic masks");
  m->add_option("--image", masks.image, "Image the masks belong to (PNG)")->required();
  m->add_option("--out-dir", masks.out_dir, "Directory for mask PNGs and manifest.toml")->required();
  m->add_option("--probs", masks.probs, "Raw probability maps (.mmt)");
  m->add_option("--labels", masks.labels, "Comma-separated class labels for --probs channels");
  m->add_option("--pair-image", masks.pair_image, "Second image processed alongside (PNG)");
  m->add_option("--pair-probs", masks.pair_probs, "Probability maps of the second image (.mmt)");
  m->add_option("--pair-out-dir", masks.pair_out_dir, "Output directory for the second image");
  m->add_option("--landmarks", masks.landmarks, "68-point landmark file");
  m->add_option("--pair-landmarks", masks.pair_landmarks, "Landmark file of the second image");
  m->add_option("--steps", masks.steps, "Comma-separated: rescale,topk,skin,facial,blur,composite")
      ->capture_default_str();
  m->add_option("--k", masks.k, "Masks kept by topk")->capture_default_str();
  m->add_option("--blur-radius", masks.blur_radius, "Blur radius in pixels")->capture_default_str();
  m->add_option("--face-extension", masks.face_extension, "Upward face extension, fraction of face height")
      ->capture_default_str();
  m->add_option("--skin-min-luma", masks.skin.min_luma, "Minimum luma for skin pixels")->capture_default_str();
  m->add_option("--skin-cb-low", masks.skin.cb_low, "Lower Cb bound")->capture_default_str();
  m->add_option("--skin-cb-high", masks.skin.cb_high, "Upper Cb bound")->capture_default_str();
  m->add_option("--skin-cr-low", masks.skin.cr_low, "Lower Cr bound")->capture_default_str();
  m->add_option("--skin-cr-high", masks.skin.cr_high, "Upper Cr bound")->capture_default_str();

  WeightsArgs weights;
  auto* w = app.add_subcommand("weights", "Create or inspect weight files");
  w->require_subcommand(1);
  auto* gen = w->add_subcommand("gen-toy", "Write the fixed-seed toy network");
  gen->add_option("--seed", weights.seed, "Weight seed")->capture_default_str();
  gen->add_option("--out", weights.out, "Output weight file")->required();
  auto* inspect = w->add_subcommand("inspect", "Print the layer table and checksums");
  inspect->add_option("file", weights.file, "Weight file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, *s, out, err);
    if (m->parsed()) return cmd_masks(masks, out);
    if (gen->parsed()) return cmd_gen_toy(weights, out);
    if (inspect->parsed()) return cmd_inspect(weights, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what();
    if (e.offset() != FormatError::kNoOffset) err << " [offset " << e.offset() << "]";
    err << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  err << "usage error: no command given\n";
  return kExitUsage;
}

}  // namespace mmrf::cli
