#include "mmrf/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "mmrf/random.hpp"

namespace mmrf {

void SynthesisConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid synthesis config: " + what); };
  if (!(alpha_style >= 0.0) || !(alpha_content >= 0.0)) fail("alpha weights must be >= 0");
  if (!(beta >= 0.0)) fail("beta must be >= 0");
  if (patch_size < 1 || patch_size % 2 == 0) fail("patch size must be odd and >= 1");
  if (stride < 1) fail("stride must be >= 1");
  if (pyramid_levels < 1) fail("pyramid levels must be >= 1");
  if (!(level_scale > 0.0 && level_scale < 1.0)) fail("level scale must lie in (0, 1)");
  if (outer_iterations < 0 || lbfgs_iterations < 0) fail("iteration counts must be >= 0");
  if (lbfgs_memory < 1 || line_search_steps < 1) fail("L-BFGS memory and line-search steps must be >= 1");
  if (rotations.empty() || scales.empty()) fail("rotations and scales must be non-empty");
  for (double s : scales)
    if (!(s > 0.0)) fail("scales must be positive");
}

std::vector<std::string> default_style_layers(const FeatureNetwork& net) {
  if (net.has_layer("relu3_1") && net.has_layer("relu4_1")) return {"relu3_1", "relu4_1"};
  std::vector<std::string> layers;
  for (const LayerSpec& l : net.layers()) {
    if (l.kind == LayerKind::relu && l.name.ends_with("_1")) layers.push_back(l.name);
  }
  if (layers.empty()) layers.push_back(net.layers().back().name);
  return layers;
}

std::vector<std::string> default_content_layers(const FeatureNetwork& net) {
  const auto style = default_style_layers(net);
  return {style.back()};
}

LevelContext prepare_level(const FeatureNetwork& net, const Tensor& content, const Tensor& style,
                           const SoftMaskSet& content_masks, const SoftMaskSet& style_masks,
                           const SynthesisConfig& cfg) {
  LevelContext ctx;
  ctx.net = &net;
  ctx.alpha_style = cfg.alpha_style;
  ctx.alpha_content = cfg.alpha_content;
  ctx.patch_size = cfg.patch_size;
  ctx.stride = cfg.stride;
  const auto style_layers = cfg.style_layers.empty() ? default_style_layers(net) : cfg.style_layers;
  const auto content_layers = cfg.content_layers.empty() ? default_content_layers(net) : cfg.content_layers;
  const auto beta = static_cast<float>(cfg.beta);

  for (const auto& name : style_layers) {
    for (const auto* img : {&content, &style}) {
      const auto shape = net.output_shape(name, img->height(), img->width());
      if (shape.height < cfg.patch_size || shape.width < cfg.patch_size) {
        std::ostringstream msg;
        msg << "layer " << name << " is " << shape.height << "x" << shape.width << " for a " << img->height() << "x"
            << img->width() << " " << (img == &content ? "content" : "style")
            << " level, smaller than one patch; use fewer pyramid levels";
        throw ShapeError(msg.str());
      }
    }
  }

  const FeaturePyramid style_features = net.forward(style, style_layers);
  const auto content_shape = [&](const std::string& name) { return net.output_shape(name, content.height(), content.width()); };
  for (const auto& name : style_layers) {
    const Tensor& feats = style_features.at(name);
    const Tensor style_w = resample_bilinear(style_masks.masks(), feats.height(), feats.width());
    const auto shape = content_shape(name);
    ctx.style.push_back({name,
                         build_dictionary(feats, style_w, beta, cfg.patch_size, cfg.rotations, cfg.scales),
                         weighted_masks(content_masks, shape.height, shape.width, beta),
                         {}});
  }
  const FeaturePyramid content_features = net.forward(content, content_layers);
  for (const auto& name : content_layers) ctx.content.push_back({name, content_features.at(name)});
  return ctx;
}

namespace {

std::vector<std::string> captured_layers(const LevelContext& ctx) {
  std::set<std::string> names;
  for (const auto& s : ctx.style) names.insert(s.layer);
  for (const auto& c : ctx.content) names.insert(c.layer);
  return {names.begin(), names.end()};
}

}  // namespace

void reassign(LevelContext& ctx, const Tensor& x, MatchMetric metric) {
  std::vector<std::string> names;
  for (const auto& s : ctx.style) names.push_back(s.layer);
  const FeaturePyramid feats = ctx.net->forward(x, names);
  for (auto& s : ctx.style) {
    const PatchSet queries = query_patches(feats.at(s.layer), s.weighted_masks, ctx.patch_size, ctx.stride);
    s.assignment = find_nn(queries, s.dictionary, metric);
  }
}

EnergyBreakdown total_energy_and_grad(const Tensor& x, const LevelContext& ctx) {
  const FeaturePyramid feats = ctx.net->forward(x, captured_layers(ctx));
  FeaturePyramid grads;
  auto accumulate = [&](const std::string& layer, const Tensor& g, double weight) {
    auto it = grads.find(layer);
    if (it == grads.end()) it = grads.emplace(layer, Tensor(g.height(), g.width(), g.channels())).first;
    auto dst = it->second.data();
    auto src = g.data();
    const auto w = static_cast<float>(weight);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
  };

  EnergyBreakdown out;
  for (const auto& s : ctx.style) {
    StyleEnergy e = style_energy_and_grad(feats.at(s.layer), s.weighted_masks, s.assignment, s.dictionary,
                                          ctx.patch_size, ctx.stride);
    out.style += e.total();
    out.style_linear_beta += e.linear_beta_form();
    if (ctx.alpha_style != 0.0) accumulate(s.layer, e.grad, ctx.alpha_style);
  }
  for (const auto& c : ctx.content) {
    ContentEnergy e = content_energy_and_grad(feats.at(c.layer), c.target);
    out.content += e.energy;
    if (ctx.alpha_content != 0.0) accumulate(c.layer, e.grad, ctx.alpha_content);
  }
  out.total = ctx.alpha_style * out.style + ctx.alpha_content * out.content;
  out.grad = ctx.net->backward_to_input(x, grads);
  return out;
}

SynthesisResult synthesize(const Tensor& content, const Tensor& style, const SoftMaskSet& content_masks,
                           const SoftMaskSet& style_masks, const FeatureNetwork& net, const SynthesisConfig& cfg,
                           const TraceCallback& on_row) {
  cfg.validate();
  if (content.channels() != 3 || style.channels() != 3) {
    throw ShapeError("content and style must be RGB images");
  }
  if (content_masks.height() != content.height() || content_masks.width() != content.width()) {
    throw ShapeError("content masks " + content_masks.masks().shape_string() + " do not match content image " +
                     content.shape_string());
  }
  if (style_masks.height() != style.height() || style_masks.width() != style.width()) {
    throw ShapeError("style masks " + style_masks.masks().shape_string() + " do not match style image " +
                     style.shape_string());
  }
  const SoftMaskSet aligned_style = style_masks.reordered(content_masks.labels());
  if (aligned_style.count() != style_masks.count()) {
    throw ShapeError("style masks carry labels the content masks lack");
  }
  for (const auto& name : cfg.style_layers) net.layer_index(name);
  for (const auto& name : cfg.content_layers) net.layer_index(name);

  const auto level_size = [&](const Tensor& img, int level) {
    const double f = std::pow(cfg.level_scale, level);
    return std::pair{std::max(1, static_cast<int>(std::lround(img.height() * f))),
                     std::max(1, static_cast<int>(std::lround(img.width() * f)))};
  };

  const auto start = std::chrono::steady_clock::now();
  SynthesisResult result;
  const int coarsest = cfg.pyramid_levels - 1;
  Tensor x;
  {
    const auto [h, w] = level_size(content, coarsest);
    x = Tensor(h, w, 3);
    Rng rng(cfg.seed);
    for (float& v : x.data()) v = static_cast<float>(rng.uniform());
  }

  LbfgsOptions lbfgs;
  lbfgs.memory = cfg.lbfgs_memory;
  lbfgs.max_iterations = cfg.lbfgs_iterations;
  lbfgs.max_line_search_steps = cfg.line_search_steps;

  for (int level = coarsest; level >= 0; --level) {
    const auto [ch, cw] = level_size(content, level);
    const auto [sh, sw] = level_size(style, level);
    if (x.height() != ch || x.width() != cw) x = resample_bilinear(x, ch, cw);
    if (cfg.outer_iterations == 0) continue;

    const Tensor content_level = resample_bilinear(content, ch, cw);
    const Tensor style_level = resample_bilinear(style, sh, sw);
    const SoftMaskSet content_masks_level(
        clamped(resample_bilinear(content_masks.masks(), ch, cw), 0.0f, 1.0f), content_masks.labels());
    const SoftMaskSet style_masks_level(clamped(resample_bilinear(aligned_style.masks(), sh, sw), 0.0f, 1.0f),
                                        aligned_style.labels());
    LevelContext ctx = prepare_level(net, content_level, style_level, content_masks_level, style_masks_level, cfg);

    TensorObjective objective = [&](const Tensor& xi, Tensor& grad) {
      EnergyBreakdown e = total_energy_and_grad(xi, ctx);
      grad = std::move(e.grad);
      return e.total;
    };

    for (int iter = 0; iter < cfg.outer_iterations; ++iter) {
      SolveLog log;
      log.level = level;
      log.iteration = iter;
      if (iter > 0) log.energy_before_reassign = total_energy_and_grad(x, ctx).total;
      reassign(ctx, x);

      LbfgsResult report;
      x = clamped(lbfgs_minimize(objective, x, lbfgs, &report), 0.0f, 1.0f);
      log.accepted_energies = std::move(report.accepted_energies);
      log.energy_after_reassign = log.accepted_energies.front();
      log.line_search_failed = report.line_search_failed;
      result.solves.push_back(std::move(log));

      const EnergyBreakdown e = total_energy_and_grad(x, ctx);
      TraceRow row{level, iter, e.total, e.style, e.content,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                   e.style_linear_beta};
      result.trace.push_back(row);
      if (on_row) on_row(row);
    }
    if (level == 0) {
      for (auto& s : ctx.style) {
        const auto shape = net.output_shape(s.layer, ch, cw);
        result.assignments.push_back({s.layer, (shape.height - cfg.patch_size) / cfg.stride + 1,
                                      (shape.width - cfg.patch_size) / cfg.stride + 1, std::move(s.assignment)});
      }
    }
  }
  result.image = clamped(x, 0.0f, 1.0f);
  return result;
}

double psnr(const Tensor& a, const Tensor& b) {
  const double mse = sum_squares(sub(a, b)) / static_cast<double>(a.size());
  if (mse == 0.0) return INFINITY;
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace mmrf
