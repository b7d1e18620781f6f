// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "fixtures.hpp"
#include "mmrf/features.hpp"
#include "mmrf/io.hpp"
#include "mmrf/masks.hpp"
#include "mmrf/mrf.hpp"
#include "mmrf/random.hpp"
#include "mmrf/synthesis.hpp"
#include "oracles.hpp"
#include "pipeline_check.hpp"

using namespace mmrf;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ------------------------------------------------------------ 1: NN oracle

Verdict nn_oracle() {
  Rng rng(2024);
  int mismatches = 0, ties = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int dim = 1 + static_cast<int>(rng.below(54));
    const int p = 1 + static_cast<int>(rng.below(64));
    const int ps = 1 + static_cast<int>(rng.below(256));
    std::vector<std::vector<double>> entries(ps, std::vector<double>(dim));
    for (int j = 0; j < ps; ++j) {
      const double u = rng.uniform();
      if (j > 0 && u < 0.15) {
        // Exact or power-of-two-scaled duplicate of an earlier entry: a tie.
        entries[j] = entries[rng.below(j)];
        if (u < 0.07)
          for (double& v : entries[j]) v *= 4.0;
        ++ties;
      } else if (u < 0.18) {
        std::fill(entries[j].begin(), entries[j].end(), 0.0);
      } else {
        for (double& v : entries[j]) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      }
    }
    std::vector<std::vector<double>> queries(p, std::vector<double>(dim));
    for (int i = 0; i < p; ++i) {
      const double u = rng.uniform();
      if (u < 0.2) {
        queries[i] = entries[rng.below(ps)];
      } else if (u < 0.23) {
        std::fill(queries[i].begin(), queries[i].end(), 0.0);
      } else {
        for (double& v : queries[i]) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      }
    }

    PatchSet q;
    q.patch_size = 1;
    q.channels = dim;
    q.grid_rows = 1;
    q.grid_cols = p;
    for (int i = 0; i < p; ++i) {
      q.values.insert(q.values.end(), queries[i].begin(), queries[i].end());
      q.positions.emplace_back(0, i);
    }
    std::vector<float> flat;
    std::vector<PatchProvenance> prov;
    for (int j = 0; j < ps; ++j) {
      flat.insert(flat.end(), entries[j].begin(), entries[j].end());
      prov.push_back({0, j, 0, 0});
    }
    const PatchDictionary dict(1, dim, 0, 1.0f, flat, prov);
    const NNAssignment got = find_nn(q, dict);
    const std::vector<int> want = oracle::brute_force_ncc(queries, entries);
    for (int i = 0; i < p; ++i) mismatches += got.index[i] != want[i];
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatching queries; " + std::to_string(ties) +
                               " duplicated entries exercised tie-breaks"};
}

// ------------------------------------------------------------ 2: gradient

Verdict pipeline_gradient() {
  double worst = 0.0;
  int directions = 0, kinks = 0, failing = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int size = 8 + static_cast<int>(seed % 5);  // 8..12
    const int masks = 1 + static_cast<int>(seed % 3);  // 1..3
    const auto r = testing::check_pipeline_gradient(seed, size, masks, 10, 1e-5);
    worst = std::max(worst, r.worst_relative);
    directions += r.directions;
    kinks += r.kink_crossings;
    failing += r.directions < 10 || r.worst_relative > 2e-3;
  }
  return {failing == 0, std::to_string(failing) + "/20 instances fail; worst relative error " +
                            fmt("%.2e", worst) + " over " + std::to_string(directions) + " directions (" +
                            std::to_string(kinks) + " crossed a relu/pool kink)"};
}

// ------------------------------------------------------------ 3, 6, 7: self transfer

struct SelfTransfer {
  std::string dir;
  bool ran = false;
  std::string error;
  double seconds = 0.0;
  double psnr = 0.0;
};

bool run_synth(const std::string& dir, const std::string& tag, std::string& error) {
  std::ostringstream out, err;
  const int code = cli::run({"synth", "--content", dir + "/content.png", "--style", dir + "/content.png",
                             "--content-masks", dir + "/masks.toml", "--style-masks", dir + "/masks.toml",
                             "--weights", dir + "/toy.mmw", "--out", dir + "/" + tag + ".png", "--trace",
                             dir + "/" + tag + ".csv", "--seed", "0"},
                            out, err);
  if (code != 0) error = err.str();
  return code == 0;
}

SelfTransfer self_transfer_once() {
  SelfTransfer st;
  st.dir = testing::temp_dir("acceptance_self");
  Tensor content = testing::scene_image(64, 64, 7);
  for (float& v : content.data()) v = to_byte(v) / 255.0f;
  write_png(st.dir + "/content.png", content);
  const SoftMaskSet masks = testing::disc_masks(64, 64);
  MaskManifest m{st.dir + "/content.png", std::nullopt, {}};
  for (int k = 0; k < masks.count(); ++k) {
    write_png(st.dir + "/" + masks.labels()[k] + ".png", masks.channel(k));
    m.masks.emplace_back(masks.labels()[k], masks.labels()[k] + ".png");
  }
  write_manifest(st.dir + "/masks.toml", m);
  save_weights(st.dir + "/toy.mmw", make_toy_network(42));

  const auto t0 = std::chrono::steady_clock::now();
  st.ran = run_synth(st.dir, "first", st.error);
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (st.ran) st.psnr = psnr(read_png_rgb(st.dir + "/first.png"), read_png_rgb(st.dir + "/content.png"));
  return st;
}

Verdict self_transfer(const SelfTransfer& st) {
  if (!st.ran) return {false, "synth failed: " + st.error};
  return {st.psnr >= 25.0 && st.seconds < 300.0,
          "PSNR " + fmt("%.2f", st.psnr) + " dB (need >= 25) in " + fmt("%.1f", st.seconds) + " s (need < 300)"};
}

Verdict monotonicity(const SelfTransfer& st) {
  if (!st.ran) return {false, "no run to inspect"};
  // level,iteration,step,energy rows; each (level, iteration) is one solve.
  std::istringstream in(read_text_file(st.dir + "/first.solves.csv"));
  std::string line;
  std::getline(in, line);
  std::map<std::pair<int, int>, std::vector<double>> solves;
  while (std::getline(in, line)) {
    int level, iter, step;
    double e;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%lf", &level, &iter, &step, &e) != 4) return {false, "bad row: " + line};
    solves[{level, iter}].push_back(e);
  }
  int increases = 0;
  std::size_t steps = 0;
  for (const auto& [key, energies] : solves) {
    steps += energies.size();
    for (std::size_t i = 1; i < energies.size(); ++i) increases += energies[i] > energies[i - 1];
  }
  std::istringstream trace(read_text_file(st.dir + "/first.csv"));
  std::getline(trace, line);
  int rows = 0, non_finite = 0;
  while (std::getline(trace, line)) {
    ++rows;
    int level, iter;
    double t, s, c;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf", &level, &iter, &t, &s, &c) != 5 || !std::isfinite(t))
      ++non_finite;
  }
  return {increases == 0 && non_finite == 0 && !solves.empty(),
          std::to_string(solves.size()) + " solves, " + std::to_string(steps) + " accepted steps, " +
              std::to_string(increases) + " increases; " + std::to_string(rows) + " trace rows"};
}

Verdict determinism(const SelfTransfer& st) {
  if (!st.ran) return {false, "no first run"};
  std::string error;
  if (!run_synth(st.dir, "second", error)) return {false, "rerun failed: " + error};
  const bool png = read_file_bytes(st.dir + "/first.png") == read_file_bytes(st.dir + "/second.png");
  const bool csv = read_file_bytes(st.dir + "/first.csv") == read_file_bytes(st.dir + "/second.csv");
  const bool solves =
      read_file_bytes(st.dir + "/first.solves.csv") == read_file_bytes(st.dir + "/second.solves.csv");
  return {png && csv && solves, std::string("image ") + (png ? "identical" : "differs") + ", trace " +
                                    (csv ? "identical" : "differs") + ", solve log " +
                                    (solves ? "identical" : "differs")};
}

// ------------------------------------------------------------ 4: beta

Verdict beta_semantics() {
  // Style map 3x6: the window at column 0 repeats at column 3 with the
  // opposite one-hot mask.
  Rng rng(11);
  const int channels = 4;
  Tensor style(3, 6, channels);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int ch = 0; ch < channels; ++ch) {
        style(r, c, ch) = static_cast<float>(rng.uniform());
        style(r, c + 3, ch) = style(r, c, ch);
      }
  Tensor style_masks(3, 6, 2);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 6; ++c) style_masks(r, c, c < 3 ? 0 : 1) = 1.0f;
  const double rot[] = {0.0}, scl[] = {1.0};

  int wrong = 0, queries = 0, mask_ignored = 0;
  for (float beta : {0.0f, 1e4f}) {
    const PatchDictionary dict = build_dictionary(style, style_masks, beta, 3, rot, scl);
    std::vector<std::vector<double>> feature_entries;
    for (int c = 0; c + 3 <= 6; ++c) feature_entries.push_back(oracle::window(style, 0, c, 3));
    for (int i = 0; i < 20; ++i) {
      // Half the queries repeat the shared window, half are random.
      Tensor content = testing::random_tensor(3, 3, channels, 100 + i);
      if (i < 10)
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            for (int ch = 0; ch < channels; ++ch) content(r, c, ch) = style(r, c, ch);
      const int label = i % 2;
      Tensor weighted(3, 3, 2);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) weighted(r, c, label) = beta;
      const NNAssignment a = find_nn(query_patches(content, weighted, 3, 1), dict);
      const int col = dict.provenance(a.index[0]).col;
      ++queries;
      if (beta == 0.0f) {
        const int want = oracle::brute_force_ncc({oracle::window(content, 0, 0, 3)}, feature_entries)[0];
        wrong += col != want;
        mask_ignored += label == 1 && col == 0;
      } else {
        wrong += col != (label == 0 ? 0 : 3);
      }
    }
  }
  return {wrong == 0 && mask_ignored > 0,
          std::to_string(wrong) + "/" + std::to_string(queries) + " wrong assignments; " +
              std::to_string(mask_ignored) + " beta=0 queries took the feature-equal patch of the other region"};
}

// ------------------------------------------------------------ 5: masks

Verdict mask_pipeline() {
  std::vector<std::string> problems;
  std::vector<std::string> labels;
  for (int k = 0; k < 20; ++k) labels.push_back("class" + std::to_string(k));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SoftMaskSet a(testing::random_tensor(12, 9, 20, 300 + seed), labels);
    const SoftMaskSet b(testing::random_tensor(7, 11, 20, 400 + seed), labels);
    const auto [ka, kb] = select_top_k(a, b, 5);
    if (ka.labels() != oracle::top_k(a, b, 5) || kb.labels() != ka.labels()) problems.push_back("top-5");
  }

  const Tensor pixels = testing::random_tensor(25, 40, 3, 77);
  const Tensor skin = detect_skin(pixels);
  int skin_wrong = 0, accepted = 0;
  for (int r = 0; r < 25; ++r)
    for (int c = 0; c < 40; ++c) {
      const bool want = oracle::skin(pixels(r, c, 0), pixels(r, c, 1), pixels(r, c, 2));
      skin_wrong += (skin(r, c, 0) == 1.0f) != want;
      accepted += want;
    }
  if (skin_wrong) problems.push_back(std::to_string(skin_wrong) + " skin pixels");

  for (float v : {0.0f, 0.4f, 1.0f})
    if (!(blur_mask(Tensor(21, 17, 1, v), 5.0) == Tensor(21, 17, 1, v))) problems.push_back("constant blur");
  Tensor impulse(41, 41, 1);
  impulse(20, 20, 0) = 1.0f;
  const Tensor spread = blur_mask(impulse, 5.0);
  double mass = 0.0;
  for (float v : spread.data()) mass += v;
  if (std::abs(mass - 1.0) > 1e-5) problems.push_back("impulse mass " + fmt("%.8f", mass));

  const std::vector<std::pair<std::string, std::array<float, 3>>> palette{
      {"body", {1, 0, 0}}, {"background", {0, 1, 0}}, {"face", {0, 0, 1}},
      {"eyes", {0, 1, 1}}, {"nose", {1, 1, 0}},       {"mouth", {1, 0, 1}}};
  Tensor onehot(1, 6, 6);
  std::vector<std::string> names;
  for (int k = 0; k < 6; ++k) {
    onehot(0, k, k) = 1.0f;
    names.push_back(palette[k].first);
  }
  const Tensor rgb = composite_visualization(SoftMaskSet(onehot, names));
  for (int k = 0; k < 6; ++k)
    for (int ch = 0; ch < 3; ++ch)
      if (rgb(0, k, ch) != palette[k].second[ch]) problems.push_back("composite " + palette[k].first);

  std::string detail = problems.empty() ? "top-5 on 5 pairs, 1000 skin pixels (" + std::to_string(accepted) +
                                              " accepted), blur, composite all match"
                                        : "";
  for (const auto& p : problems) detail += (detail.empty() ? "" : ", ") + p;
  return {problems.empty(), detail};
}

// ------------------------------------------------------------ 8: conv oracle

Verdict conv_oracle() {
  const FeatureNetwork net = make_toy_network(42);
  std::vector<std::string> layers;
  for (const auto& l : net.layers()) layers.push_back(l.name);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor image = testing::random_tensor(16, 16, 3, 500 + seed);
    const FeaturePyramid got = net.forward(image, layers);
    const auto want = oracle::naive_forward(net, image);
    for (const auto& name : layers) {
      const Tensor& a = got.at(name);
      const Tensor& b = want.at(name);
      if (!a.same_shape(b)) return {false, name + " shape differs"};
      for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
    }
  }
  return {worst <= 1e-5, "max abs difference " + fmt("%.2e", worst) + " over 10 inputs, all layers"};
}

// ------------------------------------------------------------ 9: formats

Verdict round_trips() {
  const std::string dir = testing::temp_dir("acceptance_formats");
  std::vector<std::string> unstable;
  auto stable = [&](const std::string& name, const std::function<void(const std::string&)>& write,
                    const std::function<void(const std::string&, const std::string&)>& reread) {
    const std::string a = dir + "/" + name + ".a", b = dir + "/" + name + ".b";
    write(a);
    reread(a, b);
    if (read_file_bytes(a) != read_file_bytes(b)) unstable.push_back(name);
  };

  const FeatureNetwork toy = make_toy_network(42);
  const FeatureNetwork rnd = make_random_network(
      {LayerSpec::conv("c1", 3, 6, 5), LayerSpec::relu("r1"), LayerSpec::pool("p1", 3, PoolMode::average),
       LayerSpec::conv("c2", 6, 2, 1)},
      8);
  const FeatureNetwork with_mean(rnd.layers(), rnd.conv_weights(), std::array<float, 3>{0.4f, 0.5f, 0.6f});
  for (const auto& [name, net] : {std::pair{"toy.mmw", &toy}, std::pair{"random.mmw", &with_mean}}) {
    stable(name, [&](const std::string& p) { save_weights(p, *net); },
           [](const std::string& a, const std::string& b) { save_weights(b, load_weights(a)); });
  }
  stable("tensor.mmt", [](const std::string& p) { write_tensor_file(p, testing::random_tensor(9, 5, 4, 1, -3, 3)); },
         [](const std::string& a, const std::string& b) { write_tensor_file(b, read_tensor_file(a)); });
  const MaskManifest manifest{dir + "/img.png", dir + "/face.lmk", {{"face", "face.png"}, {"hair", "h/air.png"}}};
  stable("manifest.toml", [&](const std::string& p) { write_manifest(p, manifest); },
         [](const std::string& a, const std::string& b) { write_manifest(b, read_manifest(a)); });
  LandmarkSet lm;
  Rng rng(9);
  for (int i = 0; i < LandmarkSet::kCount; ++i) lm.points.push_back({rng.uniform(0, 200), rng.uniform(0, 150)});
  stable("face.lmk", [&](const std::string& p) { write_text_file(p, serialize_landmarks(lm)); },
         [](const std::string& a, const std::string& b) {
           write_text_file(b, serialize_landmarks(read_landmarks(a)));
         });

  std::string detail = unstable.empty() ? ".mmw (2), .mmt, manifest, landmarks byte-stable" : "unstable:";
  for (const auto& u : unstable) detail += " " + u;
  return {unstable.empty(), detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !v.pass;
    std::printf("criterion %d %s: %s  (%s; %.2f s)\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str(), s);
    std::fflush(stdout);
  };

  report(1, "nn-oracle", nn_oracle);
  report(2, "gradient", pipeline_gradient);
  SelfTransfer st;
  report(3, "self-transfer", [&] {
    st = self_transfer_once();
    return self_transfer(st);
  });
  report(4, "beta-semantics", beta_semantics);
  report(5, "mask-pipeline", mask_pipeline);
  report(6, "monotonicity", [&] { return monotonicity(st); });
  report(7, "determinism", [&] { return determinism(st); });
  report(8, "conv-oracle", conv_oracle);
  report(9, "round-trips", round_trips);
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
