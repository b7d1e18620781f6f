#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

namespace mmrf::oracle {

namespace {

Tensor conv(const Tensor& in, const LayerSpec& layer, const ConvWeights& w) {
  const int k = layer.kernel_size;
  const int pad = k / 2;
  Tensor out(in.height(), in.width(), layer.out_channels);
  for (int o = 0; o < layer.out_channels; ++o)
    for (int r = 0; r < in.height(); ++r)
      for (int c = 0; c < in.width(); ++c) {
        double acc = w.bias[o];
        for (int i = 0; i < layer.in_channels; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int y = r + ky - pad;
              const int x = c + kx - pad;
              if (y < 0 || x < 0 || y >= in.height() || x >= in.width()) continue;
              acc += static_cast<double>(w.kernel[((o * layer.in_channels + i) * k + ky) * k + kx]) * in(y, x, i);
            }
        out(r, c, o) = static_cast<float>(acc);
      }
  return out;
}

Tensor pool(const Tensor& in, const LayerSpec& layer) {
  const int n = layer.window;
  Tensor out(in.height() / n, in.width() / n, in.channels());
  for (int r = 0; r < out.height(); ++r)
    for (int c = 0; c < out.width(); ++c)
      for (int ch = 0; ch < in.channels(); ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        for (int dy = 0; dy < n; ++dy)
          for (int dx = 0; dx < n; ++dx) {
            const double v = in(r * n + dy, c * n + dx, ch);
            best = std::max(best, v);
            sum += v;
          }
        out(r, c, ch) = static_cast<float>(layer.mode == PoolMode::max ? best : sum / (n * n));
      }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::map<std::string, Tensor> naive_forward(const FeatureNetwork& net, const Tensor& image) {
  std::map<std::string, Tensor> out;
  Tensor x = image;
  if (const auto& offsets = net.input_offsets()) {
    for (int r = 0; r < x.height(); ++r)
      for (int c = 0; c < x.width(); ++c)
        for (int ch = 0; ch < 3; ++ch) x(r, c, ch) -= (*offsets)[ch];
  }
  std::size_t conv_index = 0;
  for (const LayerSpec& layer : net.layers()) {
    switch (layer.kind) {
      case LayerKind::conv:
        x = conv(x, layer, net.conv_weights()[conv_index++]);
        break;
      case LayerKind::relu:
        for (float& v : x.data()) v = std::max(v, 0.0f);
        break;
      case LayerKind::pool:
        x = pool(x, layer);
        break;
    }
    out[layer.name] = x;
  }
  return out;
}

Map64 Map64::from(const Tensor& t) {
  Map64 m{t.height(), t.width(), t.channels(), {}};
  m.v.assign(t.data().begin(), t.data().end());
  return m;
}

std::map<std::string, Map64> forward64(const FeatureNetwork& net, const Map64& image, Pattern* record,
                                       const Pattern* freeze) {
  std::map<std::string, Map64> out;
  Map64 x = image;
  if (const auto& offsets = net.input_offsets()) {
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c)
        for (int ch = 0; ch < 3; ++ch) x.at(r, c, ch) -= (*offsets)[ch];
  }
  std::size_t conv_index = 0, relu_pos = 0, pool_pos = 0;
  for (const LayerSpec& layer : net.layers()) {
    if (layer.kind == LayerKind::conv) {
      const ConvWeights& w = net.conv_weights()[conv_index++];
      const int k = layer.kernel_size, pad = k / 2;
      Map64 y{x.h, x.w, layer.out_channels, std::vector<double>(static_cast<std::size_t>(x.h) * x.w * layer.out_channels)};
      for (int o = 0; o < layer.out_channels; ++o)
        for (int r = 0; r < x.h; ++r)
          for (int c = 0; c < x.w; ++c) {
            double acc = w.bias[o];
            for (int i = 0; i < layer.in_channels; ++i)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const int yy = r + ky - pad, xx = c + kx - pad;
                  if (yy < 0 || xx < 0 || yy >= x.h || xx >= x.w) continue;
                  acc += double(w.kernel[((o * layer.in_channels + i) * k + ky) * k + kx]) * x.at(yy, xx, i);
                }
            y.at(r, c, o) = acc;
          }
      x = std::move(y);
    } else if (layer.kind == LayerKind::relu) {
      for (double& v : x.v) {
        const bool on = freeze ? freeze->relu.at(relu_pos) != 0 : v > 0.0;
        if (record) record->relu.push_back(on);
        ++relu_pos;
        if (!on) v = 0.0;
      }
    } else {
      const int n = layer.window;
      Map64 y{x.h / n, x.w / n, x.c, std::vector<double>(static_cast<std::size_t>(x.h / n) * (x.w / n) * x.c)};
      for (int r = 0; r < y.h; ++r)
        for (int c = 0; c < y.w; ++c)
          for (int ch = 0; ch < x.c; ++ch) {
            if (layer.mode == PoolMode::average) {
              double s = 0.0;
              for (int d = 0; d < n * n; ++d) s += x.at(r * n + d / n, c * n + d % n, ch);
              y.at(r, c, ch) = s / (n * n);
              continue;
            }
            int best = 0;
            if (freeze) {
              best = freeze->pool.at(pool_pos);
            } else {
              for (int d = 1; d < n * n; ++d)
                if (x.at(r * n + d / n, c * n + d % n, ch) > x.at(r * n + best / n, c * n + best % n, ch)) best = d;
            }
            if (record) record->pool.push_back(best);
            ++pool_pos;
            y.at(r, c, ch) = x.at(r * n + best / n, c * n + best % n, ch);
          }
      x = std::move(y);
    }
    out[layer.name] = x;
  }
  return out;
}

double total_energy64(const LevelContext& ctx, const Map64& image, Pattern* pattern) {
  const auto acts = forward64(*ctx.net, image, pattern);
  const int t = ctx.patch_size;
  double style = 0.0;
  for (const auto& layer : ctx.style) {
    const Map64& f = acts.at(layer.layer);
    const Tensor& wm = layer.weighted_masks;
    std::size_t i = 0;
    for (int r = 0; r + t <= f.h; r += ctx.stride)
      for (int c = 0; c + t <= f.w; c += ctx.stride, ++i) {
        const auto entry = layer.dictionary.entry(layer.assignment.index.at(i));
        std::size_t k = 0;
        for (int dy = 0; dy < t; ++dy)
          for (int dx = 0; dx < t; ++dx) {
            for (int ch = 0; ch < f.c; ++ch, ++k) {
              const double d = f.at(r + dy, c + dx, ch) - entry[k];
              style += d * d;
            }
            for (int ch = 0; ch < wm.channels(); ++ch, ++k) {
              const double d = double(wm(r + dy, c + dx, ch)) - entry[k];
              style += d * d;
            }
          }
      }
  }
  double content = 0.0;
  for (const auto& layer : ctx.content) {
    const Map64& f = acts.at(layer.layer);
    for (std::size_t i = 0; i < f.v.size(); ++i) {
      const double d = f.v[i] - layer.target.data()[i];
      content += d * d;
    }
  }
  return ctx.alpha_style * style + ctx.alpha_content * content;
}

std::vector<int> brute_force_ncc(const std::vector<std::vector<double>>& queries,
                                 const std::vector<std::vector<double>>& entries) {
  std::vector<int> best(queries.size(), -1);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double qn = std::sqrt(dot(queries[i], queries[i]));
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < entries.size(); ++j) {
      const double en = std::sqrt(dot(entries[j], entries[j]));
      const double score = (qn == 0.0 || en == 0.0) ? 0.0 : dot(queries[i], entries[j]) / (qn * en);
      if (score > best_score) {
        best_score = score;
        best[i] = static_cast<int>(j);
      }
    }
  }
  return best;
}

std::vector<int> brute_force_distance(const std::vector<std::vector<double>>& queries,
                                      const std::vector<std::vector<double>>& entries) {
  std::vector<int> best(queries.size(), -1);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < entries.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < queries[i].size(); ++k) {
        const double e = queries[i][k] - entries[j][k];
        d += e * e;
      }
      if (d < best_d) {
        best_d = d;
        best[i] = static_cast<int>(j);
      }
    }
  }
  return best;
}

std::vector<double> window(const Tensor& map, int row, int col, int t) {
  std::vector<double> v;
  for (int dy = 0; dy < t; ++dy)
    for (int dx = 0; dx < t; ++dx)
      for (int ch = 0; ch < map.channels(); ++ch) v.push_back(map(row + dy, col + dx, ch));
  return v;
}

bool skin(double r, double g, double b) {
  r *= 255.0;
  g *= 255.0;
  b *= 255.0;
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  const double cb = 128.0 + (b - y) / 1.772;
  const double cr = 128.0 + (r - y) / 1.402;
  return y > 80.0 && cb >= 77.0 && cb <= 127.0 && cr >= 133.0 && cr <= 173.0;
}

std::vector<std::string> top_k(const SoftMaskSet& a, const SoftMaskSet& b, int k) {
  auto mean = [](const SoftMaskSet& s, const std::string& label) {
    const int idx = static_cast<int>(std::find(s.labels().begin(), s.labels().end(), label) - s.labels().begin());
    double sum = 0.0;
    for (int r = 0; r < s.height(); ++r)
      for (int c = 0; c < s.width(); ++c) sum += s.masks()(r, c, idx);
    return sum / (static_cast<double>(s.height()) * s.width());
  };
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& label : a.labels()) scored.emplace_back((mean(a, label) + mean(b, label)) / 2.0, label);
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    return x.first > y.first || (x.first == y.first && x.second < y.second);
  });
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<std::pair<int, int>> bresenham(int x0, int y0, int x1, int y1) {
  std::vector<std::pair<int, int>> pts;
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    pts.emplace_back(x0, y0);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
  return pts;
}

double directional_difference(const std::function<double(const std::vector<double>&)>& f,
                              const std::vector<double>& x, const std::vector<double>& direction, double eps) {
  std::vector<double> plus = x, minus = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus[i] += eps * direction[i];
    minus[i] -= eps * direction[i];
  }
  return (f(plus) - f(minus)) / (2.0 * eps);
}

}  // namespace mmrf::oracle
