#include "mmrf/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace mmrf {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct Pair {
  std::vector<double> s, y;
  double rho;
};

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsOptions& options) {
  const std::size_t n = x0.size();
  LbfgsResult result;
  std::vector<double> x = std::move(x0);
  std::vector<double> g(n);
  double fx = f(x, g);
  result.evaluations = 1;
  if (!std::isfinite(fx) || !finite(g)) throw OptimizerError("objective is not finite at the starting point");
  result.accepted_energies.push_back(fx);

  std::deque<Pair> history;
  std::vector<double> d(n), x_new(n), g_new(n), alpha_buf;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (max_abs(g) <= options.gradient_tolerance) {
      result.converged = true;
      break;
    }

    // Two-loop recursion: d = -H g.
    std::copy(g.begin(), g.end(), d.begin());
    alpha_buf.assign(history.size(), 0.0);
    for (std::size_t i = history.size(); i-- > 0;) {
      alpha_buf[i] = history[i].rho * dot(history[i].s, d);
      for (std::size_t k = 0; k < n; ++k) d[k] -= alpha_buf[i] * history[i].y[k];
    }
    double gamma;
    if (history.empty()) {
      gamma = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
    } else {
      const Pair& last = history.back();
      gamma = dot(last.s, last.y) / dot(last.y, last.y);
    }
    for (double& v : d) v *= gamma;
    for (std::size_t i = 0; i < history.size(); ++i) {
      const double beta = history[i].rho * dot(history[i].y, d);
      for (std::size_t k = 0; k < n; ++k) d[k] += (alpha_buf[i] - beta) * history[i].s[k];
    }
    for (double& v : d) v = -v;

    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      // Not a descent direction: restart from steepest descent.
      history.clear();
      const double scale = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
      for (std::size_t k = 0; k < n; ++k) d[k] = -scale * g[k];
      slope = dot(g, d);
    }

    double step = 1.0;
    bool accepted = false;
    double f_new = fx;
    for (int ls = 0; ls < options.max_line_search_steps; ++ls) {
      for (std::size_t k = 0; k < n; ++k) x_new[k] = x[k] + step * d[k];
      f_new = f(x_new, g_new);
      ++result.evaluations;
      if (std::isfinite(f_new) && finite(g_new) && f_new <= fx + options.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= options.shrink;
    }
    if (!accepted) {
      result.line_search_failed = true;
      break;
    }

    Pair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t k = 0; k < n; ++k) {
      pair.s[k] = x_new[k] - x[k];
      pair.y[k] = g_new[k] - g[k];
    }
    const double sy = dot(pair.s, pair.y);
    if (sy > options.curvature_floor) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    result.accepted_energies.push_back(fx);
    ++result.iterations;
  }
  // Armijo acceptance makes the last iterate the best one visited.
  result.x = std::move(x);
  result.energy = fx;
  return result;
}

Tensor lbfgs_minimize(const TensorObjective& f, const Tensor& x0, const LbfgsOptions& options, LbfgsResult* report) {
  Tensor x = x0;
  Tensor grad(x0.height(), x0.width(), x0.channels());
  Objective wrapped = [&](std::span<const double> v, std::span<double> g) {
    auto xd = x.data();
    for (std::size_t k = 0; k < v.size(); ++k) xd[k] = static_cast<float>(v[k]);
    std::fill(grad.data().begin(), grad.data().end(), 0.0f);
    const double energy = f(x, grad);
    auto gd = grad.data();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = gd[k];
    return energy;
  };
  std::vector<double> start(x0.data().begin(), x0.data().end());
  LbfgsResult result = lbfgs_minimize(wrapped, std::move(start), options);
  Tensor out(x0.height(), x0.width(), x0.channels());
  for (std::size_t k = 0; k < result.x.size(); ++k) out.data()[k] = static_cast<float>(result.x[k]);
  if (report) *report = std::move(result);
  return out;
}

}  // namespace mmrf
