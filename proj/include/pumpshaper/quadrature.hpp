#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>
#include <vector>

#include "pumpshaper/errors.hpp"

namespace pumpshaper::quad {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

namespace detail {

// Legendre P_n(x) and P_n'(x) by the three-term recurrence.
inline std::pair<double, double> legendre_with_derivative(std::size_t n, double x) {
  double p0 = 1.0;
  double p1 = x;
  for (std::size_t k = 2; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
    p0 = p1;
    p1 = p2;
  }
  const double dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
  return {p1, dp};
}

inline GaussLegendreRule compute_rule(std::size_t n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  if (n == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = 2.0;
    return rule;
  }
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = legendre_with_derivative(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre_with_derivative(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.weights[i] = w;
    rule.nodes[n - 1 - i] = x;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace detail

// Nodes and weights on [-1, 1]; rules are computed once per order and cached.
inline const GaussLegendreRule& gauss_legendre(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, GaussLegendreRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::compute_rule(n)).first;
  return it->second;
}

// Fixed-order Gauss-Legendre on [a, b].
template <typename F>
auto integrate_fixed(F&& f, double a, double b, std::size_t order) {
  const auto& rule = gauss_legendre(order);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  using R = decltype(f(a));
  R acc{};
  for (std::size_t i = 0; i < order; ++i) {
    acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  }
  return acc * half;
}

struct AdaptiveOptions {
  std::size_t start_order = 32;
  std::size_t max_order = 4096;
  double tolerance = 1e-10;  // absolute difference between successive orders
};

// Doubles the Gauss-Legendre order until two successive estimates agree to
// `tolerance` (relative to max(1, |estimate|)). Throws NumericalError when
// the order budget is exhausted.
template <typename F>
auto integrate_adaptive(F&& f, double a, double b, AdaptiveOptions opt = {}) {
  auto prev = integrate_fixed(f, a, b, opt.start_order);
  for (std::size_t order = 2 * opt.start_order; order <= opt.max_order; order *= 2) {
    auto cur = integrate_fixed(f, a, b, order);
    const double scale = std::max(1.0, static_cast<double>(std::abs(cur)));
    if (std::abs(cur - prev) < opt.tolerance * scale) return cur;
    prev = std::move(cur);
  }
  throw NumericalError("adaptive Gauss-Legendre quadrature did not converge");
}

}  // namespace pumpshaper::quad
