#pragma once

#include <span>

namespace avglemma {

struct GaussRule {
  std::span<const double> nodes;    // on [-1, 1]
  std::span<const double> weights;
};

/// Gauss-Legendre rule with n points; n in {4, 8, 10, 16, 24}.
GaussRule gauss_legendre(int n);

/// Composite Gauss-Legendre integral of f over [a, b] with `panels` equal panels.
template <class F>
auto integrate_gl(F&& f, double a, double b, int panels = 1, int order = 16) {
  const GaussRule rule = gauss_legendre(order);
  const double h = (b - a) / panels;
  decltype(f(a)) sum{};
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      sum += rule.weights[i] * 0.5 * h * f(mid + 0.5 * h * rule.nodes[i]);
  }
  return sum;
}

}  // namespace avglemma
