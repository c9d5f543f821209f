#include "avglemma/quadrature.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace avglemma {
namespace {

struct Table {
  std::vector<double> x, w;
};

Table build(int n) {
  Table t;
  t.x.resize(n);
  t.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    t.x[i] = x;
    t.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return t;
}

}  // namespace

GaussRule gauss_legendre(int n) {
  static const std::array<Table, 5> tables{build(4), build(8), build(10), build(16), build(24)};
  const Table* t = nullptr;
  switch (n) {
    case 4: t = &tables[0]; break;
    case 8: t = &tables[1]; break;
    case 10: t = &tables[2]; break;
    case 16: t = &tables[3]; break;
    case 24: t = &tables[4]; break;
    default: throw std::invalid_argument("unsupported Gauss-Legendre order");
  }
  return {t->x, t->w};
}

}  // namespace avglemma
