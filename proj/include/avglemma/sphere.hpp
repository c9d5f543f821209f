#pragma once

#include <functional>
#include <vector>

#include "avglemma/fields.hpp"

namespace avglemma {

/// Deterministic point set on the unit sphere S^{d-1} in R^d.
///
/// d = 2 uses equally spaced angles, d = 3 a Fibonacci lattice, and d >= 4 a
/// Kronecker sequence mapped through the inverse normal CDF and normalized.
class SphereSampler {
 public:
  SphereSampler(int ambient_dim, int count);

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Vec>& points() const noexcept { return points_; }
  /// Typical angular spacing between neighbouring points.
  double spacing() const noexcept { return spacing_; }

  /// `count` points in the spherical cap of angular radius `radius` around
  /// `center` (a unit vector), including the center itself.
  std::vector<Vec> cap(const Vec& center, double radius, int count) const;

 private:
  int dim_;
  double spacing_;
  std::vector<Vec> points_;
};

struct SphereExtremum {
  double value = 0.0;
  Vec point;
};

struct RefineOptions {
  int rounds = 3;
  int cap_points = 64;
  double shrink = 0.25;
};

/// Minimizes f over sampler points plus extra seeds, then refines in caps of
/// shrinking radius around the incumbent. Ties keep the lowest index.
SphereExtremum sphere_minimize(const SphereSampler& sampler,
                               const std::function<double(const Vec&)>& f,
                               const std::vector<Vec>& seeds = {}, RefineOptions opts = {});
SphereExtremum sphere_maximize(const SphereSampler& sampler,
                               const std::function<double(const Vec&)>& f,
                               const std::vector<Vec>& seeds = {}, RefineOptions opts = {});

}  // namespace avglemma
