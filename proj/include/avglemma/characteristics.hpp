#pragma once

#include <optional>
#include <vector>

#include "avglemma/fields.hpp"

namespace avglemma {

struct CharacteristicsOptions {
  /// RK4 steps per characteristic, independent of its length.
  int steps = 32;
  /// Samples per axis of the (t, x, w) patch grid.
  int samples = 5;
  double min_radius = 1e-3;
  /// Step of the fourth-order central differences in the residual.
  double fd_step = 2e-3;
  /// Step of the central differences for Jacobians.
  double jac_step = 1e-5;
  /// Maximum Newton iterations for the characteristic foot.
  int newton_iterations = 50;
};

/// Solution of dV/dt + a(V) . grad_x V = F(t, x, V) with V(t0, x; w) = w,
/// built from the characteristic system dx/ds = a(V), dV/ds = F(t0 + s, x, V).
/// V is evaluated pointwise: the foot xi with x(t - t0; xi, w) = x is found by
/// Newton iteration, then the velocity is integrated with RK4.
class CharacteristicsMap {
 public:
  CharacteristicsMap(VelocityField a, ForceField F, double t0, Vec x0, Vec v0, double radius,
                     CharacteristicsOptions opts);

  double t0() const noexcept { return t0_; }
  const Vec& x0() const noexcept { return x0_; }
  const Vec& v0() const noexcept { return v0_; }
  /// Patch half width in t, x and w (sup norm).
  double radius() const noexcept { return radius_; }
  const CharacteristicsOptions& options() const noexcept { return opts_; }

  /// V(t, x; w). Throws PreconditionError when the foot iteration fails.
  Vec V(double t, const Vec& x, const Vec& w) const;
  /// det d_w V.
  double jacobian(double t, const Vec& x, const Vec& w) const;
  /// dV/dt + a(V) . grad_x V - F(t, x, V), by fourth-order central differences.
  Vec residual(double t, const Vec& x, const Vec& w) const;

  /// State (x, V) after flowing from (t0, xi, w) for time s.
  std::pair<Vec, Vec> flow(const Vec& xi, const Vec& w, double s) const;

 private:
  VelocityField a_;
  ForceField F_;
  double t0_;
  Vec x0_, v0_;
  double radius_;
  CharacteristicsOptions opts_;
};

struct PatchPoint {
  double t = 0.0;
  Vec x, w;
};

struct PatchReport {
  double radius = 0.0;
  int shrinks = 0;
  double max_residual = 0.0;
  double min_jacobian = 0.0;
  PatchPoint worst_residual;
  std::size_t points = 0;
};

/// Builds the map on the patch |t - t0|, |x - x0|, |w - v0| <= radius and
/// halves the radius until the foot iteration succeeds and det d_w V > 0 at
/// every patch sample. Throws PreconditionError naming the offending point
/// once the radius drops below opts.min_radius.
CharacteristicsMap characteristics_diffeo(const VelocityField& a, const ForceField& F, double t0,
                                          const Vec& x0, const Vec& v0, double radius,
                                          CharacteristicsOptions opts = {},
                                          PatchReport* report = nullptr);

/// Residual and Jacobian extrema over the patch sample grid.
PatchReport check_patch(const CharacteristicsMap& map);

struct ConvergenceReport {
  std::vector<int> steps;
  std::vector<double> max_residual;
  /// -slope of log(residual) against log(steps).
  double order = 0.0;
};

/// Patch residual for each integrator step count, and the observed order.
ConvergenceReport residual_convergence(const VelocityField& a, const ForceField& F, double t0,
                                       const Vec& x0, const Vec& v0, double radius,
                                       const std::vector<int>& steps,
                                       CharacteristicsOptions opts = {});

}  // namespace avglemma
