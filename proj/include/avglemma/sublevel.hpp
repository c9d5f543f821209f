#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avglemma/fields.hpp"
#include "avglemma/sphere.hpp"

namespace avglemma {

struct MeasureOptions {
  /// Grid cells for the one-dimensional interval method.
  int cells = 4096;
  /// Lines per transverse axis when M > 1.
  int lines = 256;
};

/// meas{u in [lo, hi] : |phi(u)| <= eps} for a scalar function. Transitions are
/// located on a grid seeded with roots and local minima of |phi|, then bisected.
double measure_1d(const std::function<double(double)>& phi, double eps, double lo, double hi,
                  int cells = 4096);

/// meas{v in [-A, A] : |phi(v)| <= eps}.
double measure(const PhaseFunction& phi, double eps, double A, int cells = 4096);

/// meas{v in [-A, A]^M : |b(v) . d| <= eps}. For M > 1, slab lengths along the
/// axis where the phase varies most are summed over a midpoint grid of lines.
double measure(const VelocityField& a, const Direction& d, double eps, double A,
               MeasureOptions opts = {});

struct SupMeasure {
  double value = 0.0;
  Vec direction;
};

/// Directions annihilating b, b', ..., b^(N-1) at sample velocities (M = 1),
/// used as extra candidates for sublevel maximization.
std::vector<Vec> witness_directions(const VelocityField& a, double A, int samples = 33);

SupMeasure sup_measure(const VelocityField& a, double A, double eps, const SphereSampler& sampler,
                       MeasureOptions opts = {});

struct AlphaFit {
  std::vector<double> eps_grid;
  std::vector<double> sup_measures;
  std::vector<Vec> maximizers;
  double alpha = 0.0;
  /// Least-squares slope before clamping to (0, 1].
  double raw_slope = 0.0;
  double C = 0.0;
  double r2 = 0.0;
  bool degenerate = false;
};

AlphaFit fit_alpha(const VelocityField& a, double A, const std::vector<double>& eps_grid,
                   const SphereSampler& sampler, MeasureOptions opts = {});

/// Smallest k <= kmax with |phi^(k)(v)| > tol * (1 + max_{[-A,A]} |phi^(k)|);
/// nullopt stands for ">= kmax".
std::optional<int> multiplicity_at(const PhaseFunction& phi, double v, int kmax, double tol = 1e-7,
                                   double A = 1.0);

struct MultiplicityReport {
  std::vector<double> points;
  /// -1 marks saturation (">= kmax").
  std::vector<int> per_point;
  std::vector<Vec> witnesses;
  int sup = 0;
  bool saturated = false;
  double witness_point = 0.0;
  Vec witness_direction;
  int kmax = 0;
};

MultiplicityReport field_multiplicity(const VelocityField& a, double A, int kmax, int samples = 33);

/// c-bar_1 = 2, c-bar_{k+1} = 2^(1/(k+1)) (k+1) k^(1/(k+1)-1) c-bar_k^(1-1/(k+1)).
double cbar_constant(int k);

struct MeasureBoundRow {
  double eps = 0.0;
  double measure = 0.0;
  double bound = 0.0;
  double ratio = 0.0;
};

struct MeasureBoundReport {
  std::vector<MeasureBoundRow> rows;
  double worst_ratio = 0.0;
  bool pass = false;
  double cbar = 0.0;
};

MeasureBoundReport measure_bound_check(const PhaseFunction& phi, int k, double delta, double lo,
                                       double hi, const std::vector<double>& eps_grid);

struct GammaNDResult {
  bool holds = false;
  double min_value = 0.0;
  Vec witness_v;
  Vec witness_direction;
};

struct GammaNDOptions {
  /// Velocity samples per axis.
  int v_points = 257;
  double threshold = 1e-9;
};

/// min over v in [-A, A]^M and sigma in S^N of sum_{k < gamma} |D^k b(v) . sigma|.
GammaNDResult check_gammaND(const VelocityField& a, const ForceField& F, int gamma, double A,
                            const SphereSampler& sampler, GammaNDOptions opts = {});

struct GammaSearch {
  std::optional<int> gamma;
  std::vector<GammaNDResult> attempts;
};

GammaSearch gamma_opt(const VelocityField& a, const ForceField& F, double A, int gamma_max,
                      const SphereSampler& sampler, GammaNDOptions opts = {});

struct ExponentComparison {
  double half_alpha_opt = 0.0;
  double inv_gamma_opt = 0.0;
  /// "derivative-condition", "measure-condition", "tie" or "unknown".
  std::string verdict;
};

ExponentComparison compare_exponents(int N, int M);

}  // namespace avglemma
