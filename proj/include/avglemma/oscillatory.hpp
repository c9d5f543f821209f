#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "avglemma/fields.hpp"
#include "avglemma/sphere.hpp"

namespace avglemma {

/// Amplitude psi with its derivative, both on the real line.
struct Amplitude {
  std::function<double(double)> value;
  std::function<double(double)> deriv;

  static Amplitude one();
};

/// ||psi||_inf + ||psi'||_L1 pieces over an interval.
struct AmplitudeNorms {
  double sup = 0.0;
  double deriv_l1 = 0.0;
  double total() const noexcept { return sup + deriv_l1; }
};

AmplitudeNorms amplitude_norms(const Amplitude& psi, double alpha, double beta);

struct OscillatorySpec {
  Amplitude psi = Amplitude::one();
  PhaseFunction phi = PhaseFunction::monomial(1);
  double alpha = 0.0;
  double beta = 1.0;
  double lambda = 0.0;
};

/// I(lambda) = int_alpha^beta psi(u) exp(i lambda phi(u)) du.
///
/// Panels are bisected until their length is below
/// pi / (4 (1 + |lambda| max|phi'|)), then integrated with 10-point
/// Gauss-Legendre. Throws PreconditionError on non-finite integrand values.
std::complex<double> integrate(const OscillatorySpec& spec);

/// c_k = 5 * 2^(k-1) - 2.
double vdc_constant(int k);

/// Checks |phi^(k)| >= delta on a uniform grid of [alpha, beta]; throws
/// PreconditionError naming the first violating u.
void require_derivative_lower_bound(const PhaseFunction& phi, int k, double delta, double alpha,
                                    double beta, int points = 2049);

/// c~_k: c_k for k >= 2, and 2 + delta^-1 int |phi''| for k = 1.
double vdc_tilde(int k, double delta, double alpha, double beta, const PhaseFunction& phi);

double corollary_bound(int k, double delta, double alpha, double beta, double lambda,
                       const PhaseFunction& phi);

double amplitude_bound(int k, double delta, double alpha, double beta, double lambda,
                       const PhaseFunction& phi, const Amplitude& psi);

struct DecayRow {
  double lambda = 0.0;
  double magnitude = 0.0;
  double bound = 0.0;
  double ratio = 0.0;
};

struct DecayReport {
  std::vector<DecayRow> rows;
  double worst_ratio = 0.0;
  /// Decay exponent p in |I| ~ lambda^-p, from the per-window maxima.
  double exponent = 0.0;
  /// sup over rows of magnitude * max(1, lambda^(1/order)).
  double scaled_sup = 0.0;
  int order = 1;
};

struct DecayOptions {
  /// Samples per geometric lambda, spread over one interference period.
  int subsamples = 8;
  /// Only windows with lambda >= fit_min enter the exponent fit.
  double fit_min = 100.0;
};

/// Evaluates |I(lambda)| over the grid and compares with bound(lambda).
DecayReport decay_check(const OscillatorySpec& base, std::span<const double> lambdas, int order,
                        const std::function<double(double)>& bound, DecayOptions opts = {});

/// Geometric grid lo, lo*r, ... with `per_decade` points per decade, up to hi.
std::vector<double> geometric_grid(double lo, double hi, int per_decade);

struct PartitionCell {
  int order = 0;
  double c_tilde = 0.0;
  /// sup over parameters of sum over support components of
  /// (||rho_k||_inf + ||rho_k'||_L1) on the component.
  double rho_norm = 0.0;
  int max_components = 0;
  double term = 0.0;
};

struct PartitionedBound {
  double d_gamma = 0.0;
  double delta = 0.0;
  /// min over the compact of sum_k |d^k phi / du^k|.
  double min_sum = 0.0;
  Vec witness_direction;
  double witness_u = 0.0;
  std::vector<PartitionCell> cells;
};

struct PartitionOptions {
  int u_points = 2049;
  int sphere_points = 4096;
  /// Transverse grid points per axis when M > 1.
  int w_points = 5;
  /// Restricts the parameter set to one direction (used by tests).
  std::optional<Vec> direction;
};

/// Constant d_gamma with |int psi e^{i lambda phi}| <= d_gamma min(1, |lambda|^(-1/gamma))
/// for a single phase on [-A, A].
PartitionedBound partitioned_bound(const PhaseFunction& phi, const AmplitudeNorms& psi, int gamma,
                                   double A, int u_points = 2049);

/// Same for the transport phase u -> B(u; w) . sigma, whose u-derivatives are
/// -D^(k-1) b . sigma / |F|^k, over sigma in S^N and w in [-A, A]^(M-1).
/// Throws NonDegeneracyError when the derivative condition fails.
PartitionedBound partitioned_bound(const VelocityField& a, const ForceField& F,
                                   const AmplitudeNorms& psi, int gamma, double A,
                                   PartitionOptions opts = {});

}  // namespace avglemma
