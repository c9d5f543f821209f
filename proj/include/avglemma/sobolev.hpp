#pragma once

#include <complex>
#include <vector>

#include "avglemma/fields.hpp"
#include "avglemma/transport.hpp"

namespace avglemma {

/// Dyadic shells 2^j <= |Y| < 2^(j+1) of a lattice function.
struct ShellSpectrum {
  Vec edges;  // inner radii 2^j
  Vec energies;
  /// Lattice points (Nyquist excluded) per shell.
  std::vector<std::size_t> counts;
  double core = 0.0;  // |Y| < 1
  double total = 0.0;
};

ShellSpectrum shell_spectrum(const TorusGrid& grid, const CVec& rho);

/// sum max(1, |Y|^(2s)) |rho(Y)|^2 * y_cell. Throws PreconditionError for s < 0.
double weighted_energy(const TorusGrid& grid, const CVec& rho, double s);

struct SobolevEstimate {
  double s_star = 0.0;
  /// First and last shell index used by the fit.
  int fit_lo = 0;
  int fit_hi = -1;
  int populated = 0;
  bool saturated = false;
};

/// Fits the mean energy per lattice point of each populated shell to
/// 2^(-2 s j) by weighted least squares (weight min(n_j, 64) / 64). Fewer
/// than five populated shells flag the spectrum as saturated.
SobolevEstimate estimate_exponent(const TorusGrid& grid, const CVec& rho);

struct GainOptions {
  /// psi is the bump of this radius; 0 means grid.A.
  double psi_radius = 0.0;
  double residual_tol = 1e-6;
  int sphere_points = 4096;
  int u_points = 2049;
};

struct GainReport {
  double residual = 0.0;
  int v1_index = -1;
  int gamma = 0;
  double L = 0.0;
  double delta = 0.0;
  double worst_ratio = 0.0;
  Vec worst_y;
  /// Per lattice point: lhs and rhs of the weighted inequality.
  Vec lhs, rhs;
  CVec rho;
  SobolevEstimate rho_exponent;
  SobolevEstimate slice_exponent;
  double f_norm = 0.0;
  double g_norm = 0.0;
  bool pass = false;
};

/// Checks max(1, |Y|^(2/gamma)) |rho(Y)|^2 <= 2 [(2A)^(M-1) L^2 S_f(Y) +
/// (2A)^M L^2 |F|^-2 S_g(Y)] at every lattice point, with L = d_gamma from the
/// partitioned oscillatory bound. Throws PreconditionError when the pair does
/// not solve the equation and NonDegeneracyError when the derivative
/// condition fails at gamma.
GainReport gain_certificate(const SpectralKineticField& f, const SpectralKineticField& g,
                            const VelocityField& a, const ForceField& F, int gamma,
                            GainOptions opts = {});

/// chi(y) = exp(-y^2 / (1 - y^2)) on |y| < 1, 0 otherwise.
double chi(double y);

/// m0(y) = (-y chi'(y) - 1 + chi(y)) / (i y^2), with the series near 0.
std::complex<double> m0_eval(double y);

/// m0^(j)(y) for j = 0..k.
std::vector<std::complex<double>> m0_jet(double y, int k);

struct MultiplierOptions {
  double t_min = 1e-4;
  double t_max = 1e4;
  int t_points = 400;
  /// Velocity samples per axis over [-A, A]^M.
  int v_points = 17;
  double finite_bound = 1e8;
  double stability_tol = 0.01;
};

struct MultiplierRow {
  int k = 0;
  int j = 0;
  double sup = 0.0;
  double sup_refined = 0.0;
  double relative_change = 0.0;
  /// |y|^k |d^k m_j| at the largest grid |y|.
  double tail = 0.0;
  /// sup of the chi-dependent part of the bracket beyond (1 + eps) / min|b|.
  double chi_part_beyond = 0.0;
};

struct MultiplierReport {
  std::vector<MultiplierRow> rows;
  double min_b = 0.0;
  bool finite = false;
  bool stable = false;
  bool support_ok = false;
  bool pass = false;
};

/// sup over a log grid of t = y_(N+1) and v in [-A, A]^M of
/// |t|^k |d^k/dt^k m_j|, m_j = m0(|b(v)| t) (a . d_j a / |b|) t, for k <= k_max,
/// compared against the same grids refined by a factor two.
MultiplierReport multiplier_bound_check(const VelocityField& a, double A, int k_max,
                                        MultiplierOptions opts = {});

}  // namespace avglemma
