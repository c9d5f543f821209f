#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "avglemma/fields.hpp"

namespace avglemma {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;

/// Periodic grid: space-time X in [0, 2 pi L)^(N+1) with n_x points per axis,
/// velocity v in [-P, P)^M with n_v points per axis. The dual lattice is
/// Y = k / L with k in FFT order; Nyquist entries are kept zero.
struct TorusGrid {
  int N = 1;
  int M = 1;
  int n_x = 16;
  int n_v = 32;
  double L = 1.0;
  /// Velocity half period.
  double P = 2.0;
  /// Support box half width, A < P.
  double A = 1.5;

  /// Throws PreconditionError unless n_x, n_v are powers of two and A < P.
  void validate() const;

  int axes() const noexcept { return N + 1; }
  std::size_t y_count() const;
  std::size_t v_count() const;
  /// Points per transverse velocity block (n_v^(M-1)).
  std::size_t w_count() const;
  double dv() const noexcept { return 2.0 * P / n_v; }
  double v_node(int i) const noexcept { return -P + i * dv(); }
  /// Signed integer frequency of FFT index i, or 0 with nyquist = true.
  int signed_mode(int i, bool* nyquist = nullptr) const;
  /// Lattice vector Y for a flat lattice index (axis 0 slowest).
  Vec y_at(std::size_t index) const;
  bool is_nyquist(std::size_t index) const;
  /// Velocity point for a flat velocity index (v1 fastest).
  Vec v_at(std::size_t index) const;
  /// Volume of one lattice cell in Y, (1/L)^(N+1).
  double y_cell() const;
};

enum class FieldRole { f, g, other };

/// Fourier coefficients in X (f = sum_Y fhat(Y) e^{i Y . X}) sampled on the
/// velocity grid. Layout: data[y * v_count + v_index].
struct SpectralKineticField {
  TorusGrid grid;
  CVec data;
  FieldRole role = FieldRole::other;

  SpectralKineticField() = default;
  SpectralKineticField(TorusGrid g, FieldRole r);

  Complex& at(std::size_t y, std::size_t v) { return data[y * grid.v_count() + v]; }
  const Complex& at(std::size_t y, std::size_t v) const { return data[y * grid.v_count() + v]; }
  /// sum |fhat|^2 * y_cell * dv^M.
  double l2_norm_squared() const;
  double l2_norm() const;
};

/// Relative L2 distance |a - b| / |b| (0 when both vanish).
double relative_l2(const SpectralKineticField& a, const SpectralKineticField& b);

/// ghat = i (b(v) . Y) fhat + (F . grad_v f)^. Velocity derivatives are
/// spectral; a smooth force is applied pseudo-spectrally in X.
/// Throws AliasingError when modes above n_v / 3 carry more than 1e-8 of the
/// velocity-spectrum energy.
SpectralKineticField apply_operator(const SpectralKineticField& f, const VelocityField& a,
                                    const ForceField& F);

/// Orthogonal R with R F = |F| e_1 (a rotation when M >= 2). Throws
/// UnsupportedError for F = 0.
Eigen::MatrixXd rotate_velocity_frame(const ForceField& F);

/// f(R^T v) resampled by trigonometric interpolation on the velocity grid.
SpectralKineticField rotate_field(const SpectralKineticField& f, const Eigen::MatrixXd& R);

/// B(v1; w) = -int_{v1_0}^{v1} b(u; w) / |F| du in a frame with F parallel to e_1.
Vec B_primitive(const VelocityField& a, const ForceField& F, double v1_0, double v1,
                std::span<const double> w = {});

struct SliceChoice {
  int index = -1;
  double v1 = 0.0;
  double h_value = 0.0;
  /// Mean of h over the grid points in (0, 1).
  double h_mean = 0.0;
};

/// Grid slice v1 in (0, 1) minimizing h(v1) = sum_{Y, w} |fhat(Y, v1, w)|^2.
SliceChoice select_v1_slice(const SpectralKineticField& f);

/// fhat(Y, v1_0, w) stored as data[y * w_count + w].
struct Slice {
  TorusGrid grid;
  int v1_index = 0;
  CVec data;
};

Slice extract_slice(const SpectralKineticField& f, int v1_index);

struct ReconstructOptions {
  /// Maximum phase increment per Gauss-Legendre subpanel.
  double max_phase_step = 1.0;
  /// Relative threshold below which velocity modes of ghat are dropped.
  double prune = 1e-15;
};

/// Solution of |F| d/dv1 fhat + i (b . Y) fhat = ghat through a slice:
/// fhat(v1) = e^{i B(v1) . Y} [fhat(v1_0) + |F|^-1 int_{v1_0}^{v1} ghat(u) e^{-i B(u) . Y} du].
class SliceSolution {
 public:
  SliceSolution(Slice slice, SpectralKineticField g, VelocityField a, ForceField F,
                ReconstructOptions opts);

  const TorusGrid& grid() const noexcept { return slice_.grid; }
  const Slice& slice() const noexcept { return slice_; }
  const SpectralKineticField& source() const noexcept { return g_; }
  double v1_0() const noexcept { return grid().v_node(slice_.v1_index); }
  const SpectralKineticField& field() const noexcept { return f_; }
  int subpanels() const noexcept { return sub_; }

  /// fhat(Y, v1; w) at an arbitrary v1 in [-P, P].
  Complex value(std::size_t y, std::size_t w, double v1) const;
  /// rho(Y) = int fhat(Y, v) psi(v) dv with Gauss-Legendre nodes in v1.
  CVec velocity_average(const std::function<double(std::span<const double>)>& psi) const;
  /// int_{[-A, A]^M} |ghat(Y, v)|^2 dv per lattice point, from the
  /// trigonometric interpolant in v1.
  Vec source_box_energy() const;

 private:
  void build();
  void solve_line(std::size_t y, std::size_t w, CVec* grid_out, CVec* node_out) const;
  CVec ghat_modes(std::size_t y, std::size_t w, std::vector<int>* active) const;

  Slice slice_;
  SpectralKineticField g_;
  VelocityField a_;
  ForceField F_;
  ReconstructOptions opts_;
  double fnorm_ = 1.0;
  int sub_ = 1;
  // Per w-line tables on the node set.
  Vec nodes_;    // GL8 nodes, panel-major
  Vec weights_;  // matching weights, including the half-width factor
  std::vector<Vec> B_nodes_;   // [w][q * (N+1) + c]
  std::vector<Vec> B_edges_;   // [w][p * (N+1) + c], panel left edges plus the right end
  CVec mode_table_;            // [q * n_v + i], empty when too large
  CVec theta_table_;           // [((w * nq + q) * (N+1) + c) * n_x + i], empty when too large
  SpectralKineticField f_;
};

/// Reconstruct f on the grid from its v1_0 slice and the source g.
/// Requires F parallel to +e_1; F = 0 raises UnsupportedError.
SliceSolution reconstruct_from_slice(const Slice& slice, const SpectralKineticField& g,
                                     const VelocityField& a, const ForceField& F,
                                     ReconstructOptions opts = {});

struct ResidualReport {
  double relative = 0.0;
  std::size_t lines_checked = 0;
};

/// Integral-form residual of the spectral ODE between adjacent grid points,
/// using 24-point Gauss-Legendre quadrature independent of the solver. At
/// most `max_lines` (Y, w) lines with nonzero data are checked, spread evenly.
ResidualReport ode_residual(const SpectralKineticField& f, const SpectralKineticField& g,
                            const VelocityField& a, const ForceField& F,
                            std::size_t max_lines = 256);

/// rho(Y) = sum_v fhat(Y, v) psi(v) dv^M. Throws SupportError if psi is
/// nonzero outside [-A, A]^M on the grid.
CVec velocity_average(const SpectralKineticField& f,
                      const std::function<double(std::span<const double>)>& psi);

/// Smooth bump exp(1 - 1 / (1 - |v / r|^2)) supported in the ball of radius r.
std::function<double(std::span<const double>)> bump(double r);

struct PairSpec {
  enum class Mode { manufactured, random } mode = Mode::manufactured;
  std::uint64_t seed = 7;
  /// Random mode: lattice points with |Y| < cutoff carry data.
  double cutoff = 32.0;
  /// Manufactured mode: Gaussian width in v, and the |Y| radius with data.
  double width = 0.0;
  double y_radius = 0.0;
  /// Manufactured mode: use f = 0.
  bool zero = false;
};

struct Pair {
  SpectralKineticField f;
  SpectralKineticField g;
  /// Set in random mode: the slice the pair was built from.
  int v1_index = -1;
};

Pair make_pair(const PairSpec& spec, const TorusGrid& grid, const VelocityField& a,
               const ForceField& F);

/// Flat binary layout: magic, dims, grid, then interleaved little-endian doubles.
void write_binary(const SpectralKineticField& f, std::ostream& os);
SpectralKineticField read_binary(std::istream& is);

struct SeriesCheck {
  int N = 1;
  double r = 0.0;
  int K = 0;
  double sum_K = 0.0;
  double sum_2K = 0.0;
  double relative_tail = 0.0;
};

/// sum over beta in Z^N, |beta_j| <= K, of (1 + |beta|^r)^-2 with r = N/2 + 1,
/// compared with the truncation at 2K.
SeriesCheck series_check(int N, int K);

}  // namespace avglemma
