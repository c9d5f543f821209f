#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace avglemma {

using Vec = std::vector<double>;

/// Derivative order reported by the analytic catalog fields.
inline constexpr int kAnalyticSmoothness = 64;

/// A velocity field a : R^M -> R^N together with a derivative oracle.
///
/// Instances are immutable and cheap to copy (the callables are shared).
class VelocityField {
 public:
  using EvalFn = std::function<Vec(std::span<const double> v)>;
  /// Returns the mixed partial derivative of a at v for multi-index beta.
  using DerivFn = std::function<Vec(std::span<const double> v, std::span<const int> beta)>;

  VelocityField(int M, int N, EvalFn eval, DerivFn deriv, int smoothness, std::string name);

  /// Wraps a user field without an analytic oracle. Derivatives come from
  /// Richardson-extrapolated central differences with step eps^(1/(k+2)).
  static VelocityField from_function(int M, int N, EvalFn eval, std::string name = "custom",
                                     int smoothness = 4);

  int velocity_dim() const noexcept { return M_; }
  int space_dim() const noexcept { return N_; }
  int smoothness() const noexcept { return smoothness_; }
  const std::string& name() const noexcept { return *name_; }

  Vec operator()(std::span<const double> v) const;
  Vec operator()(double v) const { return (*this)(std::span<const double>(&v, 1)); }

  /// Partial derivative d^beta a(v). Throws CapabilityError when |beta|
  /// exceeds smoothness().
  Vec derivative(std::span<const double> v, std::span<const int> beta) const;
  /// k-th derivative for scalar velocity (M = 1).
  Vec derivative(double v, int k) const;

  /// b(v) = (1, a(v)).
  Vec b(std::span<const double> v) const;

 private:
  int M_, N_, smoothness_;
  std::shared_ptr<const EvalFn> eval_;
  std::shared_ptr<const DerivFn> deriv_;
  std::shared_ptr<const std::string> name_;
};

/// Force term: either a constant vector or a smooth map F(t, x, v).
class ForceField {
 public:
  using SmoothFn =
      std::function<Vec(double t, std::span<const double> x, std::span<const double> v)>;

  static ForceField constant(Vec F);
  static ForceField smooth(int M, SmoothFn fn);

  bool is_constant() const noexcept { return constant_; }
  int velocity_dim() const noexcept { return M_; }
  /// The constant vector; throws UnsupportedError for a smooth force.
  const Vec& vector() const;
  /// Euclidean norm of the constant vector.
  double norm() const;
  Vec operator()(double t, std::span<const double> x, std::span<const double> v) const;

 private:
  ForceField() = default;
  bool constant_ = true;
  int M_ = 0;
  Vec F_;
  std::shared_ptr<const SmoothFn> fn_;
};

/// Unit vector (sigma_0, sigma_1, ..., sigma_N) on S^N.
class Direction {
 public:
  /// Throws PreconditionError unless |components| = 1 within 1e-12.
  explicit Direction(Vec components);
  static Direction normalized(Vec components);

  const Vec& components() const noexcept { return c_; }
  double sigma0() const noexcept { return c_[0]; }
  std::span<const double> tilde() const noexcept { return std::span(c_).subspan(1); }
  std::size_t size() const noexcept { return c_.size(); }
  double operator[](std::size_t i) const { return c_[i]; }

 private:
  Vec c_;
};

/// Scalar phase u -> phi(u) with derivative access in u.
class PhaseFunction {
 public:
  using DerivFn = std::function<double(double u, int k)>;

  PhaseFunction(DerivFn deriv, int smoothness);
  /// Finite-difference derivatives, as for VelocityField::from_function.
  static PhaseFunction from_function(std::function<double(double)> f, int smoothness = 4);
  /// c * u^k.
  static PhaseFunction monomial(int k, double c = 1.0);
  /// sum_j coeffs[j] u^j.
  static PhaseFunction polynomial(Vec coeffs);

  double operator()(double u) const { return (*deriv_)(u, 0); }
  /// Throws CapabilityError when k exceeds smoothness().
  double derivative(double u, int k) const;
  int smoothness() const noexcept { return smoothness_; }

 private:
  std::shared_ptr<const DerivFn> deriv_;
  int smoothness_;
};

/// D^k b(v) with D = F . grad_v and b = (1, a). Requires a constant force.
Vec directional_derivative(const VelocityField& a, const ForceField& F,
                           std::span<const double> v, int k);

/// phi(v) = b(v) . d for scalar velocity.
PhaseFunction make_phase(const VelocityField& a, const Direction& d);

/// phi along the line base + u * e_axis, for general M.
PhaseFunction make_phase(const VelocityField& a, const Direction& d, Vec base, int axis);

/// phi(v) = b(v) . d at an arbitrary velocity.
double phase_value(const VelocityField& a, const Direction& d, std::span<const double> v);

struct CatalogEntry {
  VelocityField field;
  ForceField force;  // suggested constant force e_1
};

/// Named fields with analytic derivative oracles:
/// polynomial-curve (v1, v1^2, ..., v1^N), identity (N = M), circle
/// (cos v1, sin v1), constant (1, 0, ..., 0), and custom-polynomial, where
/// coefficients[i][j] multiplies v1^j in component i.
CatalogEntry catalog(const std::string& name, int N, int M,
                     const std::vector<Vec>& coefficients = {});

/// Enumerates all multi-indices of length M with |beta| = k.
std::vector<std::vector<int>> multi_indices(int M, int k);

}  // namespace avglemma
