#include "avglemma/fields.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "avglemma/errors.hpp"

namespace avglemma {
namespace {

int order_of(std::span<const int> beta) { return std::accumulate(beta.begin(), beta.end(), 0); }

double fd_step(int k, double at) {
  const double eps = std::numeric_limits<double>::epsilon();
  return std::pow(eps, 1.0 / (k + 2)) * std::max(1.0, std::abs(at));
}

// d^k/du^k of sum_j c[j] u^j
double poly_derivative(const Vec& c, double u, int k) {
  double sum = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= k; --j) {
    double falling = 1.0;
    for (int i = 0; i < k; ++i) falling *= (j - i);
    sum = sum * u + c[j] * falling;
  }
  return sum;
}

// Field depending on v1 only, given per-component scalar derivative oracles.
VelocityField v1_field(int M, int N, std::function<double(int comp, double v1, int k)> comp,
                       std::string name) {
  auto eval = [N, comp](std::span<const double> v) {
    Vec out(N);
    for (int i = 0; i < N; ++i) out[i] = comp(i, v[0], 0);
    return out;
  };
  auto deriv = [N, comp](std::span<const double> v, std::span<const int> beta) {
    Vec out(N, 0.0);
    for (std::size_t j = 1; j < beta.size(); ++j)
      if (beta[j] != 0) return out;
    for (int i = 0; i < N; ++i) out[i] = comp(i, v[0], beta[0]);
    return out;
  };
  return VelocityField(M, N, eval, deriv, kAnalyticSmoothness, std::move(name));
}

void require_dims(int N, int M) {
  if (N < 1 || M < 1) throw PreconditionError("field dimensions must be positive");
}

}  // namespace

VelocityField::VelocityField(int M, int N, EvalFn eval, DerivFn deriv, int smoothness,
                             std::string name)
    : M_(M),
      N_(N),
      smoothness_(smoothness),
      eval_(std::make_shared<const EvalFn>(std::move(eval))),
      deriv_(std::make_shared<const DerivFn>(std::move(deriv))),
      name_(std::make_shared<const std::string>(std::move(name))) {
  require_dims(N, M);
}

VelocityField VelocityField::from_function(int M, int N, EvalFn eval, std::string name,
                                           int smoothness) {
  auto shared_eval = std::make_shared<const EvalFn>(std::move(eval));
  // Recursive central differences, Richardson-extrapolated at each level.
  auto deriv = std::make_shared<std::function<Vec(std::span<const double>, std::span<const int>)>>();
  std::weak_ptr<std::function<Vec(std::span<const double>, std::span<const int>)>> weak = deriv;
  *deriv = [shared_eval, weak](std::span<const double> v, std::span<const int> beta) -> Vec {
    const int k = order_of(beta);
    if (k == 0) return (*shared_eval)(v);
    auto self = weak.lock();
    std::size_t axis = 0;
    while (beta[axis] == 0) ++axis;
    std::vector<int> lower(beta.begin(), beta.end());
    --lower[axis];
    const double h = fd_step(k, v[axis]);
    auto central = [&](double step) {
      Vec vp(v.begin(), v.end()), vm(v.begin(), v.end());
      vp[axis] += step;
      vm[axis] -= step;
      Vec fp = (*self)(vp, lower), fm = (*self)(vm, lower);
      for (std::size_t i = 0; i < fp.size(); ++i) fp[i] = (fp[i] - fm[i]) / (2.0 * step);
      return fp;
    };
    Vec coarse = central(h), fine = central(0.5 * h);
    for (std::size_t i = 0; i < fine.size(); ++i) fine[i] = (4.0 * fine[i] - coarse[i]) / 3.0;
    return fine;
  };
  DerivFn holder = [deriv](std::span<const double> v, std::span<const int> beta) {
    return (*deriv)(v, beta);
  };
  return VelocityField(M, N, *shared_eval, holder, smoothness, std::move(name));
}

Vec VelocityField::operator()(std::span<const double> v) const { return (*eval_)(v); }

Vec VelocityField::derivative(std::span<const double> v, std::span<const int> beta) const {
  const int k = order_of(beta);
  if (k > smoothness_)
    throw CapabilityError("derivative of order " + std::to_string(k) + " exceeds smoothness " +
                          std::to_string(smoothness_) + " of field '" + name() + "'");
  if (k == 0) return (*eval_)(v);
  return (*deriv_)(v, beta);
}

Vec VelocityField::derivative(double v, int k) const {
  std::vector<int> beta(M_, 0);
  beta[0] = k;
  Vec point(M_, 0.0);
  point[0] = v;
  return derivative(point, beta);
}

Vec VelocityField::b(std::span<const double> v) const {
  Vec a = (*this)(v);
  Vec out(N_ + 1);
  out[0] = 1.0;
  std::copy(a.begin(), a.end(), out.begin() + 1);
  return out;
}

ForceField ForceField::constant(Vec F) {
  if (F.empty()) throw PreconditionError("force vector must be nonempty");
  ForceField f;
  f.constant_ = true;
  f.M_ = static_cast<int>(F.size());
  f.F_ = std::move(F);
  return f;
}

ForceField ForceField::smooth(int M, SmoothFn fn) {
  ForceField f;
  f.constant_ = false;
  f.M_ = M;
  f.fn_ = std::make_shared<const SmoothFn>(std::move(fn));
  return f;
}

const Vec& ForceField::vector() const {
  if (!constant_) throw UnsupportedError("force field is not constant");
  return F_;
}

double ForceField::norm() const {
  const Vec& F = vector();
  return std::sqrt(std::inner_product(F.begin(), F.end(), F.begin(), 0.0));
}

Vec ForceField::operator()(double t, std::span<const double> x, std::span<const double> v) const {
  if (constant_) return F_;
  return (*fn_)(t, x, v);
}

Direction::Direction(Vec components) : c_(std::move(components)) {
  const double n = std::sqrt(std::inner_product(c_.begin(), c_.end(), c_.begin(), 0.0));
  if (c_.size() < 2 || std::abs(n - 1.0) > 1e-12)
    throw PreconditionError("direction must be a unit vector in R^(N+1), N >= 1");
}

Direction Direction::normalized(Vec components) {
  const double n =
      std::sqrt(std::inner_product(components.begin(), components.end(), components.begin(), 0.0));
  if (n == 0.0) throw PreconditionError("cannot normalize the zero vector");
  for (double& c : components) c /= n;
  return Direction(std::move(components));
}

PhaseFunction::PhaseFunction(DerivFn deriv, int smoothness)
    : deriv_(std::make_shared<const DerivFn>(std::move(deriv))), smoothness_(smoothness) {}

PhaseFunction PhaseFunction::from_function(std::function<double(double)> f, int smoothness) {
  auto fn = std::make_shared<std::function<double(double, int)>>();
  std::weak_ptr<std::function<double(double, int)>> weak = fn;
  *fn = [f, weak](double u, int k) -> double {
    if (k == 0) return f(u);
    auto self = weak.lock();
    const double h = fd_step(k, u);
    auto central = [&](double s) { return ((*self)(u + s, k - 1) - (*self)(u - s, k - 1)) / (2 * s); };
    return (4.0 * central(0.5 * h) - central(h)) / 3.0;
  };
  return PhaseFunction([fn](double u, int k) { return (*fn)(u, k); }, smoothness);
}

PhaseFunction PhaseFunction::monomial(int k, double c) {
  Vec coeffs(k + 1, 0.0);
  coeffs[k] = c;
  return polynomial(std::move(coeffs));
}

PhaseFunction PhaseFunction::polynomial(Vec coeffs) {
  return PhaseFunction([c = std::move(coeffs)](double u, int k) { return poly_derivative(c, u, k); },
                       kAnalyticSmoothness);
}

double PhaseFunction::derivative(double u, int k) const {
  if (k > smoothness_)
    throw CapabilityError("phase derivative of order " + std::to_string(k) +
                          " exceeds smoothness " + std::to_string(smoothness_));
  return (*deriv_)(u, k);
}

std::vector<std::vector<int>> multi_indices(int M, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(M, 0);
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == M - 1) {
      cur[axis] = left;
      out.push_back(cur);
      return;
    }
    for (int i = left; i >= 0; --i) {
      cur[axis] = i;
      rec(axis + 1, left - i);
    }
  };
  rec(0, k);
  return out;
}

Vec directional_derivative(const VelocityField& a, const ForceField& F, std::span<const double> v,
                           int k) {
  const Vec& f = F.vector();
  if (static_cast<int>(f.size()) != a.velocity_dim())
    throw PreconditionError("force and field velocity dimensions differ");
  if (k > a.smoothness())
    throw CapabilityError("order " + std::to_string(k) + " exceeds field smoothness");
  if (k == 0) return a.b(v);
  Vec out(a.space_dim() + 1, 0.0);
  double kfact = std::tgamma(k + 1.0);
  for (const auto& beta : multi_indices(a.velocity_dim(), k)) {
    double coeff = kfact;
    bool zero = false;
    for (int j = 0; j < a.velocity_dim(); ++j) {
      coeff /= std::tgamma(beta[j] + 1.0);
      if (beta[j] > 0) {
        if (f[j] == 0.0) zero = true;
        coeff *= std::pow(f[j], beta[j]);
      }
    }
    if (zero) continue;
    const Vec d = a.derivative(v, beta);
    for (int i = 0; i < a.space_dim(); ++i) out[i + 1] += coeff * d[i];
  }
  return out;
}

PhaseFunction make_phase(const VelocityField& a, const Direction& d) {
  if (a.velocity_dim() != 1)
    throw PreconditionError("make_phase(a, d) needs scalar velocity; pass a base point and axis");
  return make_phase(a, d, Vec{0.0}, 0);
}

PhaseFunction make_phase(const VelocityField& a, const Direction& d, Vec base, int axis) {
  if (static_cast<int>(d.size()) != a.space_dim() + 1)
    throw PreconditionError("direction dimension must be N + 1");
  return PhaseFunction(
      [a, d, base = std::move(base), axis](double u, int k) {
        Vec v = base;
        v[axis] = u;
        if (k == 0) return phase_value(a, d, v);
        std::vector<int> beta(a.velocity_dim(), 0);
        beta[axis] = k;
        const Vec dk = a.derivative(v, beta);
        double s = 0.0;
        for (int i = 0; i < a.space_dim(); ++i) s += dk[i] * d[i + 1];
        return s;
      },
      a.smoothness());
}

double phase_value(const VelocityField& a, const Direction& d, std::span<const double> v) {
  const Vec av = a(v);
  double s = d.sigma0();
  for (int i = 0; i < a.space_dim(); ++i) s += av[i] * d[i + 1];
  return s;
}

CatalogEntry catalog(const std::string& name, int N, int M, const std::vector<Vec>& coefficients) {
  require_dims(N, M);
  Vec e1(M, 0.0);
  e1[0] = 1.0;
  const ForceField force = ForceField::constant(e1);
  if (name == "polynomial-curve") {
    auto comp = [](int i, double v, int k) {
      const int p = i + 1;
      if (k > p) return 0.0;
      double falling = 1.0;
      for (int j = 0; j < k; ++j) falling *= (p - j);
      return falling * std::pow(v, p - k);
    };
    return {v1_field(M, N, comp, name), force};
  }
  if (name == "circle") {
    if (N != 2) throw PreconditionError("circle field requires N = 2");
    auto comp = [](int i, double v, int k) {
      const double shift = k * std::numbers::pi / 2.0;
      return i == 0 ? std::cos(v + shift) : std::sin(v + shift);
    };
    return {v1_field(M, N, comp, name), force};
  }
  if (name == "constant") {
    auto comp = [](int i, double, int k) { return (i == 0 && k == 0) ? 1.0 : 0.0; };
    return {v1_field(M, N, comp, name), force};
  }
  if (name == "custom-polynomial") {
    if (static_cast<int>(coefficients.size()) != N)
      throw PreconditionError("custom-polynomial needs one coefficient list per component");
    auto comp = [coefficients](int i, double v, int k) { return poly_derivative(coefficients[i], v, k); };
    return {v1_field(M, N, comp, name), force};
  }
  if (name == "identity") {
    if (N != M) throw PreconditionError("identity field requires N = M");
    auto eval = [](std::span<const double> v) { return Vec(v.begin(), v.end()); };
    auto deriv = [N](std::span<const double> v, std::span<const int> beta) {
      Vec out(N, 0.0);
      const int k = order_of(beta);
      if (k == 0) return Vec(v.begin(), v.end());
      if (k == 1)
        for (int i = 0; i < N; ++i)
          if (beta[i] == 1) out[i] = 1.0;
      return out;
    };
    return {VelocityField(M, N, eval, deriv, kAnalyticSmoothness, name), force};
  }
  throw PreconditionError("unknown catalog field '" + name + "'");
}

}  // namespace avglemma
