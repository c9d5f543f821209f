#include "avglemma/sphere.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <numbers>

#include "avglemma/errors.hpp"
#include "avglemma/parallel.hpp"

namespace avglemma {
namespace {

double norm(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Root of x^(d+1) = x + 1, giving the generalized golden ratio for R_d.
double harmonious(int d) {
  double x = 2.0;
  for (int i = 0; i < 64; ++i) x = std::pow(1.0 + x, 1.0 / (d + 1));
  return x;
}

}  // namespace

SphereSampler::SphereSampler(int ambient_dim, int count) : dim_(ambient_dim) {
  if (ambient_dim < 2 || count < 1) throw PreconditionError("sphere sampler needs d >= 2 and n >= 1");
  const double area = 2.0 * std::pow(std::numbers::pi, dim_ / 2.0) / std::tgamma(dim_ / 2.0);
  spacing_ = std::pow(area / count, 1.0 / (dim_ - 1));
  points_.reserve(count);
  if (dim_ == 2) {
    for (int i = 0; i < count; ++i) {
      const double t = 2.0 * std::numbers::pi * (i + 0.5) / count;
      points_.push_back({std::cos(t), std::sin(t)});
    }
  } else if (dim_ == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double t = golden * i;
      points_.push_back({r * std::cos(t), r * std::sin(t), z});
    }
  } else {
    const double g = harmonious(dim_);
    Vec alpha(dim_);
    for (int j = 0; j < dim_; ++j) alpha[j] = std::fmod(std::pow(1.0 / g, j + 1), 1.0);
    for (int i = 0; i < count; ++i) {
      Vec p(dim_);
      for (int j = 0; j < dim_; ++j) {
        const double u = std::fmod(0.5 + (i + 1) * alpha[j], 1.0);
        p[j] = std::numbers::sqrt2 * boost::math::erf_inv(2.0 * u - 1.0);
      }
      const double n = norm(p);
      for (double& x : p) x /= n;
      points_.push_back(std::move(p));
    }
  }
}

std::vector<Vec> SphereSampler::cap(const Vec& center, double radius, int count) const {
  std::vector<Vec> out;
  out.reserve(count + 1);
  out.push_back(center);
  const std::size_t n = points_.size();
  for (int i = 0; i < count; ++i) {
    const Vec& p = points_[(static_cast<std::size_t>(i) * 7919u + 1u) % n];
    double dot = 0.0;
    for (int j = 0; j < dim_; ++j) dot += p[j] * center[j];
    Vec t(dim_);
    for (int j = 0; j < dim_; ++j) t[j] = p[j] - dot * center[j];
    const double tn = norm(t);
    if (tn < 1e-12) continue;
    const double s = radius * std::pow((i + 0.5) / count, 1.0 / (dim_ - 1));
    Vec q(dim_);
    for (int j = 0; j < dim_; ++j) q[j] = std::cos(s) * center[j] + std::sin(s) * t[j] / tn;
    const double qn = norm(q);
    for (double& x : q) x /= qn;
    out.push_back(std::move(q));
  }
  return out;
}

namespace {

SphereExtremum optimize(const SphereSampler& sampler, const std::function<double(const Vec&)>& f,
                        const std::vector<Vec>& seeds, RefineOptions opts, double sign) {
  auto best_of = [&](const std::vector<Vec>& cands, SphereExtremum inc) {
    std::vector<double> vals(cands.size());
    parallel_for(cands.size(), [&](std::size_t i) { vals[i] = sign * f(cands[i]); });
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (inc.point.empty() || vals[i] < inc.value) inc = {vals[i], cands[i]};
    return inc;
  };
  std::vector<Vec> first;
  first.reserve(seeds.size() + sampler.size());
  for (const Vec& s : seeds) {
    Vec u = s;
    const double n = norm(u);
    if (n == 0.0) continue;
    for (double& x : u) x /= n;
    first.push_back(std::move(u));
  }
  first.insert(first.end(), sampler.points().begin(), sampler.points().end());
  SphereExtremum inc = best_of(first, {});
  double radius = 2.0 * sampler.spacing();
  for (int r = 0; r < opts.rounds; ++r) {
    inc = best_of(sampler.cap(inc.point, radius, opts.cap_points), inc);
    radius *= opts.shrink;
  }
  inc.value *= sign;
  return inc;
}

}  // namespace

SphereExtremum sphere_minimize(const SphereSampler& sampler,
                               const std::function<double(const Vec&)>& f,
                               const std::vector<Vec>& seeds, RefineOptions opts) {
  return optimize(sampler, f, seeds, opts, 1.0);
}

SphereExtremum sphere_maximize(const SphereSampler& sampler,
                               const std::function<double(const Vec&)>& f,
                               const std::vector<Vec>& seeds, RefineOptions opts) {
  return optimize(sampler, f, seeds, opts, -1.0);
}

}  // namespace avglemma
