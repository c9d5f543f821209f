#include "avglemma/sublevel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "avglemma/errors.hpp"
#include "avglemma/oscillatory.hpp"
#include "avglemma/parallel.hpp"

namespace avglemma {
namespace {

double bisect_boundary(const std::function<double(double)>& f, double eps, double in, double out) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (in + out);
    if (mid == in || mid == out) break;
    if (std::abs(f(mid)) <= eps)
      in = mid;
    else
      out = mid;
  }
  return 0.5 * (in + out);
}

double bisect_root(const std::function<double(double)>& f, double a, double b, double fa) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

double golden_min_abs(const std::function<double(double)>& f, double a, double b) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = std::abs(f(c)), fd = std::abs(f(d));
  for (int it = 0; it < 80 && b - a > 1e-15 * (1.0 + std::abs(a)); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = std::abs(f(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = std::abs(f(d));
    }
  }
  return fc < fd ? c : d;
}

// Exact-interval measure given grid values of f on lo + i h, i = 0..cells.
double measure_from_grid(const std::function<double(double)>& f, const Vec& vals, double eps,
                         double lo, double hi) {
  const std::size_t n = vals.size();
  const double h = (hi - lo) / static_cast<double>(n - 1);
  std::vector<double> pts;
  pts.reserve(n + 16);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(lo + i * h);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double a = vals[i], b = vals[i + 1];
    if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0))
      pts.push_back(bisect_root(f, lo + i * h, lo + (i + 1) * h, a));
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double m = std::abs(vals[i]);
    if (m <= std::abs(vals[i - 1]) && m <= std::abs(vals[i + 1]) && m > eps)
      pts.push_back(golden_min_abs(f, lo + (i - 1) * h, lo + (i + 1) * h));
  }
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  double prev = pts[0];
  bool prev_in = std::abs(f(prev)) <= eps;
  for (std::size_t j = 1; j < pts.size(); ++j) {
    const double x = pts[j];
    if (x <= prev) continue;
    const bool in = std::abs(f(x)) <= eps;
    if (prev_in && in)
      total += x - prev;
    else if (prev_in)
      total += bisect_boundary(f, eps, prev, x) - prev;
    else if (in)
      total += x - bisect_boundary(f, eps, x, prev);
    prev = x;
    prev_in = in;
  }
  return total;
}

Vec dkb_row(const VelocityField& a, double v, int k) {
  Vec out(a.space_dim() + 1, 0.0);
  if (k == 0) {
    out[0] = 1.0;
    const Vec av = a(v);
    std::copy(av.begin(), av.end(), out.begin() + 1);
  } else {
    const Vec d = a.derivative(v, k);
    std::copy(d.begin(), d.end(), out.begin() + 1);
  }
  return out;
}

Vec smallest_right_singular(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(m.cols() - 1);
  return Vec(v.data(), v.data() + v.size());
}

// Cached evaluation of the sublevel measure over many directions.
class MeasureCache {
 public:
  MeasureCache(const VelocityField& a, double A, MeasureOptions opts) : a_(a), A_(A), opts_(opts) {
    const int M = a.velocity_dim();
    if (M == 1) {
      nodes_ = opts.cells + 1;
      lines_ = 1;
    } else {
      nodes_ = opts.lines + 1;
      lines_ = 1;
      for (int j = 1; j < M; ++j) lines_ *= opts.lines;
    }
    const int N = a.space_dim();
    values_.assign(M, Vec(lines_ * nodes_ * N, 0.0));
    for (int axis = 0; axis < M; ++axis)
      parallel_for(lines_, [&](std::size_t l) {
        Vec v = line_base(axis, l);
        for (std::size_t i = 0; i < nodes_; ++i) {
          v[axis] = -A_ + 2.0 * A_ * i / (nodes_ - 1);
          const Vec av = a_(v);
          std::copy(av.begin(), av.end(), values_[axis].begin() + (l * nodes_ + i) * N);
        }
      });
  }

  double operator()(const Vec& d, double eps) const {
    const int N = a_.space_dim();
    Vec vals(nodes_);
    if (a_.velocity_dim() == 1) {
      for (std::size_t i = 0; i < nodes_; ++i) {
        double s = d[0];
        for (int c = 0; c < N; ++c) s += values_[0][i * N + c] * d[c + 1];
        vals[i] = s;
      }
      auto f = [&](double u) {
        const Vec av = a_(u);
        double s = d[0];
        for (int c = 0; c < N; ++c) s += av[c] * d[c + 1];
        return s;
      };
      return measure_from_grid(f, vals, eps, -A_, A_);
    }
    // Lines along the axis where phi varies most, so level sets cross them
    // transversally; crossings located by linear interpolation.
    const int M = a_.velocity_dim();
    int axis = 0;
    double best = -1.0;
    for (int j = 0; j < M; ++j) {
      double tv = 0.0;
      for (std::size_t l = 0; l < lines_; l += std::max<std::size_t>(1, lines_ / 64)) {
        double prev = 0.0;
        for (std::size_t i = 0; i < nodes_; ++i) {
          const double s = phase(j, l, i, d);
          if (i > 0) tv += std::abs(s - prev);
          prev = s;
        }
      }
      if (tv > best) {
        best = tv;
        axis = j;
      }
    }
    const double h = 2.0 * A_ / (nodes_ - 1);
    double total = 0.0;
    for (std::size_t l = 0; l < lines_; ++l) {
      for (std::size_t i = 0; i < nodes_; ++i) vals[i] = phase(axis, l, i, d);
      double len = 0.0;
      for (std::size_t i = 0; i + 1 < nodes_; ++i) len += inside_fraction(vals[i], vals[i + 1], eps);
      total += len * h;
    }
    double cross = 1.0;
    for (int j = 1; j < M; ++j) cross *= 2.0 * A_ / opts_.lines;
    return total * cross;
  }

 private:
  double phase(int axis, std::size_t l, std::size_t i, const Vec& d) const {
    const int N = a_.space_dim();
    const double* av = values_[axis].data() + (l * nodes_ + i) * N;
    double s = d[0];
    for (int c = 0; c < N; ++c) s += av[c] * d[c + 1];
    return s;
  }

  // Fraction of [0, 1] where |p + t (q - p)| <= eps.
  static double inside_fraction(double p, double q, double eps) {
    const double dq = q - p;
    if (dq == 0.0) return std::abs(p) <= eps ? 1.0 : 0.0;
    double t0 = (-eps - p) / dq, t1 = (eps - p) / dq;
    if (t0 > t1) std::swap(t0, t1);
    return std::max(0.0, std::min(1.0, t1) - std::max(0.0, t0));
  }

  // Midpoint coordinates of line l on every axis except `axis`.
  Vec line_base(int axis, std::size_t l) const {
    const int M = a_.velocity_dim();
    Vec v(M, 0.0);
    for (int j = 0; j < M; ++j) {
      if (j == axis) continue;
      const std::size_t idx = l % opts_.lines;
      l /= opts_.lines;
      v[j] = -A_ + 2.0 * A_ * (idx + 0.5) / opts_.lines;
    }
    return v;
  }

  const VelocityField& a_;
  double A_;
  MeasureOptions opts_;
  std::size_t nodes_ = 0, lines_ = 0;
  std::vector<Vec> values_;
};

}  // namespace

double measure_1d(const std::function<double(double)>& phi, double eps, double lo, double hi,
                  int cells) {
  if (!(hi > lo)) return 0.0;
  if (eps < 0.0) return 0.0;
  Vec vals(cells + 1);
  for (int i = 0; i <= cells; ++i) vals[i] = phi(lo + (hi - lo) * i / cells);
  return measure_from_grid(phi, vals, eps, lo, hi);
}

double measure(const PhaseFunction& phi, double eps, double A, int cells) {
  return measure_1d([&](double u) { return phi(u); }, eps, -A, A, cells);
}

double measure(const VelocityField& a, const Direction& d, double eps, double A,
               MeasureOptions opts) {
  if (static_cast<int>(d.size()) != a.space_dim() + 1)
    throw PreconditionError("direction must have N + 1 components");
  return MeasureCache(a, A, opts)(d.components(), eps);
}

std::vector<Vec> witness_directions(const VelocityField& a, double A, int samples) {
  std::vector<Vec> out;
  if (a.velocity_dim() != 1) return out;
  const int N = a.space_dim();
  for (int s = 0; s < samples; ++s) {
    const double v = samples == 1 ? 0.0 : -A + 2.0 * A * s / (samples - 1);
    Eigen::MatrixXd m(N, N + 1);
    for (int k = 0; k < N; ++k) {
      const Vec row = dkb_row(a, v, k);
      for (int c = 0; c <= N; ++c) m(k, c) = row[c];
    }
    out.push_back(smallest_right_singular(m));
  }
  return out;
}

SupMeasure sup_measure(const VelocityField& a, double A, double eps, const SphereSampler& sampler,
                       MeasureOptions opts) {
  if (sampler.dim() != a.space_dim() + 1) throw PreconditionError("sampler must live on S^N");
  const MeasureCache cache(a, A, opts);
  const SphereExtremum e =
      sphere_maximize(sampler, [&](const Vec& d) { return cache(d, eps); }, witness_directions(a, A));
  return {e.value, e.point};
}

AlphaFit fit_alpha(const VelocityField& a, double A, const std::vector<double>& eps_grid,
                   const SphereSampler& sampler, MeasureOptions opts) {
  if (eps_grid.size() < 2) throw PreconditionError("fit_alpha needs at least two levels");
  if (sampler.dim() != a.space_dim() + 1) throw PreconditionError("sampler must live on S^N");
  const MeasureCache cache(a, A, opts);
  const std::vector<Vec> seeds = witness_directions(a, A);
  AlphaFit fit;
  fit.eps_grid = eps_grid;
  for (double eps : eps_grid) {
    const SphereExtremum e =
        sphere_maximize(sampler, [&](const Vec& d) { return cache(d, eps); }, seeds);
    fit.maximizers.push_back(e.point);
  }
  // Cross-evaluate every maximizer at every level: the sup over a common
  // candidate set is monotone in eps.
  const std::size_t n = eps_grid.size();
  std::vector<double> table(n * n);
  parallel_for(n * n, [&](std::size_t idx) {
    table[idx] = cache(fit.maximizers[idx % n], eps_grid[idx / n]);
  });
  fit.sup_measures.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (table[i * n + j] > fit.sup_measures[i]) {
        fit.sup_measures[i] = table[i * n + j];
        fit.maximizers[i] = fit.maximizers[j];
      }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  int m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(fit.sup_measures[i] > 0.0)) continue;
    const double x = std::log(eps_grid[i]), y = std::log(fit.sup_measures[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
    ++m;
  }
  if (m < 2) {
    fit.degenerate = true;
    return fit;
  }
  const double cxx = sxx - sx * sx / m, cxy = sxy - sx * sy / m, cyy = syy - sy * sy / m;
  fit.raw_slope = cxy / cxx;
  fit.C = std::exp((sy - fit.raw_slope * sx) / m);
  fit.r2 = cyy > 0.0 ? cxy * cxy / (cxx * cyy) : 0.0;
  fit.alpha = std::clamp(fit.raw_slope, std::numeric_limits<double>::min(), 1.0);
  fit.degenerate = fit.r2 < 0.9;
  return fit;
}

std::optional<int> multiplicity_at(const PhaseFunction& phi, double v, int kmax, double tol,
                                   double A) {
  for (int k = 0; k < kmax && k <= phi.smoothness(); ++k) {
    double scale = 0.0;
    for (int i = 0; i <= 128; ++i) scale = std::max(scale, std::abs(phi.derivative(-A + 2.0 * A * i / 128, k)));
    if (std::abs(phi.derivative(v, k)) > tol * (1.0 + scale)) return k;
  }
  return std::nullopt;
}

MultiplicityReport field_multiplicity(const VelocityField& a, double A, int kmax, int samples) {
  if (a.velocity_dim() != 1) throw PreconditionError("field multiplicity needs M = 1");
  MultiplicityReport rep;
  rep.kmax = kmax;
  const std::vector<Vec> dirs = witness_directions(a, A, samples);
  rep.points.resize(samples);
  rep.per_point.resize(samples);
  rep.witnesses = dirs;
  parallel_for(samples, [&](std::size_t s) {
    const double v = samples == 1 ? 0.0 : -A + 2.0 * A * s / (samples - 1);
    rep.points[s] = v;
    const auto m = multiplicity_at(make_phase(a, Direction::normalized(dirs[s])), v, kmax, 1e-7, A);
    rep.per_point[s] = m ? *m : -1;
  });
  for (int s = 0; s < samples; ++s) {
    const int m = rep.per_point[s] < 0 ? kmax : rep.per_point[s];
    if (rep.per_point[s] < 0) rep.saturated = true;
    if (s == 0 || m > rep.sup) {
      rep.sup = m;
      rep.witness_point = rep.points[s];
      rep.witness_direction = Direction::normalized(dirs[s]).components();
    }
  }
  return rep;
}

double cbar_constant(int k) {
  if (k < 1) throw PreconditionError("order must be >= 1");
  double c = 2.0;
  for (int j = 1; j < k; ++j) {
    const double e = 1.0 / (j + 1);
    c = std::pow(2.0, e) * (j + 1) * std::pow(j, e - 1.0) * std::pow(c, 1.0 - e);
  }
  return c;
}

MeasureBoundReport measure_bound_check(const PhaseFunction& phi, int k, double delta, double lo,
                                       double hi, const std::vector<double>& eps_grid) {
  require_derivative_lower_bound(phi, k, delta, lo, hi);
  MeasureBoundReport rep;
  rep.cbar = cbar_constant(k);
  rep.rows.resize(eps_grid.size());
  parallel_for(eps_grid.size(), [&](std::size_t i) {
    MeasureBoundRow& r = rep.rows[i];
    r.eps = eps_grid[i];
    r.measure = measure_1d([&](double u) { return phi(u); }, r.eps, lo, hi);
    r.bound = rep.cbar * std::pow(r.eps / delta, 1.0 / k);
    r.ratio = r.measure / r.bound;
  });
  for (const auto& r : rep.rows) rep.worst_ratio = std::max(rep.worst_ratio, r.ratio);
  rep.pass = rep.worst_ratio <= 1.0 + 1e-9;
  return rep;
}

GammaNDResult check_gammaND(const VelocityField& a, const ForceField& F, int gamma, double A,
                            const SphereSampler& sampler, GammaNDOptions opts) {
  if (gamma < 1) throw PreconditionError("gamma must be >= 1");
  const int M = a.velocity_dim(), N = a.space_dim(), dim = N + 1;
  if (sampler.dim() != dim) throw PreconditionError("sampler must live on S^N");
  const int per_axis = M == 1 ? opts.v_points : std::min(opts.v_points, 33);
  std::size_t count = 1;
  for (int j = 0; j < M; ++j) count *= per_axis;
  std::vector<Vec> vs(count);
  std::vector<Eigen::MatrixXd> mats(count);
  parallel_for(count, [&](std::size_t c) {
    Vec v(M);
    std::size_t r = c;
    for (int j = 0; j < M; ++j) {
      v[j] = -A + 2.0 * A * static_cast<double>(r % per_axis) / (per_axis - 1);
      r /= per_axis;
    }
    Eigen::MatrixXd m(gamma, dim);
    for (int k = 0; k < gamma; ++k) {
      const Vec row = directional_derivative(a, F, v, k);
      for (int i = 0; i < dim; ++i) m(k, i) = row[i];
    }
    vs[c] = std::move(v);
    mats[c] = std::move(m);
  });
  auto sum_at = [&](const Eigen::MatrixXd& m, const Vec& s) {
    const Eigen::Map<const Eigen::VectorXd> sv(s.data(), dim);
    return (m * sv).cwiseAbs().sum();
  };
  auto objective = [&](const Vec& s) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : mats) best = std::min(best, sum_at(m, s));
    return best;
  };
  std::vector<Vec> seeds;
  for (const auto& m : mats) seeds.push_back(smallest_right_singular(m));
  const SphereExtremum e = sphere_minimize(sampler, objective, seeds);

  GammaNDResult res;
  res.min_value = e.value;
  res.witness_direction = e.point;
  std::size_t arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < count; ++c) {
    const double s = sum_at(mats[c], e.point);
    if (s < best) {
      best = s;
      arg = c;
    }
  }
  res.witness_v = vs[arg];

  if (M == 1 && res.min_value > opts.threshold) {
    // Golden-section search in v around the best grid point, with the
    // smallest right singular vector as the direction at each v.
    auto at = [&](double v) {
      Eigen::MatrixXd m(gamma, dim);
      const Vec vv{v};
      for (int k = 0; k < gamma; ++k) {
        const Vec row = directional_derivative(a, F, vv, k);
        for (int i = 0; i < dim; ++i) m(k, i) = row[i];
      }
      const Vec s = smallest_right_singular(m);
      return std::pair{sum_at(m, s), s};
    };
    const double h = 2.0 * A / (per_axis - 1);
    double lo = std::max(-A, vs[arg][0] - h), hi = std::min(A, vs[arg][0] + h);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    double fc = at(c).first, fd = at(d).first;
    for (int it = 0; it < 60; ++it) {
      if (fc < fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - g * (hi - lo);
        fc = at(c).first;
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + g * (hi - lo);
        fd = at(d).first;
      }
    }
    const double vbest = fc < fd ? c : d;
    const auto [val, s] = at(vbest);
    if (val < res.min_value) {
      res.min_value = val;
      res.witness_direction = s;
      res.witness_v = {vbest};
    }
  }
  res.holds = res.min_value > opts.threshold;
  return res;
}

GammaSearch gamma_opt(const VelocityField& a, const ForceField& F, double A, int gamma_max,
                      const SphereSampler& sampler, GammaNDOptions opts) {
  GammaSearch out;
  for (int g = 1; g <= gamma_max; ++g) {
    out.attempts.push_back(check_gammaND(a, F, g, A, sampler, opts));
    if (out.attempts.back().holds) {
      out.gamma = g;
      break;
    }
  }
  return out;
}

ExponentComparison compare_exponents(int N, int M) {
  if (N < 1 || M < 1) throw PreconditionError("dimensions must be positive");
  ExponentComparison c;
  c.inv_gamma_opt = 1.0 / (N + 1);
  double alpha;
  if (M >= N)
    alpha = 1.0;
  else if (M == 1)
    alpha = 1.0 / N;
  else {
    c.verdict = "unknown";
    return c;
  }
  c.half_alpha_opt = alpha / 2.0;
  const double diff = c.inv_gamma_opt - c.half_alpha_opt;
  if (std::abs(diff) <= 1e-12)
    c.verdict = "tie";
  else
    c.verdict = diff > 0 ? "derivative-condition" : "measure-condition";
  return c;
}

}  // namespace avglemma
