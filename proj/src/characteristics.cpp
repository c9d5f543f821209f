#include "avglemma/characteristics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "avglemma/errors.hpp"
#include "avglemma/parallel.hpp"

namespace avglemma {
namespace {

std::string describe(double t, const Vec& x, const Vec& w) {
  std::ostringstream os;
  os.precision(6);
  os << "(t=" << t << ", x=(";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << "), w=(";
  for (std::size_t i = 0; i < w.size(); ++i) os << (i ? "," : "") << w[i];
  os << "))";
  return os.str();
}

double sup_norm(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Eigen::MatrixXd to_matrix(const std::vector<Vec>& cols) {
  Eigen::MatrixXd J(cols.empty() ? 0 : cols[0].size(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < cols[j].size(); ++i) J(i, j) = cols[j][i];
  return J;
}

std::vector<PatchPoint> patch_points(const CharacteristicsMap& m) {
  const int n = m.options().samples;
  const std::size_t N = m.x0().size(), M = m.v0().size();
  const std::size_t dims = 1 + N + M;
  std::size_t count = 1;
  for (std::size_t d = 0; d < dims; ++d) count *= n;
  auto coord = [&](int i) { return n == 1 ? 0.0 : -1.0 + 2.0 * i / (n - 1); };
  std::vector<PatchPoint> pts(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t r = k;
    Vec c(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      c[d] = coord(static_cast<int>(r % n)) * m.radius();
      r /= n;
    }
    PatchPoint& p = pts[k];
    p.t = m.t0() + c[0];
    p.x.resize(N);
    p.w.resize(M);
    for (std::size_t i = 0; i < N; ++i) p.x[i] = m.x0()[i] + c[1 + i];
    for (std::size_t j = 0; j < M; ++j) p.w[j] = m.v0()[j] + c[1 + N + j];
  }
  return pts;
}

}  // namespace

CharacteristicsMap::CharacteristicsMap(VelocityField a, ForceField F, double t0, Vec x0, Vec v0,
                                       double radius, CharacteristicsOptions opts)
    : a_(std::move(a)), F_(std::move(F)), t0_(t0), x0_(std::move(x0)), v0_(std::move(v0)),
      radius_(radius), opts_(opts) {
  if (static_cast<int>(x0_.size()) != a_.space_dim() ||
      static_cast<int>(v0_.size()) != a_.velocity_dim() || F_.velocity_dim() != a_.velocity_dim())
    throw PreconditionError("patch center does not match the field dimensions");
  if (!(radius_ > 0.0)) throw PreconditionError("patch radius must be positive");
  if (opts_.steps < 1) throw PreconditionError("need at least one integrator step");
}

std::pair<Vec, Vec> CharacteristicsMap::flow(const Vec& xi, const Vec& w, double s) const {
  const std::size_t N = xi.size(), M = w.size();
  Vec x = xi, v = w;
  if (s == 0.0) return {x, v};
  const double h = s / opts_.steps;
  auto rhs = [&](double tt, const Vec& xx, const Vec& vv, Vec& dx, Vec& dv) {
    dx = a_(vv);
    dv = F_(tt, xx, vv);
  };
  Vec k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v, xt(N), vt(M);
  for (int i = 0; i < opts_.steps; ++i) {
    const double t = t0_ + i * h;
    rhs(t, x, v, k1x, k1v);
    for (std::size_t j = 0; j < N; ++j) xt[j] = x[j] + 0.5 * h * k1x[j];
    for (std::size_t j = 0; j < M; ++j) vt[j] = v[j] + 0.5 * h * k1v[j];
    rhs(t + 0.5 * h, xt, vt, k2x, k2v);
    for (std::size_t j = 0; j < N; ++j) xt[j] = x[j] + 0.5 * h * k2x[j];
    for (std::size_t j = 0; j < M; ++j) vt[j] = v[j] + 0.5 * h * k2v[j];
    rhs(t + 0.5 * h, xt, vt, k3x, k3v);
    for (std::size_t j = 0; j < N; ++j) xt[j] = x[j] + h * k3x[j];
    for (std::size_t j = 0; j < M; ++j) vt[j] = v[j] + h * k3v[j];
    rhs(t + h, xt, vt, k4x, k4v);
    for (std::size_t j = 0; j < N; ++j) x[j] += h / 6.0 * (k1x[j] + 2 * k2x[j] + 2 * k3x[j] + k4x[j]);
    for (std::size_t j = 0; j < M; ++j) v[j] += h / 6.0 * (k1v[j] + 2 * k2v[j] + 2 * k3v[j] + k4v[j]);
  }
  return {x, v};
}

Vec CharacteristicsMap::V(double t, const Vec& x, const Vec& w) const {
  const double s = t - t0_;
  if (s == 0.0) return w;
  const std::size_t N = x.size();
  const Vec aw = a_(w);
  Vec xi(N);
  for (std::size_t i = 0; i < N; ++i) xi[i] = x[i] - s * aw[i];
  const double tol = 1e-14 * (1.0 + sup_norm(x));
  for (int it = 0; it < opts_.newton_iterations; ++it) {
    auto [X, Vv] = flow(xi, w, s);
    Vec r(N);
    for (std::size_t i = 0; i < N; ++i) r[i] = X[i] - x[i];
    if (!std::isfinite(sup_norm(r))) break;
    if (sup_norm(r) <= tol) return Vv;
    std::vector<Vec> cols(N);
    const double h = opts_.jac_step;
    for (std::size_t j = 0; j < N; ++j) {
      Vec p = xi, m = xi;
      p[j] += h;
      m[j] -= h;
      const Vec Xp = flow(p, w, s).first, Xm = flow(m, w, s).first;
      cols[j].resize(N);
      for (std::size_t i = 0; i < N; ++i) cols[j][i] = (Xp[i] - Xm[i]) / (2 * h);
    }
    const Eigen::MatrixXd J = to_matrix(cols);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) break;
    const Eigen::VectorXd step = lu.solve(Eigen::Map<const Eigen::VectorXd>(r.data(), N));
    for (std::size_t i = 0; i < N; ++i) xi[i] -= step[i];
    // Accept a converged iterate whose residual stalls at rounding level.
    if (step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + sup_norm(xi))) return flow(xi, w, s).second;
  }
  throw PreconditionError("characteristic foot not found at " + describe(t, x, w));
}

double CharacteristicsMap::jacobian(double t, const Vec& x, const Vec& w) const {
  const std::size_t M = w.size();
  const double h = opts_.jac_step;
  std::vector<Vec> cols(M);
  for (std::size_t j = 0; j < M; ++j) {
    Vec p = w, m = w;
    p[j] += h;
    m[j] -= h;
    const Vec Vp = V(t, x, p), Vm = V(t, x, m);
    cols[j].resize(M);
    for (std::size_t i = 0; i < M; ++i) cols[j][i] = (Vp[i] - Vm[i]) / (2 * h);
  }
  return to_matrix(cols).determinant();
}

Vec CharacteristicsMap::residual(double t, const Vec& x, const Vec& w) const {
  const std::size_t N = x.size(), M = w.size();
  const double h = opts_.fd_step;
  auto d4 = [&](auto eval) {
    const Vec p2 = eval(2 * h), p1 = eval(h), m1 = eval(-h), m2 = eval(-2 * h);
    Vec d(M);
    for (std::size_t i = 0; i < M; ++i) d[i] = (-p2[i] + 8 * p1[i] - 8 * m1[i] + m2[i]) / (12 * h);
    return d;
  };
  const Vec v = V(t, x, w);
  Vec r = d4([&](double e) { return V(t + e, x, w); });
  const Vec av = a_(v);
  for (std::size_t k = 0; k < N; ++k) {
    const Vec dk = d4([&](double e) {
      Vec xx = x;
      xx[k] += e;
      return V(t, xx, w);
    });
    for (std::size_t i = 0; i < M; ++i) r[i] += av[k] * dk[i];
  }
  const Vec f = F_(t, x, v);
  for (std::size_t i = 0; i < M; ++i) r[i] -= f[i];
  return r;
}

PatchReport check_patch(const CharacteristicsMap& map) {
  const auto pts = patch_points(map);
  Vec res(pts.size()), jac(pts.size());
  parallel_for(pts.size(), [&](std::size_t k) {
    const PatchPoint& p = pts[k];
    res[k] = sup_norm(map.residual(p.t, p.x, p.w));
    jac[k] = map.jacobian(p.t, p.x, p.w);
  });
  PatchReport rep;
  rep.radius = map.radius();
  rep.points = pts.size();
  rep.min_jacobian = jac.empty() ? 0.0 : jac[0];
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (res[k] > rep.max_residual) {
      rep.max_residual = res[k];
      rep.worst_residual = pts[k];
    }
    rep.min_jacobian = std::min(rep.min_jacobian, jac[k]);
  }
  return rep;
}

CharacteristicsMap characteristics_diffeo(const VelocityField& a, const ForceField& F, double t0,
                                          const Vec& x0, const Vec& v0, double radius,
                                          CharacteristicsOptions opts, PatchReport* report) {
  int shrinks = 0;
  for (double r = radius;; r *= 0.5, ++shrinks) {
    CharacteristicsMap map(a, F, t0, x0, v0, r, opts);
    const auto pts = patch_points(map);
    std::vector<int> bad(pts.size(), 0);
    parallel_for(pts.size(), [&](std::size_t k) {
      try {
        if (!(map.jacobian(pts[k].t, pts[k].x, pts[k].w) > 0.0)) bad[k] = 1;
      } catch (const PreconditionError&) {
        bad[k] = 2;
      }
    });
    const auto it = std::find_if(bad.begin(), bad.end(), [](int b) { return b != 0; });
    if (it == bad.end()) {
      if (report) {
        *report = check_patch(map);
        report->shrinks = shrinks;
      }
      return map;
    }
    if (r * 0.5 < opts.min_radius) {
      const PatchPoint& p = pts[it - bad.begin()];
      throw PreconditionError(std::string(*it == 1 ? "jacobian det d_w V <= 0" : "foot iteration failed") +
                              " at " + describe(p.t, p.x, p.w) + "; patch radius fell below " +
                              std::to_string(opts.min_radius));
    }
  }
}

ConvergenceReport residual_convergence(const VelocityField& a, const ForceField& F, double t0,
                                       const Vec& x0, const Vec& v0, double radius,
                                       const std::vector<int>& steps, CharacteristicsOptions opts) {
  ConvergenceReport rep;
  rep.steps = steps;
  for (int s : steps) {
    opts.steps = s;
    PatchReport pr;
    characteristics_diffeo(a, F, t0, x0, v0, radius, opts, &pr);
    rep.max_residual.push_back(pr.max_residual);
  }
  const std::size_t n = steps.size();
  if (n >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = std::log(static_cast<double>(steps[i]));
      const double y = std::log(std::max(rep.max_residual[i], 1e-300));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    rep.order = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return rep;
}

}  // namespace avglemma
