#include "avglemma/sobolev.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "avglemma/errors.hpp"
#include "avglemma/oscillatory.hpp"
#include "avglemma/parallel.hpp"
#include "avglemma/sphere.hpp"
#include "avglemma/sublevel.hpp"

namespace avglemma {
namespace {

using Complex = std::complex<double>;

double norm_of(const Vec& Y) {
  double s = 0.0;
  for (double y : Y) s += y * y;
  return std::sqrt(s);
}

// Truncated Taylor series sum_n c[n] h^n.
struct Jet {
  Vec c;
  explicit Jet(int K, double c0 = 0.0) : c(K + 1, 0.0) { c[0] = c0; }
  int order() const { return static_cast<int>(c.size()) - 1; }
};

Jet operator*(const Jet& a, const Jet& b) {
  Jet r(a.order());
  for (int n = 0; n <= r.order(); ++n)
    for (int j = 0; j <= n; ++j) r.c[n] += a.c[j] * b.c[n - j];
  return r;
}

Jet operator+(Jet a, const Jet& b) {
  for (int n = 0; n <= a.order(); ++n) a.c[n] += b.c[n];
  return a;
}

Jet operator*(double s, Jet a) {
  for (auto& x : a.c) x *= s;
  return a;
}

Jet recip(const Jet& a) {
  Jet r(a.order());
  r.c[0] = 1.0 / a.c[0];
  for (int n = 1; n <= r.order(); ++n) {
    double s = 0.0;
    for (int j = 1; j <= n; ++j) s += a.c[j] * r.c[n - j];
    r.c[n] = -s * r.c[0];
  }
  return r;
}

// exp(a) - 1 when minus_one is set, exp(a) otherwise.
Jet exp_jet(const Jet& a, bool minus_one = false) {
  Jet e(a.order());
  e.c[0] = std::exp(a.c[0]);
  for (int n = 1; n <= e.order(); ++n) {
    double s = 0.0;
    for (int j = 1; j <= n; ++j) s += j * a.c[j] * e.c[n - j];
    e.c[n] = s / n;
  }
  if (minus_one) e.c[0] = std::expm1(a.c[0]);
  return e;
}

// Real jet of i * m0 around y0 (m0 is purely imaginary), or of its
// chi-dependent part when chi_only is set.
Jet m0_real_jet(double y0, int K, bool chi_only) {
  if (std::abs(y0) >= 1.0) {
    if (chi_only) return Jet(K);
    Jet y(K, y0);
    if (K >= 1) y.c[1] = 1.0;
    return -1.0 * recip(y * y);  // i * (i / y^2)
  }
  Jet y(K, y0);
  if (K >= 1) y.c[1] = 1.0;
  const Jet y2 = y * y;
  const Jet r = recip(Jet(K, 1.0) + (-1.0) * y2);
  const Jet q = y2 * r;
  const Jet chi = q.c[0] > 700.0 ? Jet(K) : exp_jet(-1.0 * q);
  const Jet r2 = r * r;
  if (chi_only) return 2.0 * (chi * r2) + chi * recip(y2);
  if (std::abs(y0) < 0.5) {
    // expm1(-q) / y^2 = sum_{n >= 1} (-1)^n y^(2(n-1)) r^n / n!
    Jet sum = 2.0 * (chi * r2);
    Jet ypow(K, 1.0), rpow = r;
    double fact = 1.0;
    for (int n = 1; n <= 60; ++n) {
      fact *= n;
      const Jet term = ((n % 2 ? -1.0 : 1.0) / fact) * (ypow * rpow);
      sum = sum + term;
      double mx = 0.0;
      for (double x : term.c) mx = std::max(mx, std::abs(x));
      if (mx < 1e-18) break;
      ypow = ypow * y2;
      rpow = rpow * r;
    }
    return sum;
  }
  return (2.0 * (y2 * chi * r2) + exp_jet(-1.0 * q, true)) * recip(y2);
}

// i*m0 = value above, so m0 = -i * value.
std::vector<Complex> to_derivatives(const Jet& j) {
  std::vector<Complex> out(j.c.size());
  double fact = 1.0;
  for (std::size_t k = 0; k < j.c.size(); ++k) {
    if (k > 0) fact *= static_cast<double>(k);
    out[k] = Complex(0.0, -fact * j.c[k]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- shells

ShellSpectrum shell_spectrum(const TorusGrid& grid, const CVec& rho) {
  if (rho.size() != grid.y_count()) throw PreconditionError("rho does not match the grid");
  ShellSpectrum s;
  for (std::size_t y = 0; y < rho.size(); ++y) {
    if (grid.is_nyquist(y)) continue;
    const double r = norm_of(grid.y_at(y));
    const double e = std::norm(rho[y]);
    s.total += e;
    if (r < 1.0) {
      s.core += e;
      continue;
    }
    std::size_t j = 0;
    while (std::ldexp(1.0, static_cast<int>(j) + 1) <= r) ++j;
    if (j >= s.energies.size()) {
      s.energies.resize(j + 1, 0.0);
      s.counts.resize(j + 1, 0);
    }
    s.energies[j] += e;
    ++s.counts[j];
  }
  for (std::size_t j = 0; j < s.energies.size(); ++j)
    s.edges.push_back(std::ldexp(1.0, static_cast<int>(j)));
  return s;
}

double weighted_energy(const TorusGrid& grid, const CVec& rho, double s) {
  if (!(s >= 0.0)) throw PreconditionError("weighted energy needs s >= 0");
  if (rho.size() != grid.y_count()) throw PreconditionError("rho does not match the grid");
  double total = 0.0;
  for (std::size_t y = 0; y < rho.size(); ++y) {
    const double r = norm_of(grid.y_at(y));
    total += std::max(1.0, std::pow(r, 2.0 * s)) * std::norm(rho[y]);
  }
  return total * grid.y_cell();
}

SobolevEstimate estimate_exponent(const TorusGrid& grid, const CVec& rho) {
  const ShellSpectrum sp = shell_spectrum(grid, rho);
  double emax = 0.0;
  for (std::size_t j = 0; j < sp.energies.size(); ++j)
    if (sp.counts[j] > 0) emax = std::max(emax, sp.energies[j] / sp.counts[j]);
  SobolevEstimate est;
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < sp.energies.size(); ++j) {
    if (sp.counts[j] == 0) continue;
    const double mean = sp.energies[j] / sp.counts[j];
    if (!(mean > 1e-28 * emax) || mean == 0.0) continue;
    if (est.populated == 0) est.fit_lo = static_cast<int>(j);
    est.fit_hi = static_cast<int>(j);
    ++est.populated;
    const double w = std::min<double>(sp.counts[j], 64.0) / 64.0;
    const double x = static_cast<double>(j), yv = std::log2(mean);
    sw += w;
    sx += w * x;
    sy += w * yv;
    sxx += w * x * x;
    sxy += w * x * yv;
  }
  est.saturated = est.populated < 5;
  if (est.populated >= 2) {
    const double slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    est.s_star = -slope / 2.0;
  }
  return est;
}

// ---------------------------------------------------------------- gain

GainReport gain_certificate(const SpectralKineticField& f, const SpectralKineticField& g,
                            const VelocityField& a, const ForceField& F, int gamma,
                            GainOptions opts) {
  const TorusGrid& grid = f.grid;
  const double A = grid.A;
  const double radius = opts.psi_radius > 0.0 ? opts.psi_radius : A;
  if (radius > A) throw SupportError("test function radius exceeds the support box");
  GainReport rep;
  rep.gamma = gamma;
  rep.f_norm = f.l2_norm();
  rep.g_norm = g.l2_norm();

  rep.residual = ode_residual(f, g, a, F).relative;
  if (!(rep.residual <= opts.residual_tol))
    throw PreconditionError("pair does not solve the equation: relative residual " +
                            std::to_string(rep.residual));

  const SphereSampler sampler(grid.N + 1, opts.sphere_points);
  const GammaNDResult nd = check_gammaND(a, F, gamma, A, sampler);
  if (!nd.holds)
    throw NonDegeneracyError("derivative condition fails at gamma = " + std::to_string(gamma) +
                             " (min " + std::to_string(nd.min_value) + ")");

  const double r2 = radius * radius;
  Amplitude amp;
  amp.value = [r2](double u) { return u * u < r2 ? std::exp(1.0 - 1.0 / (1.0 - u * u / r2)) : 0.0; };
  amp.deriv = [r2](double u) {
    if (u * u >= r2) return 0.0;
    const double t = 1.0 - u * u / r2;
    return std::exp(1.0 - 1.0 / t) * (-2.0 * u / r2) / (t * t);
  };
  const AmplitudeNorms norms = amplitude_norms(amp, -A, A);
  PartitionOptions po;
  po.u_points = opts.u_points;
  po.sphere_points = opts.sphere_points;
  const PartitionedBound pb = partitioned_bound(a, F, norms, gamma, A, po);
  rep.L = pb.d_gamma;
  rep.delta = pb.delta;

  const SliceChoice choice = select_v1_slice(f);
  if (choice.v1 > A) throw PreconditionError("slice lies outside the support box");
  rep.v1_index = choice.index;
  const Slice slice = extract_slice(f, choice.index);
  const SliceSolution sol = reconstruct_from_slice(slice, g, a, F);
  rep.rho = sol.velocity_average(bump(radius));
  const Vec Sg = sol.source_box_energy();

  const std::size_t ny = grid.y_count(), nw = grid.w_count();
  const double dw = std::pow(grid.dv(), grid.M - 1);
  const double fn = F.norm();
  const double cf = 2.0 * rep.L * rep.L * std::pow(2.0 * A, grid.M - 1);
  const double cg = 2.0 * rep.L * rep.L * std::pow(2.0 * A, grid.M) / (fn * fn);
  std::vector<bool> inside(nw, true);
  for (std::size_t w = 0; w < nw; ++w) {
    std::size_t r = w;
    for (int j = 0; j < grid.M - 1; ++j) {
      if (std::abs(grid.v_node(static_cast<int>(r % grid.n_v))) > A) inside[w] = false;
      r /= grid.n_v;
    }
  }
  rep.lhs.assign(ny, 0.0);
  rep.rhs.assign(ny, 0.0);
  Vec ratio(ny, 0.0);
  parallel_for(ny, [&](std::size_t y) {
    double Sf = 0.0;
    for (std::size_t w = 0; w < nw; ++w)
      if (inside[w]) Sf += std::norm(slice.data[y * nw + w]) * dw;
    const double Y = norm_of(grid.y_at(y));
    rep.lhs[y] = std::max(1.0, std::pow(Y, 2.0 / gamma)) * std::norm(rep.rho[y]);
    rep.rhs[y] = cf * Sf + cg * Sg[y];
    if (rep.lhs[y] > 0.0)
      ratio[y] = rep.rhs[y] > 0.0 ? rep.lhs[y] / rep.rhs[y] : std::numeric_limits<double>::infinity();
  });
  std::size_t worst = 0;
  for (std::size_t y = 0; y < ny; ++y)
    if (ratio[y] > ratio[worst]) worst = y;
  rep.worst_ratio = ratio[worst];
  rep.worst_y = grid.y_at(worst);
  rep.pass = rep.worst_ratio <= 1.0;

  rep.rho_exponent = estimate_exponent(grid, rep.rho);
  // Slice at w = 0.
  std::size_t w0 = 0, stride = 1;
  for (int j = 0; j < grid.M - 1; ++j) {
    w0 += static_cast<std::size_t>(grid.n_v / 2) * stride;
    stride *= grid.n_v;
  }
  CVec line(ny);
  for (std::size_t y = 0; y < ny; ++y) line[y] = slice.data[y * nw + w0];
  rep.slice_exponent = estimate_exponent(grid, line);
  return rep;
}

// ---------------------------------------------------------------- multiplier

double chi(double y) {
  const double y2 = y * y;
  if (y2 >= 1.0) return 0.0;
  return std::exp(-y2 / (1.0 - y2));
}

Complex m0_eval(double y) {
  const double y2 = y * y;
  if (std::abs(y) < 1e-4)
    return Complex(0.0, -(1.0 + y2 * (1.5 + y2 * (5.0 / 6.0 - y2 * 7.0 / 24.0))));
  if (y2 >= 1.0) return Complex(0.0, 1.0 / y2);
  const double r = 1.0 / (1.0 - y2);
  const double q = y2 * r;
  const double value = (2.0 * y2 * std::exp(-q) * r * r + std::expm1(-q)) / y2;
  return Complex(0.0, -value);
}

std::vector<Complex> m0_jet(double y, int k) {
  if (k < 0) throw PreconditionError("jet order must be >= 0");
  return to_derivatives(m0_real_jet(y, k, false));
}

MultiplierReport multiplier_bound_check(const VelocityField& a, double A, int k_max,
                                        MultiplierOptions opts) {
  if (k_max < 0) throw PreconditionError("k_max must be >= 0");
  const int M = a.velocity_dim();
  MultiplierReport rep;

  struct Sweep {
    std::vector<Vec> sup;   // [k][j]
    std::vector<Vec> tail;  // [k][j]
    std::vector<Vec> chi_beyond;
    double min_b = std::numeric_limits<double>::infinity();
  };
  auto sweep = [&](int t_points, int v_points) {
    std::size_t nv = 1;
    for (int j = 0; j < M; ++j) nv *= v_points;
    Vec ts(t_points);
    for (int i = 0; i < t_points; ++i)
      ts[i] = opts.t_min * std::pow(opts.t_max / opts.t_min, static_cast<double>(i) / (t_points - 1));
    // Per velocity sample: |b| and the coefficients a . d_j a / |b|.
    std::vector<double> beta(nv);
    std::vector<Vec> coef(nv, Vec(M));
    for (std::size_t c = 0; c < nv; ++c) {
      Vec v(M);
      std::size_t r = c;
      for (int j = 0; j < M; ++j) {
        v[j] = v_points == 1 ? 0.0 : -A + 2.0 * A * static_cast<double>(r % v_points) / (v_points - 1);
        r /= v_points;
      }
      const Vec b = a.b(v);
      beta[c] = norm_of(b);
      const Vec av = a(v);
      for (int j = 0; j < M; ++j) {
        std::vector<int> e(M, 0);
        e[j] = 1;
        const Vec d = a.derivative(v, e);
        double s = 0.0;
        for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * d[i];
        coef[c][j] = s / beta[c];
      }
    }
    Sweep out;
    for (double b : beta) out.min_b = std::min(out.min_b, b);
    const double threshold = (1.0 + 1e-9) / out.min_b;
    std::vector<std::vector<Vec>> sup(nv, std::vector<Vec>(k_max + 1, Vec(M, 0.0)));
    std::vector<std::vector<Vec>> tail = sup, chib = sup;
    parallel_for(nv, [&](std::size_t c) {
      const double B = beta[c];
      // |t|^k |d^k/dt^k [t m0(B t)]|, using B^k t m0^(k)(B t) + k B^(k-1) m0^(k-1)(B t).
      auto bracket = [&](double t, int k, bool chi_only) {
        const Jet jet = m0_real_jet(B * t, k, chi_only);
        double fk = 1.0;
        for (int i = 2; i <= k; ++i) fk *= i;
        double v = std::pow(B, k) * t * fk * jet.c[k];
        if (k > 0) v += k * std::pow(B, k - 1) * (fk / k) * jet.c[k - 1];
        return std::abs(v) * std::pow(t, k);
      };
      for (int k = 0; k <= k_max; ++k) {
        Vec vals(t_points);
        double part_max = 0.0;
        for (int i = 0; i < t_points; ++i) {
          vals[i] = bracket(ts[i], k, false);
          if (ts[i] >= threshold) part_max = std::max(part_max, bracket(ts[i], k, true));
        }
        // Grid maxima polished by golden-section search in log t over the adjacent cells.
        double best = 0.0;
        for (int i = 0; i < t_points; ++i) {
          best = std::max(best, vals[i]);
          const bool peak = (i == 0 || vals[i] >= vals[i - 1]) && (i + 1 == t_points || vals[i] >= vals[i + 1]);
          if (!peak || vals[i] == 0.0) continue;
          double lo = std::log(ts[std::max(i - 1, 0)]), hi = std::log(ts[std::min(i + 1, t_points - 1)]);
          const double g = 0.5 * (std::sqrt(5.0) - 1.0);
          double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
          double f1 = bracket(std::exp(x1), k, false), f2 = bracket(std::exp(x2), k, false);
          for (int it = 0; it < 60; ++it) {
            if (f1 > f2) {
              hi = x2;
              x2 = x1;
              f2 = f1;
              x1 = hi - g * (hi - lo);
              f1 = bracket(std::exp(x1), k, false);
            } else {
              lo = x1;
              x1 = x2;
              f1 = f2;
              x2 = lo + g * (hi - lo);
              f2 = bracket(std::exp(x2), k, false);
            }
          }
          best = std::max({best, f1, f2});
        }
        for (int j = 0; j < M; ++j) {
          const double cj = std::abs(coef[c][j]);
          sup[c][k][j] = cj * best;
          chib[c][k][j] = cj * part_max;
          tail[c][k][j] = cj * vals[t_points - 1];
        }
      }
    });
    out.sup.assign(k_max + 1, Vec(M, 0.0));
    out.tail = out.sup;
    out.chi_beyond = out.sup;
    for (std::size_t c = 0; c < nv; ++c)
      for (int k = 0; k <= k_max; ++k)
        for (int j = 0; j < M; ++j) {
          out.sup[k][j] = std::max(out.sup[k][j], sup[c][k][j]);
          out.tail[k][j] = std::max(out.tail[k][j], tail[c][k][j]);
          out.chi_beyond[k][j] = std::max(out.chi_beyond[k][j], chib[c][k][j]);
        }
    return out;
  };

  const Sweep base = sweep(opts.t_points, opts.v_points);
  const Sweep fine = sweep(2 * opts.t_points - 1, 2 * opts.v_points - 1);
  rep.min_b = base.min_b;
  rep.finite = rep.stable = rep.support_ok = true;
  for (int k = 0; k <= k_max; ++k)
    for (int j = 0; j < M; ++j) {
      MultiplierRow row;
      row.k = k;
      row.j = j;
      row.sup = base.sup[k][j];
      row.sup_refined = fine.sup[k][j];
      const double scale = std::max(row.sup, row.sup_refined);
      row.relative_change = scale > 0.0 ? std::abs(row.sup_refined - row.sup) / scale : 0.0;
      row.tail = base.tail[k][j];
      row.chi_part_beyond = std::max(base.chi_beyond[k][j], fine.chi_beyond[k][j]);
      if (!(row.sup_refined < opts.finite_bound) || !std::isfinite(row.sup)) rep.finite = false;
      if (!(row.relative_change <= opts.stability_tol)) rep.stable = false;
      if (row.chi_part_beyond != 0.0) rep.support_ok = false;
      rep.rows.push_back(row);
    }
  rep.pass = rep.finite && rep.stable && rep.support_ok;
  return rep;
}

}  // namespace avglemma
