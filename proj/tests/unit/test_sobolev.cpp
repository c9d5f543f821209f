#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "avglemma/errors.hpp"
#include "avglemma/sobolev.hpp"
#include "doctest.h"

using namespace avglemma;

namespace {

TorusGrid lattice(int N, int n_x) {
  TorusGrid g;
  g.N = N;
  g.n_x = n_x;
  g.n_v = 16;
  g.P = 2.0;
  g.A = 1.5;
  return g;
}

CVec power_law(const TorusGrid& g, double s) {
  CVec rho(g.y_count());
  for (std::size_t y = 0; y < rho.size(); ++y) {
    if (g.is_nyquist(y)) continue;
    const Vec Y = g.y_at(y);
    double n = 0.0;
    for (double c : Y) n += c * c;
    rho[y] = std::pow(1.0 + std::sqrt(n), -s);
  }
  return rho;
}

// -i (-y chi'(y) - 1 + chi(y)) / y^2 at 50 significant digits.
double m0_imag_reference(double yd) {
  using boost::multiprecision::cpp_bin_float_50;
  const cpp_bin_float_50 y = yd, y2 = y * y, r = 1 / (1 - y2);
  const cpp_bin_float_50 c = exp(-y2 * r);
  const cpp_bin_float_50 dchi = c * (-2 * y * r * r);
  const cpp_bin_float_50 v = -(-y * dchi - 1 + c) / y2;
  return v.convert_to<double>();
}

}  // namespace

TEST_SUITE("sobolev") {
  TEST_CASE("weighted energy") {
    const TorusGrid g = lattice(1, 8);
    CVec rho(g.y_count(), 0.0);
    rho[0] = 1.0;             // Y = 0
    rho[3] = Complex(0, 2.0);  // Y = (0, 3)
    CHECK(weighted_energy(g, rho, 0.0) == doctest::Approx(5.0));
    CHECK(weighted_energy(g, rho, 0.5) == doctest::Approx(1.0 + 4.0 * 3.0));
    CHECK(weighted_energy(g, rho, 1.0) == doctest::Approx(1.0 + 4.0 * 9.0));
    CHECK_THROWS_AS(weighted_energy(g, rho, -0.1), PreconditionError);
    double prev = 0.0;
    const CVec p = power_law(g, 0.3);
    for (double s : {0.0, 0.25, 0.5, 1.0, 2.0}) {
      const double e = weighted_energy(g, p, s);
      CHECK(e >= prev);
      prev = e;
    }
  }

  TEST_CASE("shell spectrum bookkeeping") {
    const TorusGrid g = lattice(1, 16);
    CVec rho(g.y_count(), 1.0);
    const ShellSpectrum s = shell_spectrum(g, rho);
    double total = s.core;
    for (double e : s.energies) total += e;
    CHECK(total == doctest::Approx(s.total));
    CHECK(s.edges.size() == s.energies.size());
    CHECK(s.edges[0] == 1.0);
  }

  TEST_CASE("exponent of a synthetic power law") {
    const TorusGrid g = lattice(2, 64);
    const SobolevEstimate e = estimate_exponent(g, power_law(g, 0.5));
    CHECK_FALSE(e.saturated);
    CHECK(e.s_star >= 0.4);
    CHECK(e.s_star <= 0.6);
    CVec scaled = power_law(g, 0.5);
    for (auto& x : scaled) x *= 3.0;
    CHECK(estimate_exponent(g, scaled).s_star == doctest::Approx(e.s_star).epsilon(1e-12));
  }

  TEST_CASE("white noise has exponent near zero") {
    const TorusGrid g = lattice(2, 64);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    CVec rho(g.y_count());
    for (auto& x : rho) x = Complex(n(rng), n(rng));
    const SobolevEstimate e = estimate_exponent(g, rho);
    CHECK(e.s_star >= -0.1);
    CHECK(e.s_star <= 0.1);
  }

  TEST_CASE("band-limited data is saturated") {
    const TorusGrid g = lattice(2, 64);
    CVec rho = power_law(g, 1.0);
    for (std::size_t y = 0; y < rho.size(); ++y) {
      const Vec Y = g.y_at(y);
      if (Y[0] * Y[0] + Y[1] * Y[1] + Y[2] * Y[2] >= 16.0) rho[y] = 0.0;
    }
    CHECK(estimate_exponent(g, rho).saturated);
  }

  TEST_CASE("cutoff function") {
    CHECK(chi(0.0) == 1.0);
    CHECK(chi(0.5) == doctest::Approx(std::exp(-1.0 / 3.0)));
    CHECK(chi(1.0) == 0.0);
    CHECK(chi(-2.0) == 0.0);
  }

  TEST_CASE("m0 values") {
    CHECK(std::abs(m0_eval(0.0) - Complex(0.0, -1.0)) <= 1e-15);
    CHECK(std::abs(m0_eval(1e-7) - Complex(0.0, -1.0)) <= 1e-12);
    for (double y : {1.0, 1.5, -3.0})
      CHECK(std::abs(m0_eval(y) - Complex(0.0, 1.0 / (y * y))) <= 1e-15);
    CHECK(m0_eval(0.5).imag() == doctest::Approx(-1.41379212433529655877).epsilon(1e-13));
    for (double y : {1e-3, 0.05, 0.3, 0.5, 0.7, 0.9, 0.99, -0.6}) {
      const double ref = m0_imag_reference(y);
      CHECK(m0_eval(y).real() == 0.0);
      CHECK(std::abs(m0_eval(y).imag() - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    }
  }

  TEST_CASE("m0 series near zero") {
    for (double y : {2e-4, 1e-3, 5e-3, 1e-2}) {
      const double y2 = y * y;
      const double series = -(1.0 + 1.5 * y2 + 5.0 / 6.0 * y2 * y2 - 7.0 / 24.0 * y2 * y2 * y2);
      CHECK(std::abs(m0_eval(y).imag() - series) <= 1e-8);
    }
  }

  TEST_CASE("m0 jets match finite differences") {
    for (double y : {0.1, 0.45, 0.6, 0.85, 1.3}) {
      const auto jet = m0_jet(y, 2);
      REQUIRE(jet.size() == 3);
      CHECK(std::abs(jet[0] - m0_eval(y)) <= 1e-12);
      const double h = 1e-5;
      const Complex d1 = (m0_eval(y + h) - m0_eval(y - h)) / (2 * h);
      const Complex d2 = (m0_eval(y + h) - 2.0 * m0_eval(y) + m0_eval(y - h)) / (h * h);
      CHECK(std::abs(jet[1] - d1) <= 1e-6 * std::max(1.0, std::abs(d1)));
      CHECK(std::abs(jet[2] - d2) <= 1e-3 * std::max(1.0, std::abs(d2)));
    }
  }

  TEST_CASE("multiplier bounds") {
    MultiplierOptions o;
    o.t_points = 120;
    o.v_points = 5;
    const MultiplierReport c = multiplier_bound_check(catalog("constant", 2, 1).field, 1.0, 2, o);
    CHECK(c.pass);
    for (const auto& row : c.rows) CHECK(row.sup == 0.0);
    const MultiplierReport id = multiplier_bound_check(catalog("identity", 2, 2).field, 1.0, 2, o);
    CHECK(id.finite);
    CHECK(id.support_ok);
    CHECK(id.min_b == doctest::Approx(1.0));
    CHECK(id.rows.size() == 6);
  }

  TEST_CASE("gain certificate for a zero pair") {
    TorusGrid g = lattice(1, 8);
    g.n_v = 32;
    const CatalogEntry e = catalog("polynomial-curve", 1, 1);
    PairSpec spec;
    spec.zero = true;
    const Pair p = make_pair(spec, g, e.field, e.force);
    GainOptions o;
    o.sphere_points = 256;
    o.u_points = 513;
    const GainReport r = gain_certificate(p.f, p.g, e.field, e.force, 2, o);
    CHECK(r.worst_ratio == 0.0);
    CHECK(r.pass);
  }

  TEST_CASE("gain certificate for a small random pair") {
    TorusGrid g = lattice(1, 16);
    g.n_v = 32;
    const CatalogEntry e = catalog("polynomial-curve", 1, 1);
    PairSpec spec;
    spec.mode = PairSpec::Mode::random;
    spec.cutoff = 8.0;
    const Pair p = make_pair(spec, g, e.field, e.force);
    GainOptions o;
    o.sphere_points = 256;
    o.u_points = 513;
    const GainReport r = gain_certificate(p.f, p.g, e.field, e.force, 2, o);
    CHECK(r.residual <= 1e-6);
    CHECK(r.L > 0.0);
    CHECK(r.worst_ratio <= 1.0);
    CHECK(r.pass);
    CHECK_THROWS_AS(gain_certificate(p.f, p.g, e.field, e.force, 1, o), NonDegeneracyError);
    SpectralKineticField g2 = p.g;
    for (auto& x : g2.data) x *= 2.0;
    CHECK_THROWS_AS(gain_certificate(p.f, g2, e.field, e.force, 2, o), PreconditionError);
  }
}
