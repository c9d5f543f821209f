#include <cmath>
#include <numbers>
#include <sstream>

#include "avglemma/errors.hpp"
#include "avglemma/quadrature.hpp"
#include "avglemma/transport.hpp"
#include "doctest.h"

using namespace avglemma;

namespace {

constexpr double kPi = std::numbers::pi;

TorusGrid small_grid(int N = 1, int M = 1, int n_x = 8, int n_v = 64) {
  TorusGrid g;
  g.N = N;
  g.M = M;
  g.n_x = n_x;
  g.n_v = n_v;
  g.L = 1.0;
  g.P = 2.0;
  g.A = 1.5;
  return g;
}

// Flat lattice index of the signed mode vector k.
std::size_t lattice_index(const TorusGrid& g, const std::vector<int>& k) {
  std::size_t idx = 0;
  for (int c : k) idx = idx * g.n_x + static_cast<std::size_t>((c + g.n_x) % g.n_x);
  return idx;
}

double max_abs_diff(const CVec& a, const CVec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("transport") {
  TEST_CASE("grid validation and layout") {
    TorusGrid g = small_grid();
    CHECK_NOTHROW(g.validate());
    g.n_x = 12;
    CHECK_THROWS_AS(g.validate(), PreconditionError);
    g = small_grid();
    g.A = 2.0;
    CHECK_THROWS_AS(g.validate(), PreconditionError);
    g = small_grid(2, 2, 4, 8);
    CHECK(g.y_count() == 64);
    CHECK(g.v_count() == 64);
    CHECK(g.w_count() == 8);
    const Vec Y = g.y_at(lattice_index(g, {1, -1, 2}));
    CHECK(Y[0] == 1.0);
    CHECK(Y[1] == -1.0);
    CHECK(Y[2] == 0.0);  // Nyquist
    CHECK(g.is_nyquist(lattice_index(g, {1, -1, 2})));
    const Vec v = g.v_at(1);
    CHECK(v[0] == doctest::Approx(-2.0 + 0.5));
    CHECK(v[1] == -2.0);
  }

  TEST_CASE("operator on a trigonometric profile") {
    // f = c e^{i Y.X} cos(pi (v + P) / P), a = v, F = 3:
    // ghat = i (Y0 + v Y1) fhat - 3 (pi / P) c sin(pi (v + P) / P).
    const TorusGrid g = small_grid();
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const ForceField F = ForceField::constant({3.0});
    SpectralKineticField f(g, FieldRole::f);
    const std::size_t y = lattice_index(g, {2, -3});
    const Complex c(0.3, -0.7);
    for (int i = 0; i < g.n_v; ++i) f.at(y, i) = c * std::cos(kPi * (g.v_node(i) + g.P) / g.P);
    const SpectralKineticField out = apply_operator(f, a, F);
    double err = 0.0;
    for (std::size_t yy = 0; yy < g.y_count(); ++yy)
      for (int i = 0; i < g.n_v; ++i) {
        const double v = g.v_node(i);
        Complex expect = 0.0;
        if (yy == y)
          expect = Complex(0.0, 2.0 - 3.0 * v) * f.at(y, i) -
                   3.0 * (kPi / g.P) * c * std::sin(kPi * (v + g.P) / g.P);
        err = std::max(err, std::abs(out.at(yy, i) - expect));
      }
    CHECK(err <= 1e-12);
  }

  TEST_CASE("operator velocity derivative matches the analytic Gaussian derivative") {
    const TorusGrid g = small_grid(1, 1, 4, 128);
    const VelocityField a = catalog("constant", 1, 1).field;
    const ForceField F = ForceField::constant({1.0});
    SpectralKineticField f(g, FieldRole::f);
    const double s = 0.25;
    for (int i = 0; i < g.n_v; ++i) f.at(0, i) = std::exp(-g.v_node(i) * g.v_node(i) / (2 * s * s));
    const SpectralKineticField out = apply_operator(f, a, F);
    double err = 0.0;
    for (int i = 0; i < g.n_v; ++i) {
      const double v = g.v_node(i);
      err = std::max(err, std::abs(out.at(0, i) + v / (s * s) * std::exp(-v * v / (2 * s * s))));
    }
    CHECK(err <= 1e-9);
  }

  TEST_CASE("operator rejects unresolved velocity spectra") {
    const TorusGrid g = small_grid(1, 1, 4, 32);
    SpectralKineticField f(g, FieldRole::f);
    for (int i = 0; i < g.n_v; ++i) f.at(1, i) = std::cos(2.0 * kPi * 14 * i / g.n_v);
    CHECK_THROWS_AS(apply_operator(f, catalog("polynomial-curve", 1, 1).field, ForceField::constant({1.0})),
                    AliasingError);
  }

  TEST_CASE("velocity frame rotation") {
    const Eigen::MatrixXd I = rotate_velocity_frame(ForceField::constant({3.0, 0.0}));
    CHECK((I - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-15);
    for (const Vec& Fv : {Vec{0.0, 2.0}, Vec{1.0, 1.0}, Vec{-1.0, 0.5}}) {
      const Eigen::MatrixXd R = rotate_velocity_frame(ForceField::constant(Fv));
      const Eigen::Vector2d RF = R * Eigen::Vector2d(Fv[0], Fv[1]);
      CHECK(RF(0) == doctest::Approx(std::hypot(Fv[0], Fv[1])));
      CHECK(std::abs(RF(1)) <= 1e-14);
      CHECK(R.determinant() == doctest::Approx(1.0));
      CHECK((R * R.transpose() - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-14);
    }
    CHECK_THROWS_AS(rotate_velocity_frame(ForceField::constant({0.0, 0.0})), UnsupportedError);
  }

  TEST_CASE("rotating a trigonometric field is exact") {
    const TorusGrid g = small_grid(2, 2, 2, 16);
    SpectralKineticField f(g, FieldRole::f);
    auto profile = [&](double v1, double v2) {
      return std::cos(kPi * (v1 + g.P) / g.P) + 0.5 * std::sin(2.0 * kPi * (v2 + g.P) / g.P);
    };
    for (std::size_t v = 0; v < g.v_count(); ++v) {
      const Vec x = g.v_at(v);
      f.at(1, v) = profile(x[0], x[1]);
    }
    const Eigen::MatrixXd R = rotate_velocity_frame(ForceField::constant({0.0, 1.0}));
    const SpectralKineticField r = rotate_field(f, R);
    double err = 0.0;
    for (std::size_t v = 0; v < g.v_count(); ++v) {
      const Vec x = g.v_at(v);
      const Eigen::Vector2d u = R.transpose() * Eigen::Vector2d(x[0], x[1]);
      err = std::max(err, std::abs(r.at(1, v) - profile(u(0), u(1))));
    }
    CHECK(err <= 1e-12);
  }

  TEST_CASE("primitive of b") {
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const Vec B = B_primitive(a, ForceField::constant({1.0}), 0.0, 1.0);
    CHECK(B[0] == doctest::Approx(-1.0));
    CHECK(B[1] == doctest::Approx(-0.5));
    const VelocityField c = catalog("polynomial-curve", 2, 1).field;
    const Vec B2 = B_primitive(c, ForceField::constant({2.0}), 0.0, 1.0);
    CHECK(B2[0] == doctest::Approx(-0.5));
    CHECK(B2[1] == doctest::Approx(-0.25));
    CHECK(B2[2] == doctest::Approx(-1.0 / 6.0));
  }

  TEST_CASE("slice selection") {
    const TorusGrid g = small_grid(1, 1, 4, 64);
    SpectralKineticField f(g, FieldRole::f);
    for (int i = 0; i < g.n_v; ++i) {
      const double v = g.v_node(i);
      f.at(3, i) = (v - 0.5) * (v - 0.5) + 0.01;
    }
    const SliceChoice s = select_v1_slice(f);
    CHECK(s.v1 == doctest::Approx(0.5));
    CHECK(s.h_value == doctest::Approx(1e-4));
    CHECK(s.h_mean > s.h_value);
  }

  TEST_CASE("zero source conserves the slice modulus") {
    const TorusGrid g = small_grid(1, 1, 8, 32);
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const ForceField F = ForceField::constant({1.0});
    PairSpec spec;
    spec.mode = PairSpec::Mode::random;
    spec.seed = 11;
    const Pair p = make_pair(spec, g, a, F);
    const Slice slice = extract_slice(p.f, p.v1_index);
    const SliceSolution sol =
        reconstruct_from_slice(slice, SpectralKineticField(g, FieldRole::g), a, F);
    double err = 0.0;
    for (std::size_t y = 0; y < g.y_count(); ++y)
      for (int i = 0; i < g.n_v; ++i)
        err = std::max(err, std::abs(std::abs(sol.field().at(y, i)) - std::abs(slice.data[y])));
    CHECK(err <= 1e-12);
  }

  TEST_CASE("source box energy of a two-mode profile") {
    // ghat(v) = e^{i pi m1 (v + P) / P} + 0.5 e^{i pi m2 (v + P) / P}, integrated over [-A, A].
    const TorusGrid g = small_grid(1, 1, 4, 32);
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const ForceField F = ForceField::constant({1.0});
    SpectralKineticField src(g, FieldRole::g);
    const int m1 = 3, m2 = -5;
    auto profile = [&](double v) {
      return std::polar(1.0, kPi * m1 * (v + g.P) / g.P) + 0.5 * std::polar(1.0, kPi * m2 * (v + g.P) / g.P);
    };
    for (std::size_t y = 0; y < g.y_count(); ++y)
      for (int i = 0; i < g.n_v; ++i) src.at(y, i) = static_cast<double>(y + 1) * profile(g.v_node(i));
    Slice slice;
    slice.grid = g;
    slice.v1_index = 20;
    slice.data.assign(g.y_count(), Complex(0.0));
    const SliceSolution sol = reconstruct_from_slice(slice, src, a, F);
    const Vec e = sol.source_box_energy();
    const GaussRule r = gauss_legendre(16);
    double oracle = 0.0;
    const int panels = 200;
    const double h = 2.0 * g.A / panels;
    for (int p = 0; p < panels; ++p)
      for (std::size_t i = 0; i < r.nodes.size(); ++i)
        oracle += 0.5 * h * r.weights[i] * std::norm(profile(-g.A + (p + 0.5) * h + 0.5 * h * r.nodes[i]));
    for (std::size_t y = 0; y < g.y_count(); ++y)
      CHECK(e[y] == doctest::Approx(oracle * (y + 1) * (y + 1)).epsilon(1e-11));
  }

  TEST_CASE("manufactured round trip") {
    const TorusGrid g = small_grid(1, 1, 16, 64);
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const ForceField F = ForceField::constant({1.0});
    const Pair p = make_pair(PairSpec{}, g, a, F);
    const SliceChoice s = select_v1_slice(p.f);
    const SliceSolution sol = reconstruct_from_slice(extract_slice(p.f, s.index), p.g, a, F);
    CHECK(relative_l2(sol.field(), p.f) <= 1e-6);
    CHECK(ode_residual(p.f, p.g, a, F).relative <= 1e-6);
  }

  TEST_CASE("random pairs solve the equation") {
    const TorusGrid g = small_grid(2, 1, 8, 32);
    const CatalogEntry e = catalog("polynomial-curve", 2, 1);
    PairSpec spec;
    spec.mode = PairSpec::Mode::random;
    spec.cutoff = 3.0;
    const Pair p = make_pair(spec, g, e.field, e.force);
    const ResidualReport r = ode_residual(p.f, p.g, e.field, e.force);
    CHECK(r.relative <= 1e-6);
    CHECK(r.lines_checked > 0);
    // A perturbed source must show up in the residual.
    SpectralKineticField g2 = p.g;
    for (auto& x : g2.data) x *= 1.01;
    CHECK(ode_residual(p.f, g2, e.field, e.force).relative > 1e-4);
  }

  TEST_CASE("velocity average of a Gaussian profile") {
    const TorusGrid g = small_grid(1, 1, 4, 128);
    SpectralKineticField f(g, FieldRole::f);
    auto eta = [](double v) { return std::exp(-(v - 0.25) * (v - 0.25) / 0.125); };
    for (int i = 0; i < g.n_v; ++i) f.at(5, i) = Complex(2.0, 1.0) * eta(g.v_node(i));
    const auto psi = bump(1.2);
    const CVec rho = velocity_average(f, psi);
    const double exact = integrate_gl(
        [&](double v) {
          const double x[1] = {v};
          return eta(v) * psi(x);
        },
        -1.2, 1.2, 400, 16);
    CHECK(std::abs(rho[5] - Complex(2.0, 1.0) * exact) <= 1e-6 * std::abs(exact));
    CHECK(std::abs(rho[0]) == 0.0);
    CHECK_THROWS_AS(velocity_average(f, bump(1.9)), SupportError);
  }

  TEST_CASE("slice solution averages agree with grid averages") {
    const TorusGrid g = small_grid(1, 1, 8, 64);
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const ForceField F = ForceField::constant({1.0});
    PairSpec spec;
    spec.mode = PairSpec::Mode::random;
    spec.cutoff = 3.0;
    const Pair p = make_pair(spec, g, a, F);
    const SliceSolution sol = reconstruct_from_slice(extract_slice(p.f, p.v1_index), p.g, a, F);
    const auto psi = bump(1.2);
    const CVec r1 = sol.velocity_average(psi);
    const CVec r2 = velocity_average(sol.field(), psi);
    double scale = 0.0;
    for (const auto& x : r1) scale = std::max(scale, std::abs(x));
    CHECK(max_abs_diff(r1, r2) <= 1e-5 * scale);
  }

  TEST_CASE("reconstruction is linear") {
    const TorusGrid g = small_grid(1, 1, 8, 32);
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const ForceField F = ForceField::constant({1.0});
    PairSpec s1, s2;
    s1.mode = s2.mode = PairSpec::Mode::random;
    s1.seed = 1;
    s2.seed = 2;
    s1.cutoff = s2.cutoff = 3.0;
    const Pair p1 = make_pair(s1, g, a, F), p2 = make_pair(s2, g, a, F);
    Slice sum = extract_slice(p1.f, p1.v1_index);
    const Slice other = extract_slice(p2.f, p2.v1_index);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += 2.0 * other.data[i];
    SpectralKineticField gs = p1.g;
    for (std::size_t i = 0; i < gs.data.size(); ++i) gs.data[i] += 2.0 * p2.g.data[i];
    const SliceSolution sol = reconstruct_from_slice(sum, gs, a, F);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < gs.data.size(); ++i) {
      const Complex expect = p1.f.data[i] + 2.0 * p2.f.data[i];
      err = std::max(err, std::abs(sol.field().data[i] - expect));
      scale = std::max(scale, std::abs(expect));
    }
    CHECK(err <= 1e-10 * scale);
  }

  TEST_CASE("reconstruction needs a nonzero force along e1") {
    const TorusGrid g = small_grid(1, 1, 4, 16);
    const VelocityField a = catalog("polynomial-curve", 1, 1).field;
    const SpectralKineticField f(g, FieldRole::f);
    CHECK_THROWS_AS(reconstruct_from_slice(extract_slice(f, 9), f, a, ForceField::constant({0.0})),
                    UnsupportedError);
  }

  TEST_CASE("binary round trip") {
    TorusGrid g = small_grid(1, 1, 4, 16);
    SpectralKineticField f(g, FieldRole::g);
    for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = Complex(std::sin(1.0 * i), 1.0 / (1.0 + i));
    std::stringstream ss;
    write_binary(f, ss);
    const SpectralKineticField r = read_binary(ss);
    CHECK(r.grid.n_v == 16);
    CHECK(r.grid.P == g.P);
    CHECK(r.role == FieldRole::g);
    CHECK(r.data == f.data);
    std::stringstream bad("XXXX");
    CHECK_THROWS_AS(read_binary(bad), Error);
  }

  TEST_CASE("lattice series tail") {
    for (int N : {1, 2, 3}) {
      const SeriesCheck a = series_check(N, 8), b = series_check(N, 16);
      CHECK(b.relative_tail < a.relative_tail);
      CHECK(b.relative_tail < 0.01);
      CHECK(a.r == doctest::Approx(N / 2.0 + 1.0));
    }
  }
}
