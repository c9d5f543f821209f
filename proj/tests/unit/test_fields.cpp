#include <cmath>

#include "avglemma/errors.hpp"
#include "avglemma/fields.hpp"
#include "doctest.h"

using namespace avglemma;

TEST_SUITE("fields") {
  TEST_CASE("polynomial curve derivatives") {
    const VelocityField a = catalog("polynomial-curve", 2, 1).field;
    const Vec d0 = a.derivative(0.5, 0), d1 = a.derivative(0.5, 1), d2 = a.derivative(0.5, 2);
    CHECK(d0[0] == doctest::Approx(0.5));
    CHECK(d0[1] == doctest::Approx(0.25));
    CHECK(d1[0] == doctest::Approx(1.0));
    CHECK(d1[1] == doctest::Approx(1.0));
    CHECK(d2[0] == doctest::Approx(0.0));
    CHECK(d2[1] == doctest::Approx(2.0));
    const Vec b = a.b(std::vector<double>{0.5});
    CHECK(b.size() == 3);
    CHECK(b[0] == 1.0);
  }

  TEST_CASE("transverse derivatives of v1-only fields vanish") {
    const VelocityField a = catalog("polynomial-curve", 2, 2).field;
    const std::vector<double> v{0.3, 0.7};
    const std::vector<int> beta{0, 1};
    const Vec d = a.derivative(v, beta);
    CHECK(d[0] == 0.0);
    CHECK(d[1] == 0.0);
  }

  TEST_CASE("finite-difference derivatives match sin") {
    const VelocityField a = VelocityField::from_function(
        1, 1, [](std::span<const double> v) { return Vec{std::sin(v[0])}; }, "sin", 4);
    const double v = 0.3;
    CHECK(a.derivative(v, 1)[0] == doctest::Approx(std::cos(v)).epsilon(1e-7));
    CHECK(a.derivative(v, 2)[0] == doctest::Approx(-std::sin(v)).epsilon(1e-5));
    CHECK(a.derivative(v, 3)[0] == doctest::Approx(-std::cos(v)).epsilon(1e-3));
    CHECK_THROWS_AS(a.derivative(v, 5), CapabilityError);
  }

  TEST_CASE("phase functions") {
    const PhaseFunction p = PhaseFunction::polynomial({1.0, -2.0, 3.0});
    CHECK(p(2.0) == doctest::Approx(9.0));
    CHECK(p.derivative(2.0, 1) == doctest::Approx(10.0));
    CHECK(p.derivative(2.0, 2) == doctest::Approx(6.0));
    CHECK(p.derivative(2.0, 3) == 0.0);
    const PhaseFunction m = PhaseFunction::monomial(3, 2.0);
    CHECK(m.derivative(0.5, 1) == doctest::Approx(1.5));
    const PhaseFunction f = PhaseFunction::from_function([](double u) { return std::exp(u); });
    CHECK(f.derivative(0.2, 2) == doctest::Approx(std::exp(0.2)).epsilon(1e-5));
  }

  TEST_CASE("directions must be unit vectors") {
    CHECK_THROWS_AS(Direction({1.0, 1.0}), PreconditionError);
    CHECK_NOTHROW(Direction({0.6, 0.8}));
    const Direction d = Direction::normalized({3.0, 4.0});
    CHECK(d[0] == doctest::Approx(0.6));
  }

  TEST_CASE("directional derivatives along a constant force") {
    // a = (v, v^2), F = 2: D b = (0, 2, 4v), D^2 b = (0, 0, 8).
    const VelocityField a = catalog("polynomial-curve", 2, 1).field;
    const ForceField F = ForceField::constant({2.0});
    const std::vector<double> v{0.5};
    const Vec d1 = directional_derivative(a, F, v, 1);
    const Vec d2 = directional_derivative(a, F, v, 2);
    CHECK(d1[0] == 0.0);
    CHECK(d1[1] == doctest::Approx(2.0));
    CHECK(d1[2] == doctest::Approx(2.0));
    CHECK(d2[2] == doctest::Approx(8.0));
    // identity in R^2 with F = (1, 2): D b = (0, 1, 2), D^2 b = 0.
    const VelocityField id = catalog("identity", 2, 2).field;
    const ForceField G = ForceField::constant({1.0, 2.0});
    const std::vector<double> w{0.1, -0.4};
    const Vec e1 = directional_derivative(id, G, w, 1);
    CHECK(e1[1] == doctest::Approx(1.0));
    CHECK(e1[2] == doctest::Approx(2.0));
    const Vec e2 = directional_derivative(id, G, w, 2);
    CHECK(std::abs(e2[1]) + std::abs(e2[2]) == 0.0);
  }

  TEST_CASE("make_phase follows b . sigma") {
    const VelocityField a = catalog("circle", 2, 1).field;
    const Direction d = Direction::normalized({0.2, 0.5, -0.3});
    const PhaseFunction p = make_phase(a, d);
    const double v = 0.7;
    const double expect = (0.2 + 0.5 * std::cos(v) - 0.3 * std::sin(v)) / std::sqrt(0.38);
    CHECK(p(v) == doctest::Approx(expect));
    const double dexpect = (-0.5 * std::sin(v) - 0.3 * std::cos(v)) / std::sqrt(0.38);
    CHECK(p.derivative(v, 1) == doctest::Approx(dexpect));
  }

  TEST_CASE("multi-indices and catalog errors") {
    CHECK(multi_indices(2, 2).size() == 3);
    CHECK(multi_indices(3, 2).size() == 6);
    CHECK_THROWS_AS(catalog("spiral", 2, 1), PreconditionError);
    CHECK_THROWS_AS(catalog("identity", 2, 1), PreconditionError);
    CHECK_THROWS_AS(catalog("custom-polynomial", 2, 1, {{1.0}}), PreconditionError);
    const VelocityField c = catalog("custom-polynomial", 1, 1, {{0.0, 1.0, 1.0}}).field;
    CHECK(c(2.0)[0] == doctest::Approx(6.0));
  }
}
