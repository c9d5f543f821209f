// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "avglemma/characteristics.hpp"
#include "avglemma/errors.hpp"
#include "avglemma/oscillatory.hpp"
#include "avglemma/parallel.hpp"
#include "avglemma/report.hpp"
#include "avglemma/scenario.hpp"
#include "avglemma/sobolev.hpp"
#include "avglemma/sublevel.hpp"
#include "avglemma/transport.hpp"

using namespace avglemma;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << (ok ? "" : "!") << what;
  }
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// 1. Decay of oscillatory integrals, |phi^(k)| >= 1 on [0, 1].
void decay(Outcome& o) {
  const std::vector<PhaseFunction> phases = {PhaseFunction::monomial(1), PhaseFunction::monomial(2, 0.5),
                                             PhaseFunction::monomial(3, 1.0 / 6.0)};
  const auto lambdas = geometric_grid(1.0, 1e6, 4);
  for (int k = 1; k <= 3; ++k) {
    const PhaseFunction& phi = phases[k - 1];
    require_derivative_lower_bound(phi, k, 1.0, 0.0, 1.0);
    OscillatorySpec s;
    s.phi = phi;
    const DecayReport r = decay_check(
        s, lambdas, k, [&](double l) { return corollary_bound(k, 1.0, 0.0, 1.0, l, phi); });
    const double ck = vdc_constant(k);
    o.require(r.scaled_sup <= ck, "k=" + std::to_string(k) + " sup " + num(r.scaled_sup) + " <= " + num(ck));
    // The linear phase attains its bound at the interference peaks.
    o.require(r.worst_ratio <= 1.0 + 1e-9, "ratio " + num(r.worst_ratio) + " <= 1+1e-9");
    o.require(std::abs(r.exponent - 1.0 / k) <= 0.05, "exponent " + num(r.exponent));
  }
}

// 2. Sublevel measure bound.
void measure_bounds(Outcome& o) {
  const auto eps = geometric_grid(1e-6, 1e-1, 4);
  struct Case {
    PhaseFunction phi;
    int k;
    double delta;
  };
  const std::vector<Case> cases = {{PhaseFunction::monomial(1), 1, 1.0},
                                   {PhaseFunction::monomial(2), 2, 2.0},
                                   {PhaseFunction::monomial(3), 3, 6.0}};
  for (const auto& c : cases) {
    const MeasureBoundReport r = measure_bound_check(c.phi, c.k, c.delta, -1.0, 1.0, eps);
    // k = 1 attains the bound exactly; 1e-9 absorbs root-bracketing rounding.
    o.require(r.pass && r.worst_ratio <= 1.0 + 1e-9,
              "k=" + std::to_string(c.k) + " ratio " + num(r.worst_ratio) + " <= 1+1e-9");
  }
}

// 3. Sublevel exponent fits.
void alpha(Outcome& o) {
  for (int N : {2, 3}) {
    const VelocityField a = catalog("polynomial-curve", N, 1).field;
    const AlphaFit f = fit_alpha(a, 1.0, geometric_grid(1e-6, 1e-1, 4), SphereSampler(N + 1, 4096));
    o.require(std::abs(f.alpha - 1.0 / N) <= 0.05, "curve N=" + std::to_string(N) + " alpha " + num(f.alpha));
  }
  const VelocityField id = catalog("identity", 2, 2).field;
  const AlphaFit f = fit_alpha(id, 1.0, geometric_grid(1e-4, 1e-1, 4), SphereSampler(3, 4096));
  o.require(std::abs(f.alpha - 1.0) <= 0.05, "identity alpha " + num(f.alpha));
}

// 4. Optimal derivative order.
void derivative_order(Outcome& o) {
  for (int N = 1; N <= 4; ++N) {
    const CatalogEntry e = catalog("polynomial-curve", N, 1);
    const SphereSampler s(N + 1, 4096);
    const GammaSearch g = gamma_opt(e.field, e.force, 1.0, 8, s);
    o.require(g.gamma == N + 1, "N=" + std::to_string(N) + " gamma " +
                                    (g.gamma ? std::to_string(*g.gamma) : std::string("none")));
    const GammaNDResult below = check_gammaND(e.field, e.force, N, 1.0, s);
    o.require(!below.holds && below.witness_direction.size() == static_cast<std::size_t>(N + 1),
              "gamma=N fails with witness");
  }
}

// 5. Exponent comparison.
void compare(Outcome& o) {
  o.require(compare_exponents(2, 1).verdict == "derivative-condition", "(2,1)");
  o.require(compare_exponents(2, 2).verdict == "measure-condition", "(2,2)");
  o.require(compare_exponents(3, 3).verdict == "measure-condition", "(3,3)");
}

// 6. Reconstruction from a slice.
void reconstruct(Outcome& o) {
  const CatalogEntry e = catalog("polynomial-curve", 1, 1);
  TorusGrid g;
  g.N = 1;
  g.n_x = 64;
  g.n_v = 128;
  g.P = 2.0;
  g.A = 1.5;
  const Pair p = make_pair(PairSpec{}, g, e.field, e.force);
  const SliceChoice c = select_v1_slice(p.f);
  const SliceSolution sol = reconstruct_from_slice(extract_slice(p.f, c.index), p.g, e.field, e.force);
  const double err = relative_l2(sol.field(), p.f);
  o.require(err <= 1e-6, "round trip " + num(err) + " <= 1e-6");
  const double res = ode_residual(p.f, p.g, e.field, e.force).relative;
  o.require(res <= 1e-6, "manufactured residual " + num(res) + " <= 1e-6");
  TorusGrid r = g;
  r.n_x = 32;
  r.n_v = 64;
  PairSpec spec;
  spec.mode = PairSpec::Mode::random;
  spec.cutoff = 16.0;
  const Pair q = make_pair(spec, r, e.field, e.force);
  const double rr = ode_residual(q.f, q.g, e.field, e.force).relative;
  o.require(rr <= 1e-6, "random residual " + num(rr) + " <= 1e-6");
}

// 7. Averaging gain on random pairs.
void gain(Outcome& o) {
  const CatalogEntry e = catalog("polynomial-curve", 2, 1);
  TorusGrid g;
  g.N = 2;
  g.n_x = 64;
  g.n_v = 64;
  g.P = 1.6;
  g.A = 1.2;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PairSpec spec;
    spec.mode = PairSpec::Mode::random;
    spec.seed = seed;
    spec.cutoff = 32.0;
    GainReport r;
    {
      const Pair p = make_pair(spec, g, e.field, e.force);
      r = gain_certificate(p.f, p.g, e.field, e.force, 3);
    }
    const std::string s = "seed " + std::to_string(seed);
    o.require(r.worst_ratio <= 1.0, s + " ratio " + num(r.worst_ratio) + " <= 1");
    o.require(r.rho_exponent.s_star >= 1.0 / 3.0 - 0.1, s + " s_rho " + num(r.rho_exponent.s_star));
    o.require(r.slice_exponent.s_star <= 0.1, s + " s_slice " + num(r.slice_exponent.s_star));
  }
}

// 8. Characteristics.
void characteristics(Outcome& o) {
  const VelocityField a = catalog("polynomial-curve", 1, 1).field;
  {
    const CharacteristicsMap m = characteristics_diffeo(a, ForceField::constant({0.0}), 0.0, {0.0}, {0.5}, 0.2);
    const PatchReport r = check_patch(m);
    const double err = std::abs(m.V(0.1, {0.05}, {0.6})[0] - 0.6);
    o.require(err <= 1e-10 && r.max_residual <= 1e-10, "zero force " + num(err));
  }
  {
    const CharacteristicsMap m = characteristics_diffeo(a, ForceField::constant({1.0}), 0.0, {0.0}, {0.5}, 0.2);
    const PatchReport r = check_patch(m);
    const double err = std::abs(m.V(0.1, {0.05}, {0.45})[0] - 0.55);
    o.require(err <= 1e-10 && r.max_residual <= 1e-10, "unit force " + num(err));
  }
  const ForceField pos = ForceField::smooth(
      1, [](double, std::span<const double> x, std::span<const double>) { return Vec{x[0]}; });
  {
    CharacteristicsOptions opts;
    opts.steps = 64;
    const CharacteristicsMap m = characteristics_diffeo(a, pos, 0.0, {0.0}, {0.0}, 0.3, opts);
    const double s = 0.25, w = 0.2, x = 0.1;
    const double xi = (x - w * std::sinh(s)) / std::cosh(s);
    const double err = std::abs(m.V(s, {x}, {w})[0] - (xi * std::sinh(s) + w * std::cosh(s)));
    o.require(err <= 1e-9, "hyperbolic " + num(err));
  }
  {
    CharacteristicsOptions opts;
    opts.samples = 3;
    const ConvergenceReport c = residual_convergence(a, pos, 0.0, {0.0}, {0.3}, 0.4, {4, 8, 16}, opts);
    o.require(c.order >= 3.5, "order " + num(c.order) + " >= 3.5");
  }
  {
    const ForceField focus = ForceField::smooth(
        1, [](double, std::span<const double> x, std::span<const double>) { return Vec{-100.0 * x[0]}; });
    CharacteristicsOptions opts;
    opts.min_radius = 0.3;
    bool rejected = false;
    try {
      characteristics_diffeo(a, focus, 0.0, {0.0}, {0.0}, 1.0, opts);
    } catch (const PreconditionError&) {
      rejected = true;
    }
    o.require(rejected, "focusing force rejected");
  }
}

// 9. Multiplier.
void multiplier(Outcome& o) {
  const double lim = std::abs(m0_eval(0.0) - Complex(0.0, -1.0));
  const double near = std::abs(m0_eval(1e-6) - Complex(0.0, -1.0));
  o.require(lim <= 1e-8 && near <= 1e-8, "m0 limit " + num(std::max(lim, near)));
  const MultiplierReport r = multiplier_bound_check(catalog("identity", 2, 2).field, 1.0, 2);
  double worst = 0.0, change = 0.0;
  for (const auto& row : r.rows) {
    worst = std::max(worst, row.sup_refined);
    change = std::max(change, row.relative_change);
  }
  o.require(r.finite, "sup " + num(worst) + " finite");
  o.require(r.stable, "refinement change " + num(change) + " <= 0.01");
  o.require(r.support_ok, "cutoff part vanishes");
}

// 10. Thread-count independence.
void determinism(Outcome& o) {
  const std::vector<std::pair<std::string, Json>> runs = {
      {"fit-alpha", Json::parse(R"({"field": {"N": 2}, "sweep": {"sphere_points": 1024, "eps_min": 1e-4}})")},
      {"reconstruct-test",
       Json::parse(R"({"field": {"N": 2}, "seed": 3, "grid": {"n_x": 16, "n_v": 32}, "pair": {"cutoff": 6}})")},
      {"averaging-gain",
       Json::parse(R"({"field": {"N": 1}, "seed": 2, "gamma": 2, "grid": {"n_x": 16, "n_v": 32},
                       "pair": {"cutoff": 8}, "sweep": {"sphere_points": 512}})")},
  };
  for (const auto& [cmd, cfg] : runs) {
    std::string first;
    for (int threads : {1, 2, 4}) {
      set_thread_count(threads);
      const std::string out = canonical_json(run_scenario(cmd, cfg).report);
      if (threads == 1)
        first = out;
      else
        o.require(out == first, cmd + " threads=" + std::to_string(threads) + " identical");
    }
  }
  set_thread_count(0);
  o.require(true, "3 scenarios x {1,2,4} threads");
}

}  // namespace

// Optional arguments select criteria by number; default runs all.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"oscillatory decay", decay},
      {"sublevel measure bound", measure_bounds},
      {"sublevel exponent", alpha},
      {"derivative order", derivative_order},
      {"exponent comparison", compare},
      {"slice reconstruction", reconstruct},
      {"averaging gain", gain},
      {"characteristics", characteristics},
      {"multiplier", multiplier},
      {"determinism", determinism},
  };
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion %s\n", argv[i]);
      return 2;
    }
    selected[k - 1] = true;
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && o.pass;
    std::printf("%s %2zu %s [%s] (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
