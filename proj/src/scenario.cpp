#include "avglemma/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "avglemma/characteristics.hpp"
#include "avglemma/errors.hpp"
#include "avglemma/fields.hpp"
#include "avglemma/oscillatory.hpp"
#include "avglemma/sobolev.hpp"
#include "avglemma/sphere.hpp"
#include "avglemma/sublevel.hpp"
#include "avglemma/transport.hpp"

namespace avglemma {
namespace {

// ---------------------------------------------------------------- config access

std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }

const Json* find(const Json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const Json& require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
  return j;
}

const Json& section(const Json& cfg, const char* key, const Json& fallback) {
  const Json* j = find(cfg, key);
  if (!j) return fallback;
  return require_object(*j, "/" + std::string(key));
}

double num(const Json& obj, const std::string& path, const char* key, std::optional<double> def,
           double lo = -HUGE_VAL, double hi = HUGE_VAL, bool open_lo = false) {
  const Json* j = find(obj, key);
  const std::string p = child(path, key);
  if (!j) {
    if (!def) throw ConfigError(p, "required field is missing");
    return *def;
  }
  if (!j->is_number()) throw ConfigError(p, "expected a number");
  const double x = j->get<double>();
  if (!std::isfinite(x) || x < lo || x > hi || (open_lo && x == lo))
    throw ConfigError(p, "value out of range");
  return x;
}

int integer(const Json& obj, const std::string& path, const char* key, std::optional<int> def,
            int lo = std::numeric_limits<int>::min(), int hi = std::numeric_limits<int>::max()) {
  const Json* j = find(obj, key);
  const std::string p = child(path, key);
  if (!j) {
    if (!def) throw ConfigError(p, "required field is missing");
    return *def;
  }
  if (!j->is_number_integer()) throw ConfigError(p, "expected an integer");
  const auto x = j->get<long long>();
  if (x < lo || x > hi) throw ConfigError(p, "value out of range");
  return static_cast<int>(x);
}

bool boolean(const Json& obj, const std::string& path, const char* key, bool def) {
  const Json* j = find(obj, key);
  if (!j) return def;
  if (!j->is_boolean()) throw ConfigError(child(path, key), "expected a boolean");
  return j->get<bool>();
}

std::string text(const Json& obj, const std::string& path, const char* key,
                 std::optional<std::string> def, const std::vector<std::string>& allowed = {}) {
  const Json* j = find(obj, key);
  const std::string p = child(path, key);
  if (!j) {
    if (!def) throw ConfigError(p, "required field is missing");
    return *def;
  }
  if (!j->is_string()) throw ConfigError(p, "expected a string");
  const std::string s = j->get<std::string>();
  if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ConfigError(p, "expected one of " + list);
  }
  return s;
}

Vec numbers(const Json& obj, const std::string& path, const char* key, std::optional<Vec> def,
            std::optional<std::size_t> size = std::nullopt) {
  const Json* j = find(obj, key);
  const std::string p = child(path, key);
  if (!j) {
    if (!def) throw ConfigError(p, "required field is missing");
    return *def;
  }
  if (!j->is_array()) throw ConfigError(p, "expected an array of numbers");
  Vec out;
  for (std::size_t i = 0; i < j->size(); ++i) {
    if (!(*j)[i].is_number()) throw ConfigError(p + "/" + std::to_string(i), "expected a number");
    out.push_back((*j)[i].get<double>());
    if (!std::isfinite(out.back())) throw ConfigError(p + "/" + std::to_string(i), "not finite");
  }
  if (size && out.size() != *size)
    throw ConfigError(p, "expected " + std::to_string(*size) + " entries");
  return out;
}

const Json kEmpty = Json::object();

// ---------------------------------------------------------------- typed pieces

struct FieldSpec {
  VelocityField field;
  ForceField force;
  int N, M;
  Json echo;
};

FieldSpec parse_field(const Json& cfg) {
  const Json* fj = find(cfg, "field");
  if (!fj) throw ConfigError("/field", "required field is missing");
  const Json& f = require_object(*fj, "/field");
  const int N = integer(f, "/field", "N", std::nullopt, 1, 8);
  const int M = integer(f, "/field", "M", 1, 1, 8);
  const std::string name =
      text(f, "/field", "catalog", "polynomial-curve",
           {"polynomial-curve", "circle", "constant", "custom-polynomial", "identity"});
  std::vector<Vec> coeffs;
  if (name == "custom-polynomial") {
    const Json* c = find(f, "coefficients");
    if (!c) throw ConfigError("/field/coefficients", "required field is missing");
    if (!c->is_array() || static_cast<int>(c->size()) != N)
      throw ConfigError("/field/coefficients", "expected N coefficient lists");
    for (std::size_t i = 0; i < c->size(); ++i) {
      const std::string p = "/field/coefficients/" + std::to_string(i);
      if (!(*c)[i].is_array()) throw ConfigError(p, "expected an array of numbers");
      Vec row;
      for (std::size_t k = 0; k < (*c)[i].size(); ++k) {
        if (!(*c)[i][k].is_number()) throw ConfigError(p + "/" + std::to_string(k), "expected a number");
        row.push_back((*c)[i][k].get<double>());
      }
      coeffs.push_back(row);
    }
  }
  if (name == "circle" && N != 2) throw ConfigError("/field/N", "circle requires N = 2");
  if (name == "identity" && N != M) throw ConfigError("/field/M", "identity requires N = M");
  CatalogEntry entry = catalog(name, N, M, coeffs);

  ForceField force = entry.force;
  Json force_echo = {{"type", "constant"}};
  if (const Json* fo = find(cfg, "force")) {
    const Json& o = require_object(*fo, "/force");
    const std::string type = text(o, "/force", "type", "constant", {"constant", "zero", "position"});
    force_echo["type"] = type;
    if (type == "constant") {
      Vec e1(M, 0.0);
      e1[0] = 1.0;
      const Vec v = numbers(o, "/force", "vector", e1, static_cast<std::size_t>(M));
      force = ForceField::constant(v);
    } else if (type == "zero") {
      force = ForceField::constant(Vec(M, 0.0));
    } else {
      if (N != M) throw ConfigError("/force/type", "a position force needs N = M");
      const double s = num(o, "/force", "scale", 1.0);
      force = ForceField::smooth(M, [s](double, std::span<const double> x, std::span<const double>) {
        Vec out(x.begin(), x.end());
        for (auto& c : out) c *= s;
        return out;
      });
    }
  }
  return {entry.field, force, N, M, {{"catalog", name}, {"N", N}, {"M", M}, {"force", force_echo}}};
}

TorusGrid parse_grid(const Json& cfg, int N, int M) {
  const Json& g = section(cfg, "grid", kEmpty);
  TorusGrid grid;
  grid.N = N;
  grid.M = M;
  auto pow2 = [&](const char* key, int def, int lo) {
    const int v = integer(g, "/grid", key, def, lo, 1 << 16);
    if ((v & (v - 1)) != 0) throw ConfigError(child("/grid", key), "must be a power of two");
    return v;
  };
  grid.n_x = pow2("n_x", grid.n_x, 2);
  grid.n_v = pow2("n_v", grid.n_v, 4);
  grid.L = num(g, "/grid", "L", grid.L, 0.0, HUGE_VAL, true);
  grid.P = num(g, "/grid", "P", grid.P, 0.0, HUGE_VAL, true);
  grid.A = num(g, "/grid", "A", grid.A, 0.0, HUGE_VAL, true);
  if (!(grid.A < grid.P - grid.dv())) throw ConfigError("/grid/A", "need A < P - 2P/n_v");
  return grid;
}

PhaseFunction parse_phase(const Json& cfg) {
  const Json* pj = find(cfg, "phase");
  if (!pj) throw ConfigError("/phase", "required field is missing");
  const Json& p = require_object(*pj, "/phase");
  if (find(p, "monomial")) {
    const int k = integer(p, "/phase", "monomial", std::nullopt, 0, 32);
    return PhaseFunction::monomial(k, num(p, "/phase", "scale", 1.0));
  }
  if (find(p, "coefficients")) return PhaseFunction::polynomial(numbers(p, "/phase", "coefficients", std::nullopt));
  throw ConfigError("/phase", "expected 'monomial' or 'coefficients'");
}

std::pair<double, double> interval(const Json& cfg, std::pair<double, double> def) {
  const Vec v = numbers(cfg, "", "interval", Vec{def.first, def.second}, 2);
  if (!(v[0] < v[1])) throw ConfigError("/interval", "expected lo < hi");
  return {v[0], v[1]};
}

std::vector<double> eps_grid(const Json& sweep) {
  const double lo = num(sweep, "/sweep", "eps_min", 1e-6, 0.0, HUGE_VAL, true);
  const double hi = num(sweep, "/sweep", "eps_max", 1e-1, 0.0, HUGE_VAL, true);
  if (!(lo < hi)) throw ConfigError("/sweep/eps_max", "range is empty");
  return geometric_grid(lo, hi, integer(sweep, "/sweep", "eps_per_decade", 4, 1, 100));
}

std::vector<double> lambda_grid(const Json& sweep) {
  const double lo = num(sweep, "/sweep", "lambda_min", 1.0, 0.0, HUGE_VAL, true);
  const double hi = num(sweep, "/sweep", "lambda_max", 1e6, 0.0, HUGE_VAL, true);
  if (!(lo < hi)) throw ConfigError("/sweep/lambda_max", "range is empty");
  return geometric_grid(lo, hi, integer(sweep, "/sweep", "lambda_per_decade", 4, 1, 100));
}

// ---------------------------------------------------------------- report helpers

struct Builder {
  RunResult out;
  Json checks = Json::array();

  void check(const std::string& name, bool pass, double value, double tolerance,
             const std::string& relation) {
    checks.push_back({{"name", name}, {"pass", pass}, {"value", value}, {"tolerance", tolerance},
                      {"relation", relation}});
  }
  void table(const std::string& file, const std::vector<std::string>& header,
             const std::vector<std::vector<std::string>>& rows) {
    out.tables[file] = to_csv(header, rows);
  }
  RunResult finish(const std::string& command, const Json& config, Json results) {
    bool pass = !checks.empty();
    for (const auto& c : checks) pass = pass && c["pass"].get<bool>();
    Json artifacts = Json::array();
    for (const auto& [k, v] : out.tables) artifacts.push_back(k);
    for (const auto& [k, v] : out.plots) artifacts.push_back(k);
    out.report = {{"command", command},      {"config_hash", config_hash(config)},
                  {"checks", checks},        {"results", std::move(results)},
                  {"artifacts", artifacts},  {"pass", pass}};
    out.pass = pass;
    return out;
  }
};

std::string fd(double x) { return format_double(x); }

// ---------------------------------------------------------------- commands

RunResult run_fit_alpha(const Json& cfg) {
  const FieldSpec fs = parse_field(cfg);
  const Json& sweep = section(cfg, "sweep", kEmpty);
  const Json& expect = section(cfg, "expect", kEmpty);
  const double A = num(cfg, "", "A", 1.0, 0.0, HUGE_VAL, true);
  const auto eps = eps_grid(sweep);
  const SphereSampler sampler(fs.N + 1, integer(sweep, "/sweep", "sphere_points", 4096, 8, 1 << 22));
  const AlphaFit fit = fit_alpha(fs.field, A, eps, sampler);
  Builder b;
  b.check("fit not degenerate", !fit.degenerate, fit.r2, 0.9, "r2 >= tolerance");
  if (find(expect, "alpha")) {
    const double target = num(expect, "/expect", "alpha", std::nullopt);
    const double tol = num(expect, "/expect", "alpha_tol", 0.05, 0.0);
    b.check("alpha matches expectation", std::abs(fit.alpha - target) <= tol,
            std::abs(fit.alpha - target), tol, "|alpha - expected| <= tolerance");
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < eps.size(); ++i) rows.push_back({fd(eps[i]), fd(fit.sup_measures[i])});
  b.table("alpha_fit.csv", {"eps", "sup_measure"}, rows);
  Vec lx, ly;
  for (std::size_t i = 0; i < eps.size(); ++i)
    if (fit.sup_measures[i] > 0.0) {
      lx.push_back(std::log10(eps[i]));
      ly.push_back(std::log10(fit.sup_measures[i]));
    }
  b.out.plots["alpha_fit.dat"] = to_plot(lx, ly);
  Json maxim = Json::array();
  for (const auto& m : fit.maximizers) maxim.push_back(m);
  return b.finish("fit-alpha", cfg,
                  {{"field", fs.echo}, {"A", A}, {"alpha", fit.alpha}, {"raw_slope", fit.raw_slope},
                   {"C", fit.C}, {"r2", fit.r2}, {"degenerate", fit.degenerate},
                   {"eps", eps}, {"sup_measures", fit.sup_measures}, {"maximizers", maxim}});
}

RunResult run_gamma_opt(const Json& cfg) {
  const FieldSpec fs = parse_field(cfg);
  const Json& sweep = section(cfg, "sweep", kEmpty);
  const Json& expect = section(cfg, "expect", kEmpty);
  const double A = num(cfg, "", "A", 1.0, 0.0, HUGE_VAL, true);
  const int gmax = integer(sweep, "/sweep", "gamma_max", 8, 1, 32);
  const SphereSampler sampler(fs.N + 1, integer(sweep, "/sweep", "sphere_points", 4096, 8, 1 << 22));
  if (!fs.force.is_constant()) throw ConfigError("/force/type", "gamma-opt needs a constant force");
  const GammaSearch gs = gamma_opt(fs.field, fs.force, A, gmax, sampler);
  Builder b;
  b.check("gamma found", gs.gamma.has_value(), gs.gamma.value_or(0), gmax, "gamma <= tolerance");
  if (find(expect, "gamma")) {
    const int target = integer(expect, "/expect", "gamma", std::nullopt);
    b.check("gamma matches expectation", gs.gamma == target, gs.gamma.value_or(0), target,
            "gamma == tolerance");
  }
  Json attempts = Json::array();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < gs.attempts.size(); ++i) {
    const auto& a = gs.attempts[i];
    attempts.push_back({{"gamma", i + 1}, {"holds", a.holds}, {"min_value", a.min_value},
                        {"witness_v", a.witness_v}, {"witness_direction", a.witness_direction}});
    rows.push_back({std::to_string(i + 1), a.holds ? "true" : "false", fd(a.min_value)});
  }
  b.table("gamma_attempts.csv", {"gamma", "holds", "min_value"}, rows);
  Json res = {{"field", fs.echo}, {"A", A}, {"attempts", attempts}};
  res["gamma"] = gs.gamma ? Json(*gs.gamma) : Json(nullptr);
  return b.finish("gamma-opt", cfg, res);
}

RunResult run_decay(const Json& cfg) {
  const PhaseFunction phi = parse_phase(cfg);
  const Json& sweep = section(cfg, "sweep", kEmpty);
  const int k = integer(cfg, "", "order", std::nullopt, 1, 16);
  const double delta = num(cfg, "", "delta", 1.0, 0.0, HUGE_VAL, true);
  const auto [lo, hi] = interval(cfg, {0.0, 1.0});
  const bool check_exponent = boolean(cfg, "", "check_exponent", true);
  const double exp_tol = num(cfg, "", "exponent_tol", 0.05, 0.0);
  const auto lambdas = lambda_grid(sweep);
  DecayOptions dopts;
  dopts.subsamples = integer(sweep, "/sweep", "subsamples", 8, 1, 1024);
  dopts.fit_min = num(sweep, "/sweep", "fit_min", 100.0, 0.0);
  require_derivative_lower_bound(phi, k, delta, lo, hi);
  OscillatorySpec spec;
  spec.phi = phi;
  spec.alpha = lo;
  spec.beta = hi;
  const DecayReport rep = decay_check(
      spec, lambdas, k, [&](double l) { return corollary_bound(k, delta, lo, hi, l, phi); }, dopts);
  Builder b;
  b.check("corollary bound", rep.worst_ratio <= 1.0, rep.worst_ratio, 1.0, "ratio <= tolerance");
  const double ck = vdc_constant(k) * std::max(1.0, std::pow(delta, -1.0 / k));
  b.check("scaled sup below c_k", rep.scaled_sup <= ck, rep.scaled_sup, ck, "value <= tolerance");
  if (check_exponent)
    b.check("decay exponent", std::abs(rep.exponent - 1.0 / k) <= exp_tol,
            std::abs(rep.exponent - 1.0 / k), exp_tol, "|exponent - 1/k| <= tolerance");
  std::vector<std::vector<std::string>> rows;
  Vec lx, ly;
  for (const auto& r : rep.rows) {
    rows.push_back({fd(r.lambda), fd(r.magnitude), fd(r.bound), fd(r.ratio)});
    lx.push_back(r.lambda);
    ly.push_back(r.magnitude);
  }
  b.table("decay.csv", {"lambda", "magnitude", "bound", "ratio"}, rows);
  b.out.plots["decay.dat"] = to_plot(lx, ly);
  return b.finish("decay", cfg,
                  {{"order", k}, {"delta", delta}, {"interval", {lo, hi}}, {"c_k", vdc_constant(k)},
                   {"worst_ratio", rep.worst_ratio}, {"scaled_sup", rep.scaled_sup},
                   {"exponent", rep.exponent}, {"rows", rep.rows.size()}});
}

RunResult run_measure_bounds(const Json& cfg) {
  const PhaseFunction phi = parse_phase(cfg);
  const Json& sweep = section(cfg, "sweep", kEmpty);
  const int k = integer(cfg, "", "order", std::nullopt, 1, 16);
  const double delta = num(cfg, "", "delta", 1.0, 0.0, HUGE_VAL, true);
  const auto [lo, hi] = interval(cfg, {-1.0, 1.0});
  const auto eps = eps_grid(sweep);
  const MeasureBoundReport rep = measure_bound_check(phi, k, delta, lo, hi, eps);
  Builder b;
  b.check("sublevel measure bound", rep.pass, rep.worst_ratio, 1.0, "ratio <= tolerance");
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.rows) rows.push_back({fd(r.eps), fd(r.measure), fd(r.bound), fd(r.ratio)});
  b.table("measure_bounds.csv", {"eps", "measure", "bound", "ratio"}, rows);
  return b.finish("measure-bounds", cfg,
                  {{"order", k}, {"delta", delta}, {"interval", {lo, hi}}, {"cbar", rep.cbar},
                   {"worst_ratio", rep.worst_ratio}});
}

PairSpec parse_pair(const Json& cfg) {
  const Json& p = section(cfg, "pair", kEmpty);
  PairSpec spec;
  const std::string mode = text(p, "/pair", "mode", "random", {"random", "manufactured"});
  spec.mode = mode == "random" ? PairSpec::Mode::random : PairSpec::Mode::manufactured;
  if (spec.mode == PairSpec::Mode::random) {
    spec.seed = static_cast<std::uint64_t>(integer(cfg, "", "seed", std::nullopt, 0));
    spec.cutoff = num(p, "/pair", "cutoff", 32.0, 0.0, HUGE_VAL, true);
  } else {
    spec.seed = static_cast<std::uint64_t>(integer(cfg, "", "seed", 7, 0));
    spec.width = num(p, "/pair", "width", 0.0, 0.0);
    spec.y_radius = num(p, "/pair", "y_radius", 0.0, 0.0);
    spec.zero = boolean(p, "/pair", "zero", false);
  }
  return spec;
}

Json shells_json(const TorusGrid& grid, const CVec& rho, std::vector<std::vector<std::string>>* rows,
                 Vec* px, Vec* py) {
  const ShellSpectrum s = shell_spectrum(grid, rho);
  for (std::size_t j = 0; j < s.energies.size(); ++j) {
    rows->push_back({std::to_string(j), fd(s.edges[j]), fd(s.energies[j]), std::to_string(s.counts[j])});
    if (s.energies[j] > 0.0 && s.counts[j] > 0) {
      px->push_back(std::log2(s.edges[j]));
      py->push_back(std::log2(s.energies[j] / s.counts[j]));
    }
  }
  return {{"edges", s.edges}, {"energies", s.energies}, {"counts", s.counts}, {"core", s.core},
          {"total", s.total}};
}

Json estimate_json(const SobolevEstimate& e) {
  return {{"s_star", e.s_star}, {"fit_lo", e.fit_lo}, {"fit_hi", e.fit_hi},
          {"populated", e.populated}, {"saturated", e.saturated}};
}

RunResult run_averaging_gain(const Json& cfg) {
  const FieldSpec fs = parse_field(cfg);
  const TorusGrid grid = parse_grid(cfg, fs.N, fs.M);
  const PairSpec ps = parse_pair(cfg);
  const int gamma = integer(cfg, "", "gamma", std::nullopt, 1, 32);
  const Json& expect = section(cfg, "expect", kEmpty);
  GainOptions go;
  go.psi_radius = num(cfg, "", "psi_radius", 0.0, 0.0);
  go.sphere_points = integer(section(cfg, "sweep", kEmpty), "/sweep", "sphere_points", 4096, 8, 1 << 22);
  if (!fs.force.is_constant()) throw ConfigError("/force/type", "averaging-gain needs a constant force");
  Builder b;
  const Pair pair = make_pair(ps, grid, fs.field, fs.force);
  const GainReport rep = gain_certificate(pair.f, pair.g, fs.field, fs.force, gamma, go);
  b.check("weighted pointwise inequality", rep.pass, rep.worst_ratio, 1.0, "ratio <= tolerance");
  if (find(expect, "rho_exponent_min")) {
    const double m = num(expect, "/expect", "rho_exponent_min", std::nullopt);
    b.check("average regularity", rep.rho_exponent.s_star >= m, rep.rho_exponent.s_star, m,
            "value >= tolerance");
  }
  if (find(expect, "slice_exponent_max")) {
    const double m = num(expect, "/expect", "slice_exponent_max", std::nullopt);
    b.check("slice roughness", rep.slice_exponent.s_star <= m, rep.slice_exponent.s_star, m,
            "value <= tolerance");
  }
  std::vector<std::vector<std::string>> rows;
  Vec px, py;
  const Json shells = shells_json(grid, rep.rho, &rows, &px, &py);
  b.table("rho_shells.csv", {"shell", "radius", "energy", "count"}, rows);
  b.out.plots["rho_shells.dat"] = to_plot(px, py);
  return b.finish("averaging-gain", cfg,
                  {{"field", fs.echo}, {"gamma", gamma}, {"seed", ps.seed},
                   {"residual", rep.residual}, {"L", rep.L}, {"delta", rep.delta},
                   {"v1_index", rep.v1_index}, {"worst_ratio", rep.worst_ratio},
                   {"worst_y", rep.worst_y}, {"rho_exponent", estimate_json(rep.rho_exponent)},
                   {"slice_exponent", estimate_json(rep.slice_exponent)}, {"f_norm", rep.f_norm},
                   {"g_norm", rep.g_norm}, {"rho_shells", shells}});
}

RunResult run_reconstruct(const Json& cfg) {
  const FieldSpec fs = parse_field(cfg);
  const TorusGrid grid = parse_grid(cfg, fs.N, fs.M);
  const PairSpec ps = parse_pair(cfg);
  const double tol = num(cfg, "", "tolerance", 1e-6, 0.0);
  if (!fs.force.is_constant()) throw ConfigError("/force/type", "reconstruct-test needs a constant force");
  const Pair pair = make_pair(ps, grid, fs.field, fs.force);
  const ResidualReport res = ode_residual(pair.f, pair.g, fs.field, fs.force);
  Builder b;
  b.check("spectral ODE residual", res.relative <= tol, res.relative, tol, "value <= tolerance");
  Json results = {{"field", fs.echo}, {"seed", ps.seed}, {"residual", res.relative},
                  {"lines_checked", res.lines_checked}, {"f_norm", pair.f.l2_norm()},
                  {"g_norm", pair.g.l2_norm()}};
  if (ps.mode == PairSpec::Mode::manufactured) {
    const SliceChoice choice = select_v1_slice(pair.f);
    const SliceSolution sol =
        reconstruct_from_slice(extract_slice(pair.f, choice.index), pair.g, fs.field, fs.force);
    const double err = relative_l2(sol.field(), pair.f);
    b.check("round trip", err <= tol, err, tol, "value <= tolerance");
    results["round_trip_error"] = err;
    results["v1_index"] = choice.index;
    results["subpanels"] = sol.subpanels();
  }
  return b.finish("reconstruct-test", cfg, results);
}

RunResult run_characteristics(const Json& cfg) {
  const FieldSpec fs = parse_field(cfg);
  const double t0 = num(cfg, "", "t0", 0.0);
  const Vec x0 = numbers(cfg, "", "x0", Vec(fs.N, 0.0), static_cast<std::size_t>(fs.N));
  const Vec v0 = numbers(cfg, "", "v0", Vec(fs.M, 0.0), static_cast<std::size_t>(fs.M));
  const double radius = num(cfg, "", "radius", 0.5, 0.0, HUGE_VAL, true);
  const double tol = num(cfg, "", "residual_tol", 1e-5, 0.0);
  const std::string closed = text(cfg, "", "closed_form", "none", {"none", "zero-force", "unit-force"});
  const bool check_order = boolean(cfg, "", "check_order", closed == "none");
  const double min_order = num(cfg, "", "min_order", 3.5);
  std::vector<int> steps;
  for (double s : numbers(cfg, "", "steps", Vec{4, 8, 16})) {
    if (s < 1 || s != std::floor(s)) throw ConfigError("/steps", "expected positive integers");
    steps.push_back(static_cast<int>(s));
  }
  if (steps.empty()) throw ConfigError("/steps", "range is empty");
  CharacteristicsOptions opts;
  opts.steps = steps.back();
  PatchReport patch;
  const CharacteristicsMap map =
      characteristics_diffeo(fs.field, fs.force, t0, x0, v0, radius, opts, &patch);
  Builder b;
  b.check("residual on patch", patch.max_residual <= tol, patch.max_residual, tol, "value <= tolerance");
  b.check("jacobian positive", patch.min_jacobian > 0.0, patch.min_jacobian, 0.0, "value > tolerance");
  // Initial data V(t0, x; w) = w.
  double init = 0.0;
  for (int s = -1; s <= 1; ++s) {
    Vec x = x0, w = v0;
    for (auto& c : x) c += 0.5 * s * map.radius();
    for (auto& c : w) c -= 0.5 * s * map.radius();
    const Vec V = map.V(t0, x, w);
    for (std::size_t i = 0; i < V.size(); ++i) init = std::max(init, std::abs(V[i] - w[i]));
  }
  b.check("initial data", init == 0.0, init, 0.0, "value == tolerance");
  Json results = {{"field", fs.echo}, {"t0", t0}, {"x0", x0}, {"v0", v0},
                  {"radius", map.radius()}, {"shrinks", patch.shrinks},
                  {"max_residual", patch.max_residual}, {"min_jacobian", patch.min_jacobian},
                  {"points", patch.points}, {"steps", opts.steps}};
  if (closed != "none") {
    double err = 0.0;
    const int n = opts.samples;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double t = t0 - map.radius() + 2.0 * map.radius() * i / (n - 1);
        Vec x = x0, w = v0;
        for (auto& c : x) c += -map.radius() + 2.0 * map.radius() * j / (n - 1);
        for (auto& c : w) c += map.radius() * (2.0 * j / (n - 1) - 1.0) * 0.5;
        const Vec V = map.V(t, x, w);
        for (std::size_t c = 0; c < V.size(); ++c) {
          const double expected = closed == "zero-force" ? w[c] : w[c] + (t - t0);
          err = std::max(err, std::abs(V[c] - expected));
        }
      }
    const double etol = num(cfg, "", "closed_form_tol", 1e-10, 0.0);
    b.check("closed form", err <= etol, err, etol, "value <= tolerance");
    results["closed_form_error"] = err;
  }
  if (check_order && steps.size() >= 2) {
    const ConvergenceReport conv = residual_convergence(fs.field, fs.force, t0, x0, v0, radius, steps);
    b.check("integrator order", conv.order >= min_order, conv.order, min_order, "value >= tolerance");
    std::vector<std::vector<std::string>> rows;
    Vec px, py;
    for (std::size_t i = 0; i < conv.steps.size(); ++i) {
      rows.push_back({std::to_string(conv.steps[i]), fd(conv.max_residual[i])});
      px.push_back(std::log10(static_cast<double>(conv.steps[i])));
      py.push_back(std::log10(std::max(conv.max_residual[i], 1e-300)));
    }
    b.table("convergence.csv", {"steps", "max_residual"}, rows);
    b.out.plots["convergence.dat"] = to_plot(px, py);
    results["order"] = conv.order;
    results["convergence"] = {{"steps", conv.steps}, {"max_residual", conv.max_residual}};
  }
  return b.finish("characteristics-test", cfg, results);
}

RunResult run_multiplier(const Json& cfg) {
  const FieldSpec fs = parse_field(cfg);
  const double A = num(cfg, "", "A", 1.0, 0.0, HUGE_VAL, true);
  const int kmax = integer(cfg, "", "k_max", 2, 0, 8);
  const Json& o = section(cfg, "sweep", kEmpty);
  MultiplierOptions mo;
  mo.t_points = integer(o, "/sweep", "t_points", mo.t_points, 8, 100000);
  mo.v_points = integer(o, "/sweep", "v_points", mo.v_points, 1, 1025);
  const MultiplierReport rep = multiplier_bound_check(fs.field, A, kmax, mo);
  Builder b;
  const double lim = std::abs(m0_eval(0.0) - std::complex<double>(0.0, -1.0));
  b.check("m0 limit at 0", lim <= 1e-8, lim, 1e-8, "value <= tolerance");
  double worst = 0.0, change = 0.0, chi_part = 0.0;
  for (const auto& r : rep.rows) {
    worst = std::max(worst, r.sup_refined);
    change = std::max(change, r.relative_change);
    chi_part = std::max(chi_part, r.chi_part_beyond);
  }
  b.check("suprema finite", rep.finite, worst, mo.finite_bound, "value < tolerance");
  b.check("grid stable", rep.stable, change, mo.stability_tol, "value <= tolerance");
  b.check("cutoff part vanishes beyond the threshold", rep.support_ok, chi_part, 0.0,
          "value == tolerance");
  std::vector<std::vector<std::string>> rows;
  Json jr = Json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({std::to_string(r.k), std::to_string(r.j), fd(r.sup), fd(r.sup_refined),
                    fd(r.relative_change), fd(r.tail), fd(r.chi_part_beyond)});
    jr.push_back({{"k", r.k}, {"j", r.j}, {"sup", r.sup}, {"sup_refined", r.sup_refined},
                  {"relative_change", r.relative_change}, {"tail", r.tail},
                  {"chi_part_beyond", r.chi_part_beyond}});
  }
  b.table("multiplier.csv",
          {"k", "j", "sup", "sup_refined", "relative_change", "tail", "chi_part_beyond"}, rows);
  return b.finish("multiplier-check", cfg,
                  {{"field", fs.echo}, {"A", A}, {"k_max", kmax}, {"min_b", rep.min_b}, {"rows", jr}});
}

RunResult run_compare(const Json& cfg) {
  const Json* fj = find(cfg, "field");
  if (!fj) throw ConfigError("/field", "required field is missing");
  const Json& f = require_object(*fj, "/field");
  const int N = integer(f, "/field", "N", std::nullopt, 1, 64);
  const int M = integer(f, "/field", "M", 1, 1, 64);
  const ExponentComparison c = compare_exponents(N, M);
  Builder b;
  b.check("exponents known", c.verdict != "unknown", c.inv_gamma_opt - c.half_alpha_opt, 0.0,
          "verdict known");
  b.table("compare_exponents.csv", {"N", "M", "half_alpha_opt", "inv_gamma_opt", "verdict"},
          {{std::to_string(N), std::to_string(M), fd(c.half_alpha_opt), fd(c.inv_gamma_opt), c.verdict}});
  return b.finish("compare-exponents", cfg,
                  {{"N", N}, {"M", M}, {"half_alpha_opt", c.half_alpha_opt},
                   {"inv_gamma_opt", c.inv_gamma_opt}, {"verdict", c.verdict}});
}

using Runner = RunResult (*)(const Json&);

const std::vector<std::pair<std::string, Runner>>& runners() {
  static const std::vector<std::pair<std::string, Runner>> r = {
      {"fit-alpha", run_fit_alpha},
      {"gamma-opt", run_gamma_opt},
      {"decay", run_decay},
      {"measure-bounds", run_measure_bounds},
      {"averaging-gain", run_averaging_gain},
      {"reconstruct-test", run_reconstruct},
      {"characteristics-test", run_characteristics},
      {"multiplier-check", run_multiplier},
      {"compare-exponents", run_compare},
  };
  return r;
}

Runner runner_for(const std::string& command) {
  for (const auto& [name, fn] : runners())
    if (name == command) return fn;
  throw ConfigError("/command", "unknown subcommand '" + command + "'");
}

const std::vector<std::string>& known_keys(const std::string&) {
  static const std::vector<std::string> keys = {
      "command", "field",  "force",  "grid",   "sweep",       "expect",      "seed",
      "output",  "threads", "A",     "phase",  "order",       "delta",       "interval",
      "check_exponent", "exponent_tol", "pair", "gamma", "psi_radius", "tolerance", "t0",
      "x0", "v0", "radius", "residual_tol", "closed_form", "closed_form_tol", "check_order",
      "min_order", "steps", "k_max"};
  return keys;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : runners()) n.push_back(name);
    return n;
  }();
  return names;
}

void validate_config(const std::string& command, const Json& config) {
  runner_for(command);
  require_object(config, "");
  for (auto it = config.begin(); it != config.end(); ++it) {
    const auto& keys = known_keys(command);
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ConfigError("/" + it.key(), "unknown field");
  }
  if (const Json* c = find(config, "command")) {
    if (!c->is_string() || c->get<std::string>() != command)
      throw ConfigError("/command", "does not match the subcommand '" + command + "'");
  }
  if (const Json* t = find(config, "threads"))
    if (!t->is_number_integer() || t->get<long long>() < 0)
      throw ConfigError("/threads", "expected a non-negative integer");
  if (const Json* o = find(config, "output"))
    if (!o->is_string()) throw ConfigError("/output", "expected a string");
}

RunResult run_scenario(const std::string& command, const Json& config) {
  validate_config(command, config);
  const Runner fn = runner_for(command);
  try {
    return fn(config);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    // Violated hypotheses are a failed check, not a crash.
    Builder b;
    b.check("hypotheses", false, 0.0, 0.0, "error");
    return b.finish(command, config, {{"error", e.what()}});
  }
}

}  // namespace avglemma
