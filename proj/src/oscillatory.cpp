#include "avglemma/oscillatory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "avglemma/errors.hpp"
#include "avglemma/parallel.hpp"
#include "avglemma/quadrature.hpp"
#include "avglemma/transport.hpp"

namespace avglemma {
namespace {

struct Neumaier {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

// Phase derivative table d[k-1][i] = d^k phi(u_i) for k = 1..K on a uniform grid.
using Table = std::vector<Vec>;

double min_sum(const Table& d, int gamma, std::size_t* argmin = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d[0].size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < gamma; ++k) s += std::abs(d[k][i]);
    if (s < best) {
      best = s;
      if (argmin) *argmin = i;
    }
  }
  return best;
}

struct CellNorm {
  double norm = 0.0;
  int components = 0;
};

// Partition of unity rho_k = w_k / sum_j w_j with w_k = smoothstep((|phi^(k)| - delta) / delta).
// Returns, per k, the sum over connected components of supp rho_k of sup + total variation.
std::vector<CellNorm> cell_norms(const Table& d, int gamma, double delta) {
  const std::size_t n = d[0].size();
  std::vector<Vec> w(gamma, Vec(n));
  Vec total(n, 0.0);
  for (int k = 0; k < gamma; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      w[k][i] = smoothstep((std::abs(d[k][i]) - delta) / delta);
      total[i] += w[k][i];
    }
  for (std::size_t i = 0; i < n; ++i)
    if (total[i] <= 0.0)
      throw NonDegeneracyError("partition of unity is empty at grid index " + std::to_string(i));
  std::vector<CellNorm> out(gamma);
  for (int k = 0; k < gamma; ++k) {
    std::size_t i = 0;
    while (i < n) {
      if (w[k][i] <= 0.0) {
        ++i;
        continue;
      }
      const std::size_t start = i;
      double sup = 0.0, tv = 0.0, prev = 0.0;
      while (i < n && w[k][i] > 0.0) {
        const double rho = w[k][i] / total[i];
        sup = std::max(sup, rho);
        if (i > start || start > 0) tv += std::abs(rho - prev);
        prev = rho;
        ++i;
      }
      if (i < n) tv += prev;
      out[k].norm += sup + tv;
      ++out[k].components;
    }
  }
  return out;
}

double l1_second(const Table& d, double du) {
  const Vec& p2 = d[1];
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < p2.size(); ++i) s += 0.5 * (std::abs(p2[i]) + std::abs(p2[i + 1]));
  return s * du;
}

}  // namespace

Amplitude Amplitude::one() {
  return {[](double) { return 1.0; }, [](double) { return 0.0; }};
}

AmplitudeNorms amplitude_norms(const Amplitude& psi, double alpha, double beta) {
  AmplitudeNorms n;
  const int samples = 4097;
  for (int i = 0; i < samples; ++i)
    n.sup = std::max(n.sup, std::abs(psi.value(alpha + (beta - alpha) * i / (samples - 1))));
  n.deriv_l1 = integrate_gl([&](double u) { return std::abs(psi.deriv(u)); }, alpha, beta, 256, 16);
  return n;
}

std::complex<double> integrate(const OscillatorySpec& spec) {
  if (!(spec.beta > spec.alpha)) throw PreconditionError("integration interval is empty");
  const GaussRule rule = gauss_legendre(10);
  const double lam = spec.lambda;
  Neumaier re, im;
  struct Panel {
    double a, b;
    int depth;
  };
  std::vector<Panel> stack{{spec.alpha, spec.beta, 0}};
  while (!stack.empty()) {
    const Panel p = stack.back();
    stack.pop_back();
    const double len = p.b - p.a;
    double slope = 0.0;
    for (int j = 0; j <= 4; ++j)
      slope = std::max(slope, std::abs(spec.phi.derivative(p.a + 0.25 * j * len, 1)));
    if (!std::isfinite(slope))
      throw PreconditionError("non-finite phase derivative near u = " + fmt(p.a));
    const double cap = std::numbers::pi / (4.0 * (1.0 + std::abs(lam) * slope));
    if (len > cap && p.depth < 60) {
      const double mid = 0.5 * (p.a + p.b);
      stack.push_back({mid, p.b, p.depth + 1});
      stack.push_back({p.a, mid, p.depth + 1});
      continue;
    }
    const double half = 0.5 * len, mid = p.a + half;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double u = mid + half * rule.nodes[i];
      const double amp = spec.psi.value(u), ph = lam * spec.phi(u);
      if (!std::isfinite(amp) || !std::isfinite(ph))
        throw PreconditionError("non-finite integrand at u = " + fmt(u));
      const double w = rule.weights[i] * half * amp;
      re.add(w * std::cos(ph));
      im.add(w * std::sin(ph));
    }
  }
  return {re.value(), im.value()};
}

double vdc_constant(int k) {
  if (k < 1) throw PreconditionError("van der Corput order must be >= 1");
  return 5.0 * std::ldexp(1.0, k - 1) - 2.0;
}

void require_derivative_lower_bound(const PhaseFunction& phi, int k, double delta, double alpha,
                                    double beta, int points) {
  if (!(delta > 0.0)) throw PreconditionError("delta must be positive");
  for (int i = 0; i < points; ++i) {
    const double u = alpha + (beta - alpha) * i / (points - 1);
    const double d = std::abs(phi.derivative(u, k));
    if (!(d >= delta * (1.0 - 1e-12)))
      throw PreconditionError("|phi^(" + std::to_string(k) + ")(" + fmt(u) + ")| = " + fmt(d) +
                              " is below delta = " + fmt(delta));
  }
}

double vdc_tilde(int k, double delta, double alpha, double beta, const PhaseFunction& phi) {
  if (k >= 2) return vdc_constant(k);
  const double l1 =
      integrate_gl([&](double u) { return std::abs(phi.derivative(u, 2)); }, alpha, beta, 256, 16);
  return 2.0 + l1 / delta;
}

double corollary_bound(int k, double delta, double alpha, double beta, double lambda,
                       const PhaseFunction& phi) {
  require_derivative_lower_bound(phi, k, delta, alpha, beta);
  const double ct = vdc_tilde(k, delta, alpha, beta, phi);
  const double lam = std::abs(lambda);
  return std::max(beta - alpha, ct) * std::max(1.0, std::pow(delta, -1.0 / k)) *
         std::min(1.0, lam > 0.0 ? std::pow(lam, -1.0 / k) : 1.0);
}

double amplitude_bound(int k, double delta, double alpha, double beta, double lambda,
                       const PhaseFunction& phi, const Amplitude& psi) {
  require_derivative_lower_bound(phi, k, delta, alpha, beta);
  const double ct = vdc_tilde(k, delta, alpha, beta, phi);
  const AmplitudeNorms n = amplitude_norms(psi, alpha, beta);
  return std::max(beta - alpha, ct) /
         (std::min(1.0, std::pow(delta, 1.0 / k)) *
          std::max(1.0, std::pow(std::abs(lambda), 1.0 / k))) *
         n.total();
}

std::vector<double> geometric_grid(double lo, double hi, int per_decade) {
  if (!(lo > 0.0) || !(hi >= lo) || per_decade < 1)
    throw PreconditionError("geometric grid needs 0 < lo <= hi");
  const int n = static_cast<int>(std::lround(std::log10(hi / lo) * per_decade));
  std::vector<double> out;
  for (int i = 0; i <= n; ++i) out.push_back(lo * std::pow(10.0, static_cast<double>(i) / per_decade));
  return out;
}

DecayReport decay_check(const OscillatorySpec& base, std::span<const double> lambdas, int order,
                        const std::function<double(double)>& bound, DecayOptions opts) {
  DecayReport rep;
  rep.order = order;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i <= 256; ++i) {
    const double p = base.phi(base.alpha + (base.beta - base.alpha) * i / 256.0);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  const int S = std::max(1, opts.subsamples);
  const double range = hi - lo;
  const double step = range > 0.0 ? 2.0 * std::numbers::pi / (S * range) : 0.0;
  rep.rows.resize(lambdas.size() * S);
  parallel_for(rep.rows.size(), [&](std::size_t idx) {
    const std::size_t j = idx / S, s = idx % S;
    OscillatorySpec spec = base;
    spec.lambda = lambdas[j] + s * step;
    DecayRow& r = rep.rows[idx];
    r.lambda = spec.lambda;
    r.magnitude = std::abs(integrate(spec));
    r.bound = bound(spec.lambda);
    r.ratio = r.bound > 0.0 ? r.magnitude / r.bound : std::numeric_limits<double>::infinity();
  });
  for (const DecayRow& r : rep.rows) {
    rep.worst_ratio = std::max(rep.worst_ratio, r.ratio);
    rep.scaled_sup =
        std::max(rep.scaled_sup, r.magnitude * std::max(1.0, std::pow(std::abs(r.lambda), 1.0 / order)));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t j = 0; j < lambdas.size(); ++j) {
    if (lambdas[j] < opts.fit_min) continue;
    double peak = 0.0;
    for (int s = 0; s < S; ++s) peak = std::max(peak, rep.rows[j * S + s].magnitude);
    if (peak <= 0.0) continue;
    const double x = std::log(lambdas[j]), y = std::log(peak);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n >= 2) rep.exponent = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  return rep;
}

namespace {

PartitionedBound assemble(int gamma, double A, const AmplitudeNorms& psi, double min_sum_value,
                          double sup_l1_second, const std::vector<double>& sup_rho,
                          const std::vector<int>& comps) {
  PartitionedBound pb;
  pb.min_sum = min_sum_value;
  pb.delta = std::min(1.0, min_sum_value / (2.0 * gamma));
  for (int k = 1; k <= gamma; ++k) {
    PartitionCell c;
    c.order = k;
    c.c_tilde = k == 1 ? 2.0 + sup_l1_second / pb.delta : vdc_constant(k);
    c.rho_norm = sup_rho[k - 1];
    c.max_components = comps[k - 1];
    c.term = std::max(2.0 * A, c.c_tilde) / std::pow(pb.delta, 1.0 / k) * c.rho_norm * psi.total();
    pb.d_gamma += c.term;
    pb.cells.push_back(c);
  }
  return pb;
}

void check_gamma(int gamma) {
  if (gamma < 1) throw PreconditionError("gamma must be >= 1");
}

}  // namespace

PartitionedBound partitioned_bound(const PhaseFunction& phi, const AmplitudeNorms& psi, int gamma,
                                   double A, int u_points) {
  check_gamma(gamma);
  const int K = std::max(gamma, 2);
  Table d(K, Vec(u_points));
  const double du = 2.0 * A / (u_points - 1);
  for (int k = 1; k <= K; ++k)
    for (int i = 0; i < u_points; ++i) d[k - 1][i] = phi.derivative(-A + i * du, k);
  std::size_t arg = 0;
  const double m = min_sum(d, gamma, &arg);
  if (!(m > 1e-9))
    throw NonDegeneracyError("sum of phase derivatives vanishes near u = " + fmt(-A + arg * du));
  const double delta = std::min(1.0, m / (2.0 * gamma));
  const auto cells = cell_norms(d, gamma, delta);
  std::vector<double> sup(gamma);
  std::vector<int> comps(gamma);
  for (int k = 0; k < gamma; ++k) {
    sup[k] = cells[k].norm;
    comps[k] = cells[k].components;
  }
  PartitionedBound pb = assemble(gamma, A, psi, m, l1_second(d, du), sup, comps);
  pb.witness_u = -A + arg * du;
  return pb;
}

PartitionedBound partitioned_bound(const VelocityField& a, const ForceField& F,
                                   const AmplitudeNorms& psi, int gamma, double A,
                                   PartitionOptions opts) {
  check_gamma(gamma);
  const int M = a.velocity_dim(), N = a.space_dim();
  const double fn = F.norm();
  if (fn == 0.0) throw UnsupportedError("derivative condition needs a nonzero force");
  const Eigen::MatrixXd R = rotate_velocity_frame(F);
  const int K = std::max(gamma, 2);
  const int nu = opts.u_points;
  const double du = 2.0 * A / (nu - 1);

  // Transverse grid in the rotated frame.
  std::vector<Vec> ws;
  {
    const int nw = M > 1 ? std::max(2, opts.w_points) : 1;
    std::size_t count = 1;
    for (int j = 1; j < M; ++j) count *= nw;
    for (std::size_t c = 0; c < count; ++c) {
      Vec w(M - 1);
      std::size_t r = c;
      for (int j = 0; j < M - 1; ++j) {
        w[j] = -A + 2.0 * A * static_cast<double>(r % nw) / (nw - 1);
        r /= nw;
      }
      ws.push_back(std::move(w));
    }
  }

  // rows[w][i][k-1] = -D^(k-1) b(v) / |F|^k, so that phi^(k) = rows . sigma.
  const int dim = N + 1;
  std::vector<std::vector<Vec>> rows(ws.size(), std::vector<Vec>(nu, Vec(K * dim)));
  parallel_for(ws.size() * nu, [&](std::size_t idx) {
    const std::size_t wi = idx / nu, i = idx % nu;
    Eigen::VectorXd local(M);
    local[0] = -A + i * du;
    for (int j = 1; j < M; ++j) local[j] = ws[wi][j - 1];
    const Eigen::VectorXd v = R.transpose() * local;
    const Vec vv(v.data(), v.data() + M);
    for (int k = 1; k <= K; ++k) {
      const Vec dk = directional_derivative(a, F, vv, k - 1);
      const double scale = -1.0 / std::pow(fn, k);
      for (int c = 0; c < dim; ++c) rows[wi][i][(k - 1) * dim + c] = scale * dk[c];
    }
  });

  auto table = [&](const Vec& sigma, std::size_t wi) {
    Table d(K, Vec(nu));
    for (int i = 0; i < nu; ++i)
      for (int k = 0; k < K; ++k) {
        double s = 0.0;
        for (int c = 0; c < dim; ++c) s += rows[wi][i][k * dim + c] * sigma[c];
        d[k][i] = s;
      }
    return d;
  };

  const SphereSampler sampler(dim, opts.sphere_points);
  std::vector<Vec> only;
  if (opts.direction) {
    if (static_cast<int>(opts.direction->size()) != dim)
      throw PreconditionError("direction must have N + 1 components");
    only.push_back(Direction::normalized(*opts.direction).components());
  }

  auto min_over = [&](const Vec& sigma) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t wi = 0; wi < ws.size(); ++wi) best = std::min(best, min_sum(table(sigma, wi), gamma));
    return best;
  };

  SphereExtremum minimum;
  if (opts.direction) {
    minimum = {min_over(only[0]), only[0]};
  } else {
    std::vector<Vec> seeds;
    for (std::size_t wi = 0; wi < ws.size(); ++wi)
      for (int i = 0; i < nu; i += 16) {
        Eigen::MatrixXd Mx(gamma, dim);
        for (int k = 0; k < gamma; ++k)
          for (int c = 0; c < dim; ++c) Mx(k, c) = rows[wi][i][k * dim + c];
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(Mx, Eigen::ComputeFullV);
        const Eigen::VectorXd nv = svd.matrixV().col(dim - 1);
        seeds.emplace_back(nv.data(), nv.data() + dim);
      }
    minimum = sphere_minimize(sampler, min_over, seeds);
  }
  if (!(minimum.value > 1e-9)) {
    std::ostringstream os;
    os << "derivative condition fails for gamma = " << gamma << ": minimum " << minimum.value
       << " at direction (";
    for (int c = 0; c < dim; ++c) os << (c ? ", " : "") << minimum.point[c];
    os << ")";
    throw NonDegeneracyError(os.str());
  }
  const double delta = std::min(1.0, minimum.value / (2.0 * gamma));

  std::vector<double> sup(gamma, 0.0);
  std::vector<int> comps(gamma, 0);
  for (int k = 0; k < gamma; ++k) {
    auto norm_k = [&](const Vec& sigma) {
      double best = 0.0;
      for (std::size_t wi = 0; wi < ws.size(); ++wi)
        best = std::max(best, cell_norms(table(sigma, wi), gamma, delta)[k].norm);
      return best;
    };
    const SphereExtremum e =
        opts.direction ? SphereExtremum{norm_k(only[0]), only[0]} : sphere_maximize(sampler, norm_k);
    sup[k] = e.value;
    for (std::size_t wi = 0; wi < ws.size(); ++wi)
      comps[k] = std::max(comps[k], cell_norms(table(e.point, wi), gamma, delta)[k].components);
  }
  auto second = [&](const Vec& sigma) {
    double best = 0.0;
    for (std::size_t wi = 0; wi < ws.size(); ++wi) best = std::max(best, l1_second(table(sigma, wi), du));
    return best;
  };
  const double l1 = opts.direction ? second(only[0]) : sphere_maximize(sampler, second).value;

  PartitionedBound pb = assemble(gamma, A, psi, minimum.value, l1, sup, comps);
  pb.witness_direction = minimum.point;
  return pb;
}

}  // namespace avglemma
