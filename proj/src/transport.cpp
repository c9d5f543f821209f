#include "avglemma/transport.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>

#include "avglemma/errors.hpp"
#include "avglemma/parallel.hpp"
#include "avglemma/quadrature.hpp"

namespace avglemma {
namespace {

constexpr double kPi = std::numbers::pi;

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// 1-D transform usable on any buffer of length n (FFTW_UNALIGNED).
class Plan1d {
 public:
  Plan1d(int n, int sign) : n_(n) {
    CVec buf(n);
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    std::lock_guard lock(plan_mutex());
    plan_ = fftw_plan_dft_1d(n, p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~Plan1d() {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan1d(const Plan1d&) = delete;
  Plan1d& operator=(const Plan1d&) = delete;
  void operator()(Complex* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(plan_, p, p);
  }

 private:
  int n_;
  fftw_plan plan_;
};

// Transform over the N+1 lattice axes for every velocity index (in place).
void lattice_fft(CVec& data, const TorusGrid& g, int sign) {
  const int rank = g.axes();
  std::vector<int> dims(rank, g.n_x);
  const int howmany = static_cast<int>(g.v_count());
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex());
    plan = fftw_plan_many_dft(rank, dims.data(), howmany, p, nullptr, howmany, 1, p, nullptr,
                              howmany, 1, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(plan_mutex());
  fftw_destroy_plan(plan);
}

// Integration matrix for the 8-point Gauss-Legendre rule:
// S[i][j] = int_{-1}^{x_i} l_j(t) dt with l_j the Lagrange basis.
const Eigen::MatrixXd& gl8_integration() {
  static const Eigen::MatrixXd S = [] {
    const GaussRule r = gauss_legendre(8);
    const int n = 8;
    auto legendre = [](int k, double x) {
      double p0 = 1.0, p1 = x;
      if (k == 0) return p0;
      for (int j = 2; j <= k; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      return p1;
    };
    Eigen::MatrixXd V(n, n), W(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        V(i, k) = legendre(k, r.nodes[i]);
        const double x = r.nodes[i];
        W(i, k) = k == 0 ? x + 1.0 : (legendre(k + 1, x) - legendre(k - 1, x)) / (2.0 * k + 1.0);
      }
    return Eigen::MatrixXd(W * V.inverse());
  }();
  return S;
}

void require_frame(const ForceField& F, int M) {
  if (!F.is_constant()) throw UnsupportedError("the slice solution needs a constant force");
  const Vec& f = F.vector();
  if (static_cast<int>(f.size()) != M) throw PreconditionError("force dimension must equal M");
  const double n = F.norm();
  if (n == 0.0) throw UnsupportedError("the slice solution is not defined for F = 0");
  if (f[0] <= 0.0) throw PreconditionError("rotate the velocity frame so that F is along +e1");
  for (int j = 1; j < M; ++j)
    if (std::abs(f[j]) > 1e-12 * n)
      throw PreconditionError("rotate the velocity frame so that F is along +e1");
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec w_point(const TorusGrid& g, std::size_t w) {
  Vec out(g.M - 1);
  for (int j = 0; j < g.M - 1; ++j) {
    out[j] = g.v_node(static_cast<int>(w % g.n_v));
    w /= g.n_v;
  }
  return out;
}

Vec b_at(const VelocityField& a, double u, const Vec& w) {
  Vec v(1 + w.size());
  v[0] = u;
  std::copy(w.begin(), w.end(), v.begin() + 1);
  return a.b(v);
}

// Trigonometric coefficients of a periodic line: x(u) = sum_m c_m e^{i pi m (u + P) / P}.
CVec line_modes(const Plan1d& fft, const Complex* line, int n) {
  CVec c(line, line + n);
  fft(c.data());
  for (auto& x : c) x /= static_cast<double>(n);
  c[n / 2] = 0.0;
  return c;
}

// sum over active i of modes[i] e^{i m_i phase}, m_i the signed frequency of index i.
Complex trig_sum(const CVec& modes, const std::vector<int>& active, int n, double phase) {
  if (active.empty()) return 0.0;
  int lo = n, hi = -n;
  for (int i : active) {
    const int m = i < n / 2 ? i : i - n;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  const Complex z = std::polar(1.0, phase);
  Complex acc = 0.0;
  for (int m = hi; m >= lo; --m) acc = acc * z + modes[m >= 0 ? m : m + n];
  return acc * std::polar(1.0, lo * phase);
}

}  // namespace

// ---------------------------------------------------------------- TorusGrid

void TorusGrid::validate() const {
  if (N < 1 || M < 1) throw PreconditionError("grid dimensions must be positive");
  if (!power_of_two(n_x) || n_x < 2) throw PreconditionError("n_x must be a power of two >= 2");
  if (!power_of_two(n_v) || n_v < 4) throw PreconditionError("n_v must be a power of two >= 4");
  if (!(L > 0.0)) throw PreconditionError("L must be positive");
  if (!(A > 0.0) || !(A < P - dv())) throw PreconditionError("need 0 < A < P - dv");
}

std::size_t TorusGrid::y_count() const { return ipow(n_x, axes()); }
std::size_t TorusGrid::v_count() const { return ipow(n_v, M); }
std::size_t TorusGrid::w_count() const { return ipow(n_v, M - 1); }

int TorusGrid::signed_mode(int i, bool* nyquist) const {
  if (nyquist) *nyquist = (i == n_x / 2);
  if (i == n_x / 2) return 0;
  return i < n_x / 2 ? i : i - n_x;
}

Vec TorusGrid::y_at(std::size_t index) const {
  Vec Y(axes());
  for (int j = axes() - 1; j >= 0; --j) {
    Y[j] = signed_mode(static_cast<int>(index % n_x)) / L;
    index /= n_x;
  }
  return Y;
}

bool TorusGrid::is_nyquist(std::size_t index) const {
  for (int j = 0; j < axes(); ++j) {
    if (static_cast<int>(index % n_x) == n_x / 2) return true;
    index /= n_x;
  }
  return false;
}

Vec TorusGrid::v_at(std::size_t index) const {
  Vec v(M);
  for (int j = 0; j < M; ++j) {
    v[j] = v_node(static_cast<int>(index % n_v));
    index /= n_v;
  }
  return v;
}

double TorusGrid::y_cell() const { return std::pow(1.0 / L, axes()); }

// ---------------------------------------------------------------- fields

SpectralKineticField::SpectralKineticField(TorusGrid g, FieldRole r)
    : grid(g), data(g.y_count() * g.v_count()), role(r) {
  grid.validate();
}

double SpectralKineticField::l2_norm_squared() const {
  double s = 0.0;
  for (const auto& c : data) s += std::norm(c);
  return s * grid.y_cell() * std::pow(grid.dv(), grid.M);
}

double SpectralKineticField::l2_norm() const { return std::sqrt(l2_norm_squared()); }

double relative_l2(const SpectralKineticField& a, const SpectralKineticField& b) {
  if (a.data.size() != b.data.size()) throw PreconditionError("fields live on different grids");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    num += std::norm(a.data[i] - b.data[i]);
    den += std::norm(b.data[i]);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

SpectralKineticField apply_operator(const SpectralKineticField& f, const VelocityField& a,
                                    const ForceField& F) {
  const TorusGrid& g = f.grid;
  if (a.velocity_dim() != g.M || a.space_dim() != g.N)
    throw PreconditionError("field dimensions do not match the grid");
  if (F.velocity_dim() != g.M) throw PreconditionError("force dimension must equal M");
  const std::size_t ny = g.y_count(), nv = g.v_count();
  SpectralKineticField out(g, FieldRole::g);

  std::vector<Vec> bs(nv);
  for (std::size_t v = 0; v < nv; ++v) bs[v] = a.b(g.v_at(v));

  parallel_for(ny, [&](std::size_t y) {
    if (g.is_nyquist(y)) return;
    const Vec Y = g.y_at(y);
    for (std::size_t v = 0; v < nv; ++v)
      out.at(y, v) = Complex(0.0, dot(bs[v], Y)) * f.at(y, v);
  });

  // Spectral velocity derivatives, one field per axis.
  const int n = g.n_v;
  const Plan1d fwd(n, FFTW_FORWARD), bwd(n, FFTW_BACKWARD);
  std::vector<CVec> derivs(g.M);
  std::vector<double> total(ny, 0.0), high(ny, 0.0);
  for (int j = 0; j < g.M; ++j) {
    if (F.is_constant() && F.vector()[j] == 0.0) continue;
    derivs[j].assign(f.data.size(), 0.0);
    const std::size_t stride = ipow(n, j);
    parallel_for(ny, [&](std::size_t y) {
      CVec line(n);
      for (std::size_t base = 0; base < nv; ++base) {
        if ((base / stride) % n != 0) continue;
        for (int i = 0; i < n; ++i) line[i] = f.at(y, base + i * stride);
        fwd(line.data());
        for (int i = 0; i < n; ++i) {
          const double e = std::norm(line[i]);
          const int m = i < n / 2 ? i : i - n;
          total[y] += e;
          if (3 * std::abs(m) > n || i == n / 2) high[y] += e;
          line[i] *= (i == n / 2) ? Complex(0.0) : Complex(0.0, kPi * m / g.P / n);
        }
        bwd(line.data());
        for (int i = 0; i < n; ++i) derivs[j][y * nv + base + i * stride] = line[i];
      }
    });
  }
  double tot = 0.0, hi = 0.0;
  for (std::size_t y = 0; y < ny; ++y) {
    tot += total[y];
    hi += high[y];
  }
  if (tot > 0.0 && hi > 1e-8 * tot)
    throw AliasingError("velocity spectrum not resolved: " + std::to_string(hi / tot) +
                        " of the energy lies above n_v / 3");

  if (F.is_constant()) {
    const Vec& Fv = F.vector();
    for (int j = 0; j < g.M; ++j) {
      if (Fv[j] == 0.0) continue;
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += Fv[j] * derivs[j][i];
    }
  } else {
    // Pseudo-spectral product F(X, v) . grad_v f in physical X.
    for (auto& d : derivs) lattice_fft(d, g, FFTW_BACKWARD);
    CVec prod(f.data.size(), 0.0);
    const int D = g.axes();
    parallel_for(ny, [&](std::size_t y) {
      std::size_t r = y;
      Vec X(D);
      for (int k = D - 1; k >= 0; --k) {
        X[k] = 2.0 * kPi * g.L * static_cast<double>(r % g.n_x) / g.n_x;
        r /= g.n_x;
      }
      const std::span<const double> x(X.data() + 1, g.N);
      for (std::size_t v = 0; v < nv; ++v) {
        const Vec vv = g.v_at(v);
        const Vec Fx = F(X[0], x, vv);
        Complex s = 0.0;
        for (int j = 0; j < g.M; ++j) s += Fx[j] * derivs[j][y * nv + v];
        prod[y * nv + v] = s;
      }
    });
    lattice_fft(prod, g, FFTW_FORWARD);
    const double scale = 1.0 / static_cast<double>(ny);
    for (std::size_t y = 0; y < ny; ++y) {
      if (g.is_nyquist(y)) continue;
      for (std::size_t v = 0; v < nv; ++v) out.at(y, v) += prod[y * nv + v] * scale;
    }
  }
  return out;
}

// ---------------------------------------------------------------- frames

Eigen::MatrixXd rotate_velocity_frame(const ForceField& F) {
  const Vec& f = F.vector();
  const int M = static_cast<int>(f.size());
  const double n = F.norm();
  if (n == 0.0) throw UnsupportedError("cannot align the frame with F = 0");
  Eigen::VectorXd u(M);
  for (int j = 0; j < M; ++j) u[j] = f[j] / n;
  u[0] -= 1.0;
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(M, M);
  const double un = u.squaredNorm();
  if (un < 1e-30) return R;
  R -= 2.0 * u * u.transpose() / un;
  if (M >= 2) R.row(M - 1) *= -1.0;
  return R;
}

SpectralKineticField rotate_field(const SpectralKineticField& f, const Eigen::MatrixXd& R) {
  const TorusGrid& g = f.grid;
  const int M = g.M, n = g.n_v;
  const std::size_t nv = g.v_count(), ny = g.y_count();
  SpectralKineticField out(g, f.role);
  std::vector<Vec> src(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec p = g.v_at(v);
    const Eigen::Map<const Eigen::VectorXd> pv(p.data(), M);
    const Eigen::VectorXd q = R.transpose() * pv;
    src[v] = Vec(q.data(), q.data() + M);
  }
  parallel_for(ny, [&](std::size_t y) {
    // Multi-dimensional DFT of the velocity block, then direct evaluation.
    CVec coef(nv, 0.0);
    for (std::size_t k = 0; k < nv; ++k) {
      Complex s = 0.0;
      for (std::size_t v = 0; v < nv; ++v) {
        double ph = 0.0;
        std::size_t kk = k, vv = v;
        for (int j = 0; j < M; ++j) {
          ph += static_cast<double>((kk % n) * (vv % n)) / n;
          kk /= n;
          vv /= n;
        }
        s += f.at(y, v) * std::polar(1.0, -2.0 * kPi * ph);
      }
      coef[k] = s / static_cast<double>(nv);
    }
    for (std::size_t v = 0; v < nv; ++v) {
      Complex s = 0.0;
      for (std::size_t k = 0; k < nv; ++k) {
        double ph = 0.0;
        std::size_t kk = k;
        bool nyq = false;
        for (int j = 0; j < M; ++j) {
          const int i = static_cast<int>(kk % n);
          if (i == n / 2) nyq = true;
          const int m = i < n / 2 ? i : i - n;
          ph += kPi * m * (src[v][j] + g.P) / g.P;
          kk /= n;
        }
        if (!nyq) s += coef[k] * std::polar(1.0, ph);
      }
      out.at(y, v) = s;
    }
  });
  return out;
}

Vec B_primitive(const VelocityField& a, const ForceField& F, double v1_0, double v1,
                std::span<const double> w) {
  const double n = F.norm();
  if (n == 0.0) throw UnsupportedError("B is not defined for F = 0");
  const Vec wv(w.begin(), w.end());
  const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(v1 - v1_0) / 0.125)));
  const int dim = a.space_dim() + 1;
  Vec out(dim, 0.0);
  const GaussRule r = gauss_legendre(16);
  const double h = (v1 - v1_0) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = v1_0 + (p + 0.5) * h;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      const Vec b = b_at(a, mid + 0.5 * h * r.nodes[i], wv);
      for (int c = 0; c < dim; ++c) out[c] -= r.weights[i] * 0.5 * h * b[c] / n;
    }
  }
  return out;
}

SliceChoice select_v1_slice(const SpectralKineticField& f) {
  const TorusGrid& g = f.grid;
  SliceChoice best;
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < g.n_v; ++i) {
    const double v1 = g.v_node(i);
    if (!(v1 > 0.0 && v1 < 1.0)) continue;
    double h = 0.0;
    for (std::size_t y = 0; y < g.y_count(); ++y)
      for (std::size_t w = 0; w < g.w_count(); ++w) h += std::norm(f.at(y, i + g.n_v * w));
    sum += h;
    ++count;
    if (best.index < 0 || h < best.h_value) {
      best.index = i;
      best.v1 = v1;
      best.h_value = h;
    }
  }
  if (count == 0) throw PreconditionError("no velocity grid point in (0, 1)");
  best.h_mean = sum / count;
  return best;
}

Slice extract_slice(const SpectralKineticField& f, int v1_index) {
  const TorusGrid& g = f.grid;
  if (v1_index < 0 || v1_index >= g.n_v) throw PreconditionError("slice index out of range");
  Slice s{g, v1_index, CVec(g.y_count() * g.w_count())};
  for (std::size_t y = 0; y < g.y_count(); ++y)
    for (std::size_t w = 0; w < g.w_count(); ++w)
      s.data[y * g.w_count() + w] = f.at(y, v1_index + g.n_v * w);
  return s;
}

// ---------------------------------------------------------------- slice solution

SliceSolution::SliceSolution(Slice slice, SpectralKineticField g, VelocityField a, ForceField F,
                             ReconstructOptions opts)
    : slice_(std::move(slice)), g_(std::move(g)), a_(std::move(a)), F_(std::move(F)), opts_(opts) {
  build();
}

CVec SliceSolution::ghat_modes(std::size_t y, std::size_t w, std::vector<int>* active) const {
  const TorusGrid& g = grid();
  const int n = g.n_v;
  CVec line(n);
  for (int i = 0; i < n; ++i) line[i] = g_.at(y, i + n * w);
  thread_local std::unique_ptr<Plan1d> plan;
  thread_local int plan_n = 0;
  if (!plan || plan_n != n) {
    plan = std::make_unique<Plan1d>(n, FFTW_FORWARD);
    plan_n = n;
  }
  CVec c = line_modes(*plan, line.data(), n);
  double mx = 0.0;
  for (const auto& x : c) mx = std::max(mx, std::abs(x));
  if (active) {
    active->clear();
    for (int i = 0; i < n; ++i)
      if (mx > 0.0 && std::abs(c[i]) > opts_.prune * mx) active->push_back(i);
  }
  return c;
}

void SliceSolution::build() {
  const TorusGrid& g = grid();
  if (g_.grid.n_x != g.n_x || g_.grid.n_v != g.n_v || g_.grid.N != g.N || g_.grid.M != g.M)
    throw PreconditionError("slice and source live on different grids");
  if (a_.velocity_dim() != g.M || a_.space_dim() != g.N)
    throw PreconditionError("field dimensions do not match the grid");
  require_frame(F_, g.M);
  fnorm_ = F_.norm();
  const int n = g.n_v, dim = g.N + 1;
  const std::size_t ny = g.y_count(), nw = g.w_count();

  // Phase-rate estimate from the data: max |Y| with data and max active mode of ghat.
  double ymax = 0.0;
  int mmax = 0;
  {
    std::vector<double> yloc(ny, 0.0);
    std::vector<int> mloc(ny, 0);
    parallel_for(ny, [&](std::size_t y) {
      bool any = false;
      std::vector<int> act;
      for (std::size_t w = 0; w < nw; ++w) {
        if (slice_.data[y * nw + w] != Complex(0.0)) any = true;
        ghat_modes(y, w, &act);
        if (!act.empty()) any = true;
        for (int i : act) mloc[y] = std::max(mloc[y], std::abs(i < n / 2 ? i : i - n));
      }
      if (any) {
        const Vec Y = g.y_at(y);
        yloc[y] = std::sqrt(dot(Y, Y));
      }
    });
    for (std::size_t y = 0; y < ny; ++y) {
      ymax = std::max(ymax, yloc[y]);
      mmax = std::max(mmax, mloc[y]);
    }
  }
  double bmax = 0.0;
  for (std::size_t w = 0; w < nw; ++w) {
    const Vec wp = w_point(g, w);
    for (int i = 0; i < 2 * n; ++i) {
      const Vec b = b_at(a_, -g.P + 0.5 * i * g.dv(), wp);
      bmax = std::max(bmax, std::sqrt(dot(b, b)));
    }
  }
  const double rate = bmax * ymax / fnorm_ + kPi * mmax / g.P;
  sub_ = std::max(1, static_cast<int>(std::ceil(rate * g.dv() / opts_.max_phase_step)));

  const GaussRule r = gauss_legendre(8);
  const int panels = (n - 1) * sub_;
  const double ph = g.dv() / sub_;
  nodes_.resize(panels * 8);
  weights_.resize(panels * 8);
  for (int p = 0; p < panels; ++p)
    for (int q = 0; q < 8; ++q) {
      nodes_[p * 8 + q] = -g.P + (p + 0.5) * ph + 0.5 * ph * r.nodes[q];
      weights_[p * 8 + q] = 0.5 * ph * r.weights[q];
    }

  // e^{i m pi (u_q + P) / P} by FFT index, when small enough to keep.
  mode_table_.clear();
  if (nodes_.size() * n <= (std::size_t{1} << 24)) {
    mode_table_.resize(nodes_.size() * n);
    for (std::size_t q = 0; q < nodes_.size(); ++q)
      for (int i = 0; i < n; ++i) {
        const int m = i < n / 2 ? i : i - n;
        mode_table_[q * n + i] = std::polar(1.0, kPi * m * (nodes_[q] + g.P) / g.P);
      }
  }

  const Eigen::MatrixXd& S = gl8_integration();
  const int p0 = slice_.v1_index * sub_;
  B_nodes_.assign(nw, Vec(nodes_.size() * dim));
  B_edges_.assign(nw, Vec((panels + 1) * dim));
  for (std::size_t w = 0; w < nw; ++w) {
    const Vec wp = w_point(g, w);
    Vec integrand(nodes_.size() * dim);
    for (std::size_t q = 0; q < nodes_.size(); ++q) {
      const Vec b = b_at(a_, nodes_[q], wp);
      for (int c = 0; c < dim; ++c) integrand[q * dim + c] = -b[c] / fnorm_;
    }
    Vec& E = B_edges_[w];
    auto panel_integral = [&](int p, int c) {
      double s = 0.0;
      for (int q = 0; q < 8; ++q) s += weights_[p * 8 + q] * integrand[(p * 8 + q) * dim + c];
      return s;
    };
    for (int c = 0; c < dim; ++c) E[p0 * dim + c] = 0.0;
    for (int p = p0; p < panels; ++p)
      for (int c = 0; c < dim; ++c) E[(p + 1) * dim + c] = E[p * dim + c] + panel_integral(p, c);
    for (int p = p0 - 1; p >= 0; --p)
      for (int c = 0; c < dim; ++c) E[p * dim + c] = E[(p + 1) * dim + c] - panel_integral(p, c);
    for (int p = 0; p < panels; ++p)
      for (int q = 0; q < 8; ++q)
        for (int c = 0; c < dim; ++c) {
          double s = 0.0;
          for (int j = 0; j < 8; ++j) s += S(q, j) * integrand[(p * 8 + j) * dim + c];
          B_nodes_[w][(p * 8 + q) * dim + c] = E[p * dim + c] + 0.5 * ph * s;
        }
  }

  // e^{-i B_c(u_q) k / L} by FFT index of k, when small enough to keep.
  theta_table_.clear();
  const std::size_t nq = nodes_.size();
  if (nw * nq * dim * g.n_x <= (std::size_t{1} << 23)) {
    theta_table_.resize(nw * nq * dim * g.n_x);
    parallel_for(nw * nq, [&](std::size_t wq) {
      const std::size_t w = wq / nq, q = wq % nq;
      for (int c = 0; c < dim; ++c)
        for (int i = 0; i < g.n_x; ++i)
          theta_table_[(wq * dim + c) * g.n_x + i] =
              std::polar(1.0, -B_nodes_[w][q * dim + c] * g.signed_mode(i) / g.L);
    });
  }

  f_ = SpectralKineticField(g, FieldRole::f);
  parallel_for(ny, [&](std::size_t y) {
    CVec out;
    for (std::size_t w = 0; w < nw; ++w) {
      solve_line(y, w, &out, nullptr);
      for (int i = 0; i < n; ++i) f_.at(y, i + n * w) = out[i];
    }
  });
}

void SliceSolution::solve_line(std::size_t y, std::size_t w, CVec* grid_out, CVec* node_out) const {
  const TorusGrid& g = grid();
  const int n = g.n_v, dim = g.N + 1;
  const std::size_t nw = g.w_count();
  const int panels = (n - 1) * sub_;
  const std::size_t nq = nodes_.size();
  const Complex c0 = slice_.data[y * nw + w];
  std::vector<int> active;
  const CVec modes = ghat_modes(y, w, &active);
  if (grid_out) grid_out->assign(n, 0.0);
  if (node_out) node_out->assign(nq, 0.0);
  if (c0 == Complex(0.0) && active.empty()) return;

  const Vec Y = g.y_at(y);
  const Vec& Bn = B_nodes_[w];
  const Vec& Be = B_edges_[w];
  auto theta = [&](const Vec& B, std::size_t idx) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) s += B[idx * dim + c] * Y[c];
    return s;
  };

  const int nx = g.n_x;
  std::vector<int> yi(dim);
  for (std::size_t r = y, c = dim; c-- > 0; r /= nx) yi[c] = static_cast<int>(r % nx);

  // Integrand ghat(u) e^{-i B(u) . Y} at the nodes.
  CVec h(nq), rot(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    if (!theta_table_.empty()) {
      const Complex* t = theta_table_.data() + (w * nq + q) * dim * nx;
      Complex r = t[yi[0]];
      for (int c = 1; c < dim; ++c) r *= t[c * nx + yi[c]];
      rot[q] = r;
    } else {
      rot[q] = std::polar(1.0, -theta(Bn, q));
    }
    Complex gv = 0.0;
    if (!mode_table_.empty()) {
      const Complex* row = mode_table_.data() + q * n;
      for (int i : active) gv += modes[i] * row[i];
    } else {
      gv = trig_sum(modes, active, n, kPi * (nodes_[q] + g.P) / g.P);
    }
    h[q] = gv * rot[q];
  }

  const Eigen::MatrixXd& S = gl8_integration();
  const int p0 = slice_.v1_index * sub_;
  CVec J(panels + 1, 0.0);
  auto panel_sum = [&](int p) {
    Complex s = 0.0;
    for (int q = 0; q < 8; ++q) s += weights_[p * 8 + q] * h[p * 8 + q];
    return s;
  };
  for (int p = p0; p < panels; ++p) J[p + 1] = J[p] + panel_sum(p);
  for (int p = p0 - 1; p >= 0; --p) J[p] = J[p + 1] - panel_sum(p);

  if (grid_out)
    for (int i = 0; i < n; ++i) {
      const int e = i * sub_;
      (*grid_out)[i] = std::polar(1.0, theta(Be, e)) * (c0 + J[e] / fnorm_);
    }
  if (node_out) {
    const double half = 0.5 * g.dv() / sub_;
    for (int p = 0; p < panels; ++p)
      for (int q = 0; q < 8; ++q) {
        Complex s = 0.0;
        for (int j = 0; j < 8; ++j) s += S(q, j) * h[p * 8 + j];
        const std::size_t idx = p * 8 + q;
        (*node_out)[idx] = std::conj(rot[idx]) * (c0 + (J[p] + half * s) / fnorm_);
      }
  }
}

Complex SliceSolution::value(std::size_t y, std::size_t w, double v1) const {
  const TorusGrid& g = grid();
  const double v0 = v1_0();
  const Vec wp = w_point(g, w);
  const Vec Y = g.y_at(y);
  const int n = g.n_v;
  std::vector<int> active;
  const CVec modes = ghat_modes(y, w, &active);
  auto ghat = [&](double u) { return trig_sum(modes, active, n, kPi * (u + g.P) / g.P); };
  auto BY = [&](double u) { return dot(B_primitive(a_, F_, v0, u, wp), Y); };
  // Split [v0, v1] into panels no longer than one solver subpanel.
  const double ph = g.dv() / sub_;
  const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(v1 - v0) / ph)));
  const double step = (v1 - v0) / panels;
  const GaussRule r = gauss_legendre(16);
  Complex J = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = v0 + (p + 0.5) * step;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      const double u = mid + 0.5 * step * r.nodes[i];
      J += r.weights[i] * 0.5 * step * ghat(u) * std::polar(1.0, -BY(u));
    }
  }
  return std::polar(1.0, BY(v1)) * (slice_.data[y * g.w_count() + w] + J / fnorm_);
}

CVec SliceSolution::velocity_average(
    const std::function<double(std::span<const double>)>& psi) const {
  const TorusGrid& g = grid();
  const std::size_t ny = g.y_count(), nw = g.w_count(), nq = nodes_.size();
  const double dw = std::pow(g.dv(), g.M - 1);
  std::vector<Vec> pw(nw, Vec(nq));
  for (std::size_t w = 0; w < nw; ++w) {
    const Vec wp = w_point(g, w);
    Vec v(g.M);
    std::copy(wp.begin(), wp.end(), v.begin() + 1);
    for (std::size_t q = 0; q < nq; ++q) {
      v[0] = nodes_[q];
      pw[w][q] = psi(v);
    }
  }
  CVec rho(ny, 0.0);
  parallel_for(ny, [&](std::size_t y) {
    CVec vals;
    Complex s = 0.0;
    for (std::size_t w = 0; w < nw; ++w) {
      solve_line(y, w, nullptr, &vals);
      Complex line = 0.0;
      for (std::size_t q = 0; q < nq; ++q) line += weights_[q] * pw[w][q] * vals[q];
      s += line * dw;
    }
    rho[y] = s;
  });
  return rho;
}

Vec SliceSolution::source_box_energy() const {
  const TorusGrid& g = grid();
  const std::size_t ny = g.y_count(), nw = g.w_count();
  const int n = g.n_v;
  const double dw = std::pow(g.dv(), g.M - 1);
  // gram[k + n] = int_{-A}^{A} exp(i pi k (u + P) / P) du, real by symmetry of the box.
  Vec gram(2 * n + 1);
  for (int k = -n; k <= n; ++k)
    gram[k + n] = k == 0 ? 2.0 * g.A
                         : 2.0 * g.P * std::sin(kPi * k * g.A / g.P) / (kPi * k) * (k % 2 == 0 ? 1.0 : -1.0);
  std::vector<bool> inside(nw, true);
  for (std::size_t w = 0; w < nw; ++w)
    for (double x : w_point(g, w))
      if (std::abs(x) > g.A) inside[w] = false;
  Vec out(ny, 0.0);
  parallel_for(ny, [&](std::size_t y) {
    std::vector<int> active;
    double s = 0.0;
    for (std::size_t w = 0; w < nw; ++w) {
      if (!inside[w]) continue;
      const CVec modes = ghat_modes(y, w, &active);
      double line = 0.0;
      for (int i : active) {
        const int mi = i < n / 2 ? i : i - n;
        for (int j : active) {
          const int mj = j < n / 2 ? j : j - n;
          line += std::real(modes[i] * std::conj(modes[j])) * gram[mi - mj + n];
        }
      }
      s += line * dw;
    }
    out[y] = s;
  });
  return out;
}

SliceSolution reconstruct_from_slice(const Slice& slice, const SpectralKineticField& g,
                                     const VelocityField& a, const ForceField& F,
                                     ReconstructOptions opts) {
  return SliceSolution(slice, g, a, F, opts);
}

// ---------------------------------------------------------------- residual

ResidualReport ode_residual(const SpectralKineticField& f, const SpectralKineticField& g,
                            const VelocityField& a, const ForceField& F, std::size_t max_lines) {
  const TorusGrid& grid = f.grid;
  require_frame(F, grid.M);
  const double fn = F.norm();
  const int n = grid.n_v, dim = grid.N + 1;
  const std::size_t nw = grid.w_count();

  std::vector<std::pair<std::size_t, std::size_t>> lines;
  for (std::size_t y = 0; y < grid.y_count(); ++y)
    for (std::size_t w = 0; w < nw; ++w) {
      bool any = false;
      for (int i = 0; i < n && !any; ++i)
        any = f.at(y, i + n * w) != Complex(0.0) || g.at(y, i + n * w) != Complex(0.0);
      if (any) lines.emplace_back(y, w);
    }
  ResidualReport rep;
  if (lines.empty()) return rep;
  std::vector<std::pair<std::size_t, std::size_t>> picked;
  const std::size_t take = std::min(max_lines, lines.size());
  for (std::size_t k = 0; k < take; ++k) picked.push_back(lines[k * lines.size() / take]);
  rep.lines_checked = picked.size();

  // Direct DFT coefficients of ghat along v1 (independent of the solver's FFT).
  auto modes_of = [&](std::size_t y, std::size_t w) {
    CVec c(n, 0.0);
    for (int k = 0; k < n; ++k) {
      if (k == n / 2) continue;
      Complex s = 0.0;
      for (int i = 0; i < n; ++i) s += g.at(y, i + n * w) * std::polar(1.0, -2.0 * kPi * k * i / n);
      c[k] = s / static_cast<double>(n);
    }
    return c;
  };

  double ymax = 0.0, bmax = 0.0;
  for (auto [y, w] : picked) {
    const Vec Y = grid.y_at(y);
    ymax = std::max(ymax, std::sqrt(dot(Y, Y)));
  }
  for (std::size_t w = 0; w < nw; ++w)
    for (int i = 0; i <= 2 * n; ++i) {
      const Vec b = b_at(a, -grid.P + 0.5 * i * grid.dv(), w_point(grid, w));
      bmax = std::max(bmax, std::sqrt(dot(b, b)));
    }
  const double rate = bmax * ymax / fn + kPi * (n / 2) / grid.P;
  const int sub = std::max(1, static_cast<int>(std::ceil(rate * grid.dv() / 0.5)));
  const GaussRule r24 = gauss_legendre(24), r10 = gauss_legendre(10);
  const double ph = grid.dv() / sub;

  // Per w: for each cell i, nodes u and Delta(u) = -(1/|F|) int_u^{v_{i+1}} b.
  std::vector<std::size_t> wlist;
  for (auto [y, w] : picked)
    if (std::find(wlist.begin(), wlist.end(), w) == wlist.end()) wlist.push_back(w);
  const std::size_t per_cell = static_cast<std::size_t>(sub) * r24.nodes.size();
  struct CellTable {
    Vec u, weight, delta;  // delta[q * dim + c]
    Vec full;              // -(1/|F|) int_{v_i}^{v_{i+1}} b
  };
  std::vector<std::vector<CellTable>> tables(wlist.size(), std::vector<CellTable>(n - 1));
  parallel_for(wlist.size() * (n - 1), [&](std::size_t idx) {
    const std::size_t wi = idx / (n - 1);
    const int i = static_cast<int>(idx % (n - 1));
    const Vec wp = w_point(grid, wlist[wi]);
    const double right = grid.v_node(i + 1);
    CellTable& t = tables[wi][i];
    t.u.reserve(per_cell);
    auto integral_to_right = [&](double u) {
      Vec s(dim, 0.0);
      const double len = right - u;
      for (std::size_t k = 0; k < r10.nodes.size(); ++k) {
        const Vec b = b_at(a, u + 0.5 * len * (r10.nodes[k] + 1.0), wp);
        for (int c = 0; c < dim; ++c) s[c] -= r10.weights[k] * 0.5 * len * b[c] / fn;
      }
      return s;
    };
    for (int p = 0; p < sub; ++p) {
      const double mid = grid.v_node(i) + (p + 0.5) * ph;
      for (std::size_t k = 0; k < r24.nodes.size(); ++k) {
        const double u = mid + 0.5 * ph * r24.nodes[k];
        t.u.push_back(u);
        t.weight.push_back(0.5 * ph * r24.weights[k]);
        const Vec d = integral_to_right(u);
        t.delta.insert(t.delta.end(), d.begin(), d.end());
      }
    }
    t.full = Vec(dim, 0.0);
    for (int p = 0; p < sub; ++p) {
      const double lo = grid.v_node(i) + p * ph;
      for (std::size_t k = 0; k < r24.nodes.size(); ++k) {
        const Vec b = b_at(a, lo + 0.5 * ph * (r24.nodes[k] + 1.0), wp);
        for (int c = 0; c < dim; ++c) t.full[c] -= r24.weights[k] * 0.5 * ph * b[c] / fn;
      }
    }
  });

  Vec num(picked.size(), 0.0), den(picked.size(), 0.0);
  parallel_for(picked.size(), [&](std::size_t li) {
    const auto [y, w] = picked[li];
    const std::size_t wi = std::find(wlist.begin(), wlist.end(), w) - wlist.begin();
    const Vec Y = grid.y_at(y);
    const CVec c = modes_of(y, w);
    for (int i = 0; i + 1 < n; ++i) {
      const CellTable& t = tables[wi][i];
      Complex J = 0.0;
      for (std::size_t q = 0; q < t.u.size(); ++q) {
        Complex gv = 0.0;
        for (int k = 0; k < n; ++k) {
          if (c[k] == Complex(0.0)) continue;
          const int m = k < n / 2 ? k : k - n;
          gv += c[k] * std::polar(1.0, kPi * m * (t.u[q] + grid.P) / grid.P);
        }
        double th = 0.0;
        for (int cc = 0; cc < dim; ++cc) th += t.delta[q * dim + cc] * Y[cc];
        J += t.weight[q] * gv * std::polar(1.0, th);
      }
      const double th_full = dot(t.full, Y);
      const Complex predicted = std::polar(1.0, th_full) * f.at(y, i + n * w) + J / fn;
      const Complex actual = f.at(y, i + 1 + n * w);
      num[li] += std::norm(actual - predicted);
      den[li] += std::norm(actual);
    }
  });
  double sn = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    sn += num[i];
    sd += den[i];
  }
  rep.relative = sd > 0.0 ? std::sqrt(sn / sd) : (sn > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return rep;
}

// ---------------------------------------------------------------- averages

CVec velocity_average(const SpectralKineticField& f,
                      const std::function<double(std::span<const double>)>& psi) {
  const TorusGrid& g = f.grid;
  const std::size_t nv = g.v_count(), ny = g.y_count();
  Vec pv(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec p = g.v_at(v);
    pv[v] = psi(p);
    bool outside = false;
    for (double x : p)
      if (std::abs(x) > g.A) outside = true;
    if (outside && pv[v] != 0.0)
      throw SupportError("test function is nonzero outside [-A, A]^M");
  }
  const double cell = std::pow(g.dv(), g.M);
  CVec rho(ny, 0.0);
  parallel_for(ny, [&](std::size_t y) {
    Complex s = 0.0;
    for (std::size_t v = 0; v < nv; ++v) s += f.at(y, v) * pv[v];
    rho[y] = s * cell;
  });
  return rho;
}

std::function<double(std::span<const double>)> bump(double r) {
  return [r](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    const double t = s / (r * r);
    if (t >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - t));
  };
}

// ---------------------------------------------------------------- pairs

Pair make_pair(const PairSpec& spec, const TorusGrid& grid, const VelocityField& a,
               const ForceField& F) {
  grid.validate();
  Pair out;
  const std::size_t ny = grid.y_count(), nv = grid.v_count(), nw = grid.w_count();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  if (spec.mode == PairSpec::Mode::manufactured) {
    out.f = SpectralKineticField(grid, FieldRole::f);
    if (!spec.zero) {
      const double width = spec.width > 0.0 ? spec.width : grid.P / 8.0;
      const double radius = spec.y_radius > 0.0 ? spec.y_radius : grid.n_x / (4.0 * grid.L);
      Vec eta(nv);
      for (std::size_t v = 0; v < nv; ++v) {
        double e = 1.0;
        for (double x : grid.v_at(v)) e *= std::exp(-(x - 0.25) * (x - 0.25) / (2.0 * width * width));
        eta[v] = e;
      }
      for (std::size_t y = 0; y < ny; ++y) {
        const Complex c(normal(rng), normal(rng));
        const Vec Y = grid.y_at(y);
        if (grid.is_nyquist(y) || std::sqrt(dot(Y, Y)) >= radius) continue;
        for (std::size_t v = 0; v < nv; ++v) out.f.at(y, v) = c * eta[v];
      }
    }
    out.g = apply_operator(out.f, a, F);
    return out;
  }

  require_frame(F, grid.M);
  int index = -1;
  for (int i = 0; i < grid.n_v; ++i)
    if (grid.v_node(i) > 0.0 && grid.v_node(i) < 1.0) {
      index = i;
      break;
    }
  if (index < 0) throw PreconditionError("no velocity grid point in (0, 1)");
  Slice slice{grid, index, CVec(ny * nw, 0.0)};
  SpectralKineticField g(grid, FieldRole::g);
  const int n = grid.n_v;
  const int kv = std::max(1, n / 16);
  std::normal_distribution<double> mode_normal(0.0, std::sqrt(0.5 / (2 * kv + 1)));
  for (std::size_t y = 0; y < ny; ++y) {
    const Vec Y = grid.y_at(y);
    if (grid.is_nyquist(y) || !(std::sqrt(dot(Y, Y)) < spec.cutoff)) continue;
    for (std::size_t w = 0; w < nw; ++w) slice.data[y * nw + w] = Complex(normal(rng), normal(rng));
    for (std::size_t w = 0; w < nw; ++w) {
      CVec c(2 * kv + 1);
      for (auto& x : c) x = Complex(mode_normal(rng), mode_normal(rng));
      for (int i = 0; i < n; ++i) {
        Complex s = 0.0;
        for (int m = -kv; m <= kv; ++m) s += c[m + kv] * std::polar(1.0, 2.0 * kPi * m * i / n);
        g.at(y, i + n * w) = s;
      }
    }
  }
  out.f = reconstruct_from_slice(slice, g, a, F).field();
  out.g = std::move(g);
  out.v1_index = index;
  return out;
}

// ---------------------------------------------------------------- binary I/O

namespace {

constexpr char kMagic[4] = {'A', 'V', 'L', 'F'};

template <class T>
void put(std::ostream& os, T x) {
  if constexpr (std::endian::native == std::endian::big) {
    char b[sizeof(T)];
    std::memcpy(b, &x, sizeof(T));
    std::reverse(b, b + sizeof(T));
    os.write(b, sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&x), sizeof(T));
  }
}

template <class T>
T get(std::istream& is) {
  char b[sizeof(T)];
  if (!is.read(b, sizeof(T))) throw Error("truncated field file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T x;
  std::memcpy(&x, b, sizeof(T));
  return x;
}

}  // namespace

void write_binary(const SpectralKineticField& f, std::ostream& os) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, 1);
  put<std::int32_t>(os, f.grid.N);
  put<std::int32_t>(os, f.grid.M);
  put<std::int32_t>(os, f.grid.n_x);
  put<std::int32_t>(os, f.grid.n_v);
  put<double>(os, f.grid.L);
  put<double>(os, f.grid.P);
  put<double>(os, f.grid.A);
  put<std::int32_t>(os, static_cast<std::int32_t>(f.role));
  put<std::uint64_t>(os, f.data.size());
  for (const auto& c : f.data) {
    put<double>(os, c.real());
    put<double>(os, c.imag());
  }
  if (!os) throw Error("failed to write field");
}

SpectralKineticField read_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw Error("not a field file");
  if (get<std::uint32_t>(is) != 1) throw Error("unsupported field file version");
  TorusGrid g;
  g.N = get<std::int32_t>(is);
  g.M = get<std::int32_t>(is);
  g.n_x = get<std::int32_t>(is);
  g.n_v = get<std::int32_t>(is);
  g.L = get<double>(is);
  g.P = get<double>(is);
  g.A = get<double>(is);
  const auto role = static_cast<FieldRole>(get<std::int32_t>(is));
  SpectralKineticField f(g, role);
  if (get<std::uint64_t>(is) != f.data.size()) throw Error("field size does not match its grid");
  for (auto& c : f.data) {
    const double re = get<double>(is);
    c = Complex(re, get<double>(is));
  }
  return f;
}

// ---------------------------------------------------------------- series

SeriesCheck series_check(int N, int K) {
  if (N < 1 || K < 1) throw PreconditionError("series check needs N >= 1 and K >= 1");
  SeriesCheck s;
  s.N = N;
  s.K = K;
  s.r = N / 2.0 + 1.0;
  auto sum_to = [&](int k) {
    const int side = 2 * k + 1;
    const std::size_t count = ipow(side, N);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t r = i;
      double n2 = 0.0;
      for (int j = 0; j < N; ++j) {
        const double b = static_cast<double>(r % side) - k;
        n2 += b * b;
        r /= side;
      }
      const double t = 1.0 + std::pow(n2, s.r / 2.0);
      total += 1.0 / (t * t);
    }
    return total;
  };
  s.sum_K = sum_to(K);
  s.sum_2K = sum_to(2 * K);
  s.relative_tail = (s.sum_2K - s.sum_K) / s.sum_2K;
  return s;
}

}  // namespace avglemma
