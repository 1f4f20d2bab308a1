#pragma once

#include "model.hpp"
#include "numerics.hpp"

#include <array>
#include <cmath>

namespace brw {

// m_ij(t, x, 0) for i, j in {1, 2} over the sites of a box.
struct MomentField {
  double t = 0.0;
  LatticeBox box{1, 0};
  int order = 1;
  std::array<std::vector<double>, 4> values;  // slot (i-1)*2 + (j-1)
  double boundary_mass = 0.0;
  double tolerance = 1e-6;
  bool degraded = false;
  bool converged = true;  // time quadrature reached its tolerance

  static int slot(int i, int j) { return (i - 1) * 2 + (j - 1); }

  double at(int i, int j, const Site& x) const {
    const auto idx = box.index(x);
    if (!idx) throw std::out_of_range("site " + to_string(x) + " outside the moment box");
    return values[slot(i, j)][*idx];
  }

  Eigen::Matrix2d matrix_at(const Site& x) const {
    Eigen::Matrix2d m;
    for (int i = 1; i <= 2; ++i)
      for (int j = 1; j <= 2; ++j) m(i - 1, j - 1) = at(i, j, x);
    return m;
  }

  double sum(int i, int j) const {
    double s = 0.0;
    for (double v : values[slot(i, j)]) s += v;
    return s;
  }
};

struct MomentPair {
  MomentField first;
  MomentField second;
};

// exp(t A) for A = [[a, b], [c, d]] with b, c >= 0, in row-major order.
// Degenerate splits (sqrt(disc) or |a - d| below eps) use the repeated-root forms.
inline std::array<double, 4> fundamental_matrix(double a, double d, double b, double c, double t,
                                                double eps = 1e-9) {
  std::array<double, 4> u{0.0, 0.0, 0.0, 0.0};
  if (t == 0.0) return {1.0, 0.0, 0.0, 1.0};
  const double ea = std::exp(a * t), ed = std::exp(d * t);
  if (b == 0.0 || c == 0.0) {
    u[0] = ea;
    u[3] = ed;
    double phi;  // (e^{at} - e^{dt}) / (a - d)
    if (std::abs(a - d) < eps) phi = t * ea;
    else phi = ed * std::expm1((a - d) * t) / (a - d);
    u[1] = b * phi;
    u[2] = c * phi;
    return u;
  }
  const double delta = a - d;
  const double s = std::sqrt(delta * delta + 4.0 * b * c);
  if (s < eps) {
    const double lam = 0.5 * (a + d);
    const double e = std::exp(lam * t);
    return {e * (1.0 + (a - lam) * t), b * t * e, c * t * e, e * (1.0 + (d - lam) * t)};
  }
  // p = a - lambda2, q = lambda1 - a, evaluated without cancellation
  double p, q;
  if (delta >= 0.0) {
    p = 0.5 * (delta + s);
    q = 2.0 * b * c / (delta + s);
  } else {
    q = 0.5 * (-delta + s);
    p = 2.0 * b * c / (-delta + s);
  }
  const double lam2 = a - p;
  const double e2 = std::exp(lam2 * t);
  const double dd = e2 * std::expm1(s * t) / s;  // (e^{lambda1 t} - e^{lambda2 t}) / s
  u[0] = p * dd + e2;
  u[1] = b * dd;
  u[2] = c * dd;
  u[3] = q * dd + e2;
  return u;
}

// Frequency-space coefficients a(theta), d(theta) tabulated on a grid.
class MomentSymbols {
 public:
  MomentSymbols(const TwoTypeModel& model, const ThetaGrid& grid)
      : grid_(grid), dc_(model.constants()) {
    detail::require(grid.dim() == model.dim(), "grid dimension does not match the model");
    a_ = symbol_table(model.kernel(1), grid);
    d_ = symbol_table(model.kernel(2), grid);
    for (auto& v : a_) v = model.kappa(1) * v + dc_.a_shift();
    for (auto& v : d_) v = model.kappa(2) * v + dc_.r2;
  }

  const ThetaGrid& grid() const { return grid_; }
  std::size_t size() const { return a_.size(); }
  double a(std::size_t n) const { return a_[n]; }
  double d(std::size_t n) const { return d_[n]; }
  const DerivedConstants& constants() const { return dc_; }

  std::array<double, 4> fundamental(std::size_t n, double t) const {
    return fundamental_matrix(a_[n], d_[n], dc_.b_eff(), dc_.c, t);
  }

  // four spectra (slots 11, 12, 21, 22) of exp(t A(theta))
  std::array<std::vector<double>, 4> fundamental_spectra(double t) const {
    std::array<std::vector<double>, 4> out;
    for (auto& v : out) v.resize(size());
    for (std::size_t n = 0; n < size(); ++n) {
      const auto u = fundamental(n, t);
      for (int s = 0; s < 4; ++s) out[s][n] = u[s];
    }
    return out;
  }

 private:
  ThetaGrid grid_;
  DerivedConstants dc_;
  std::vector<double> a_, d_;
};

inline Eigen::Matrix2d first_moment_fourier(const TwoTypeModel& model, double t, const Site& x,
                                            const ThetaGrid& grid) {
  if (!(t >= 0.0)) throw std::invalid_argument("first_moment_fourier: negative time");
  Eigen::Matrix2d m;
  if (t == 0.0) {
    const double delta = sup_norm(x) == 0 ? 1.0 : 0.0;
    m << delta, 0.0, 0.0, delta;
    return m;
  }
  const MomentSymbols sym(model, grid);
  const auto spec = sym.fundamental_spectra(t);
  for (int s = 0; s < 4; ++s) m(s / 2, s % 2) = inverse_at(grid, spec[s], x);
  return m;
}

inline MomentField first_moment_fourier_field(const TwoTypeModel& model, double t, int box_radius,
                                              const ThetaGrid& grid) {
  if (!(t >= 0.0)) throw std::invalid_argument("first_moment_fourier: negative time");
  MomentField f;
  f.t = t;
  f.box = LatticeBox(model.dim(), box_radius);
  f.order = 1;
  const MomentSymbols sym(model, grid);
  const BoxTransform tr(grid, f.box);
  const auto spec = sym.fundamental_spectra(t);
  for (int s = 0; s < 4; ++s) {
    f.values[s].assign(f.box.size(), 0.0);
    if (t == 0.0) {
      if (s == 0 || s == 3) f.values[s][f.box.center()] = 1.0;
    } else {
      tr.inverse(spec[s], f.values[s]);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Box-truncated generator: jumps leaving the box are killed.

class TruncatedGenerator {
 public:
  TruncatedGenerator(const JumpKernel& kernel, double kappa, const LatticeBox& box)
      : kappa_(kappa), n_(box.size()), e_(kernel.support_size()) {
    detail::require(kernel.dim() == box.dim(), "kernel and box dimensions differ");
    nb_.assign(n_ * e_, -1);
    w_.resize(e_);
    outflow_.assign(n_, 0.0);
    for (std::size_t k = 0; k < e_; ++k) w_[k] = kernel.entries()[k].weight;
    for (std::size_t x = 0; x < n_; ++x) {
      const Site s = box.site(x);
      for (std::size_t k = 0; k < e_; ++k) {
        const auto idx = box.index(s + kernel.entries()[k].v);
        if (idx) nb_[x * e_ + k] = static_cast<std::int64_t>(*idx);
        else outflow_[x] += kappa_ * w_[k];
      }
    }
  }

  std::size_t size() const { return n_; }
  double kappa() const { return kappa_; }

  // rate at which mass at site x is lost through the boundary
  double outflow(std::size_t x) const { return outflow_[x]; }

  std::size_t support_size() const { return e_; }
  double weight(std::size_t k) const { return w_[k]; }
  // index of x + v_k, or -1 outside the box
  std::int64_t neighbour(std::size_t x, std::size_t k) const { return nb_[x * e_ + k]; }

  // out[x * stride] += kappa (sum_v a(v) f[(x+v) * stride] - f[x * stride])
  void apply_add(const double* f, std::size_t stride, double* out) const {
    for (std::size_t x = 0; x < n_; ++x) {
      double s = 0.0;
      const std::int64_t* nb = &nb_[x * e_];
      for (std::size_t k = 0; k < e_; ++k)
        if (nb[k] >= 0) s += w_[k] * f[static_cast<std::size_t>(nb[k]) * stride];
      out[x * stride] += kappa_ * (s - f[x * stride]);
    }
  }

 private:
  double kappa_;
  std::size_t n_, e_;
  std::vector<std::int64_t> nb_;
  std::vector<double> w_;
  std::vector<double> outflow_;
};

struct OracleOptions {
  double abs_tol = 1e-9;
  double rel_tol = 1e-7;
  double boundary_tolerance = 1e-6;
};

namespace detail {

inline double max_rate(const TwoTypeModel& model) {
  const auto& dc = model.constants();
  return 2.0 * std::max(model.kappa(1), model.kappa(2)) + std::abs(dc.a_shift()) + std::abs(dc.r2) +
         dc.b_eff() + dc.c + 1e-12;
}

// Backward moment system on a box: blocks [0,4) first moments, [4,8) second
// moments (when order == 2), last entry the accumulated boundary loss.
inline MomentPair integrate_moment_system(const TwoTypeModel& model, double t, int box_radius,
                                          int order, const OracleOptions& opt) {
  if (!(t >= 0.0)) throw std::invalid_argument("moment oracle: negative time");
  const LatticeBox box(model.dim(), box_radius);
  const std::size_t n = box.size();
  const TruncatedGenerator gen[2] = {TruncatedGenerator(model.kernel(1), model.kappa(1), box),
                                     TruncatedGenerator(model.kernel(2), model.kappa(2), box)};
  const auto& dc = model.constants();
  const double a1 = dc.a_shift(), b = dc.b_eff(), c = dc.c, r2 = dc.r2;
  const int blocks = order == 2 ? 8 : 4;
  State x(blocks * n + 1, 0.0);
  for (int base = 0; base < blocks; base += 4) {
    x[(base + 0) * n + box.center()] = 1.0;  // slot 11
    x[(base + 3) * n + box.center()] = 1.0;  // slot 22
  }

  auto rhs = [&](const State& s, State& ds, double) {
    std::fill(ds.begin(), ds.end(), 0.0);
    double loss = 0.0;
    for (int base = 0; base < blocks; base += 4) {
      for (int j = 0; j < 2; ++j) {
        const double* m1 = &s[(base + j) * n];      // m_{1j}
        const double* m2 = &s[(base + 2 + j) * n];  // m_{2j}
        double* d1 = &ds[(base + j) * n];
        double* d2 = &ds[(base + 2 + j) * n];
        gen[0].apply_add(m1, 1, d1);
        gen[1].apply_add(m2, 1, d2);
        for (std::size_t k = 0; k < n; ++k) {
          d1[k] += a1 * m1[k] + b * m2[k];
          d2[k] += c * m1[k] + r2 * m2[k];
          loss += gen[0].outflow(k) * std::abs(m1[k]) + gen[1].outflow(k) * std::abs(m2[k]);
        }
        if (base == 4) {
          const double* f1 = &s[j * n];
          const double* f2 = &s[(2 + j) * n];
          for (int i = 0; i < 2; ++i) {
            const auto& B = dc.factorial[i];
            double* di = i == 0 ? d1 : d2;
            if (B(0, 0) == 0.0 && B(0, 1) == 0.0 && B(1, 1) == 0.0) continue;
            for (std::size_t k = 0; k < n; ++k)
              di[k] += B(0, 0) * f1[k] * f1[k] + 2.0 * B(0, 1) * f1[k] * f2[k] +
                       B(1, 1) * f2[k] * f2[k];
          }
        }
      }
    }
    ds.back() = loss;
  };

  integrate_adaptive(rhs, x, t, OdeOptions{opt.abs_tol, opt.rel_tol, 2.0 / max_rate(model)});

  MomentPair out;
  for (int ord = 1; ord <= order; ++ord) {
    MomentField& f = ord == 1 ? out.first : out.second;
    f.t = t;
    f.box = box;
    f.order = ord;
    f.tolerance = opt.boundary_tolerance;
    f.boundary_mass = x.back();
    f.degraded = f.boundary_mass > opt.boundary_tolerance;
    const int base = ord == 1 ? 0 : 4;
    for (int s = 0; s < 4; ++s)
      f.values[s].assign(x.begin() + static_cast<std::ptrdiff_t>((base + s) * n),
                         x.begin() + static_cast<std::ptrdiff_t>((base + s + 1) * n));
  }
  return out;
}

}  // namespace detail

inline MomentField first_moment_ode_oracle(const TwoTypeModel& model, double t, int box_radius,
                                           const OracleOptions& opt = {}) {
  return detail::integrate_moment_system(model, t, box_radius, 1, opt).first;
}

// Second moments co-integrated with the first moments that feed their sources.
inline MomentPair second_moment_ode_oracle(const TwoTypeModel& model, double t, int box_radius,
                                           const OracleOptions& opt = {}) {
  return detail::integrate_moment_system(model, t, box_radius, 2, opt);
}

// ---------------------------------------------------------------------------

struct DuhamelOptions {
  int box_radius = 30;
  std::size_t intervals = 200;
  double tol = 1e-8;
  int max_doublings = 6;
  double boundary_tolerance = 1e-6;
};

// m^(2)(t) = U(t) + int_0^t U(t - s) F(s) ds in frequency space, where the
// source F is formed from products of first moments on the box and
// transformed back.
inline MomentField second_moment_fourier_field(const TwoTypeModel& model, double t,
                                               const ThetaGrid& grid, const DuhamelOptions& opt = {}) {
  if (!(t >= 0.0)) throw std::invalid_argument("second_moment_fourier: negative time");
  const MomentSymbols sym(model, grid);
  const LatticeBox box(model.dim(), opt.box_radius);
  const BoxTransform tr(grid, box);
  const std::size_t g = grid.size(), n = box.size();
  const auto& dc = model.constants();

  MomentField f;
  f.t = t;
  f.box = box;
  f.order = 2;
  f.tolerance = opt.boundary_tolerance;

  const bool has_source = dc.factorial[0].cwiseAbs().sum() > 0.0 || dc.factorial[1].cwiseAbs().sum() > 0.0;
  std::vector<double> spectrum(4 * g, 0.0);
  {
    const auto u = sym.fundamental_spectra(t);
    for (int s = 0; s < 4; ++s) std::copy(u[s].begin(), u[s].end(), spectrum.begin() + s * g);
  }

  if (has_source && t > 0.0) {
    double shell = 0.0;
    std::array<std::vector<double>, 4> m1;
    for (auto& v : m1) v.resize(n);
    std::array<std::vector<double>, 4> src, src_hat;
    for (auto& v : src) v.resize(n);
    for (auto& v : src_hat) v.resize(g);
    std::vector<char> boundary(n);
    for (std::size_t k = 0; k < n; ++k) boundary[k] = box.on_boundary(k);

    auto integrand = [&](double s) {
      std::vector<double> out(4 * g, 0.0);
      const auto us = sym.fundamental_spectra(s);
      for (int q = 0; q < 4; ++q) tr.inverse(us[q], m1[q]);
      if (s == 0.0)
        for (int q = 0; q < 4; ++q) {
          std::fill(m1[q].begin(), m1[q].end(), 0.0);
          if (q == 0 || q == 3) m1[q][box.center()] = 1.0;
        }
      double edge = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (boundary[k])
          for (int q = 0; q < 4; ++q) edge += std::abs(m1[q][k]);
      shell = std::max(shell, edge);
      // src_{ij} = B^(i)_11 m_1j^2 + 2 B^(i)_12 m_1j m_2j + B^(i)_22 m_2j^2
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const auto& B = dc.factorial[i];
          const auto& p = m1[MomentField::slot(1, j + 1)];
          const auto& r = m1[MomentField::slot(2, j + 1)];
          auto& dst = src[MomentField::slot(i + 1, j + 1)];
          for (std::size_t k = 0; k < n; ++k)
            dst[k] = B(0, 0) * p[k] * p[k] + 2.0 * B(0, 1) * p[k] * r[k] + B(1, 1) * r[k] * r[k];
        }
      for (int q = 0; q < 4; ++q) tr.forward(src[q], src_hat[q]);
      for (std::size_t node = 0; node < g; ++node) {
        const auto u = sym.fundamental(node, t - s);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            out[(i * 2 + j) * g + node] = u[i * 2 + 0] * src_hat[0 * 2 + j][node] +
                                          u[i * 2 + 1] * src_hat[1 * 2 + j][node];
      }
      return out;
    };
    // bound on the change of any x-space value: M^-d sum |delta spectrum|
    auto change = [g](const std::vector<double>& a, const std::vector<double>& b) {
      double worst = 0.0, scale = 1.0;
      for (int q = 0; q < 4; ++q) {
        double dsum = 0.0, vsum = 0.0;
        for (std::size_t k = 0; k < g; ++k) {
          dsum += std::abs(a[q * g + k] - b[q * g + k]);
          vsum += std::abs(b[q * g + k]);
        }
        worst = std::max(worst, dsum / static_cast<double>(g));
        scale = std::max(scale, vsum / static_cast<double>(g));
      }
      return worst / scale;
    };
    const auto res = simpson_doubling(integrand, 0.0, t, opt.intervals, opt.tol, opt.max_doublings, change);
    for (std::size_t k = 0; k < spectrum.size(); ++k) spectrum[k] += res.value[k];
    f.converged = res.converged;
    f.boundary_mass = shell;
  }
  for (int q = 0; q < 4; ++q) {
    f.values[q].assign(n, 0.0);
    if (t == 0.0) {
      if (q == 0 || q == 3) f.values[q][box.center()] = 1.0;
    } else {
      tr.inverse(std::span<const double>(spectrum.data() + q * g, g), f.values[q]);
    }
  }
  f.degraded = f.boundary_mass > f.tolerance;
  return f;
}

inline Eigen::Matrix2d second_moment_fourier(const TwoTypeModel& model, double t, const Site& x,
                                             const ThetaGrid& grid, DuhamelOptions opt = {}) {
  opt.box_radius = std::max<int>(opt.box_radius, static_cast<int>(sup_norm(x)));
  return second_moment_fourier_field(model, t, grid, opt).matrix_at(x);
}

// ---------------------------------------------------------------------------
// Large-time asymptotics for equal walks of both types.

inline Eigen::Matrix2d first_moment_asymptote(const TwoTypeModel& model, double t, const Site& /*x*/) {
  if (!model.equal_walks())
    throw UnsupportedConfiguration("first_moment_asymptote needs equal kernels and kappas for both types");
  if (!(t > 0.0)) throw std::invalid_argument("first_moment_asymptote: t must be > 0");
  const auto& dc = model.constants();
  const double r1 = dc.a_shift(), r2 = dc.r2, b = dc.b_eff(), c = dc.c;
  const double d = model.dim();
  const double g = gamma_constant(model.kernel(1), model.kappa(1));
  const double decay = g / std::pow(t, d / 2.0);
  const double C1 = 0.5 * (r1 + r2);
  const double C2 = 0.5 * std::sqrt((r1 - r2) * (r1 - r2) + 4.0 * b * c);
  constexpr double zero = 1e-12;
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  if (b == 0.0 || c == 0.0) {
    m(0, 0) = std::exp(r1 * t) * decay;
    m(1, 1) = std::exp(r2 * t) * decay;
    const double cross = b > 0.0 ? b : c;
    if (cross > 0.0) {
      const double val = C2 < zero ? cross * std::exp(r1 * t) * g / std::pow(t, d / 2.0 - 1.0)
                                   : cross / (r1 - r2) * (std::exp(r1 * t) - std::exp(r2 * t)) * decay;
      (b > 0.0 ? m(0, 1) : m(1, 0)) = val;
    }
    return m;
  }
  const double ep = std::exp((C1 + C2) * t), em = std::exp((C1 - C2) * t);
  m(0, 0) = ((r1 - C1 + C2) * ep + (C1 + C2 - r1) * em) / (2.0 * C2) * decay;
  m(0, 1) = b * (ep - em) / (2.0 * C2) * decay;
  m(1, 0) = c * (ep - em) / (2.0 * C2) * decay;
  m(1, 1) = ((C1 + C2 - r1) * ep - (C1 - C2 - r1) * em) / (2.0 * C2) * decay;
  return m;
}

}  // namespace brw
