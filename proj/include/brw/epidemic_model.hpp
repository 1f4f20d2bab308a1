#pragma once

#include "moment_engine.hpp"

#include <limits>
#include <map>

namespace brw {

// Infected (type 1) / immune (type 2) law: an infected particle infects
// n - 1 others at rate b_n, dies at mu1, turns immune at r; immune particles
// only walk and die at mu2.
struct EpidemicLaw {
  double mu1 = 0.0;
  double mu2 = 0.0;
  std::map<int, double> infection;  // n -> b_n, n >= 2
  double conversion_rate = 0.0;

  void validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    detail::require(ok(mu1), "mu1 must be a finite rate >= 0");
    detail::require(ok(mu2), "mu2 must be a finite rate >= 0");
    detail::require(ok(conversion_rate), "conversion_rate must be a finite rate >= 0");
    for (const auto& [n, b] : infection) {
      detail::require(n >= 2, "infection entry n = " + std::to_string(n) + ": n must be >= 2");
      detail::require(ok(b), "infection rate b_" + std::to_string(n) + " must be finite and >= 0");
    }
  }

  double beta() const {
    double s = 0.0;
    for (const auto& [n, b] : infection) s += (n - 1.0) * b;
    return s;
  }
  double beta2nd() const {
    double s = 0.0;
    for (const auto& [n, b] : infection) s += n * (n - 1.0) * b;
    return s;
  }
  // sum (n-1)^2 b_n
  double beta_sq() const {
    double s = 0.0;
    for (const auto& [n, b] : infection) s += (n - 1.0) * (n - 1.0) * b;
    return s;
  }
  double growth() const { return beta() - mu1 - conversion_rate; }

  BranchingLaw to_branching_law() const {
    validate();
    std::vector<Birth> b1;
    for (const auto& [n, b] : infection) b1.push_back({n, 0, b});
    return BranchingLaw(mu1, mu2, std::move(b1), {}, conversion_rate);
  }

  bool operator==(const EpidemicLaw&) const = default;
};

struct EpidemicModel {
  EpidemicLaw law;
  JumpKernel kernel1, kernel2;
  double kappa1 = 1.0, kappa2 = 1.0;

  int dim() const { return kernel1.dim(); }
  TwoTypeModel to_two_type() const {
    return TwoTypeModel(kernel1, kappa1, kernel2, kappa2, law.to_branching_law());
  }
  bool operator==(const EpidemicModel&) const = default;
};

// Frequency-space R1, R2 at every grid node.
inline std::pair<std::vector<double>, std::vector<double>> epidemic_first_moment_spectra(
    const EpidemicModel& m, double t, const ThetaGrid& grid, double eps = 1e-9) {
  const auto s1 = symbol_table(m.kernel1, grid);
  const auto s2 = symbol_table(m.kernel2, grid);
  const double A = m.law.growth(), r = m.law.conversion_rate, mu2 = m.law.mu2;
  std::vector<double> r1(grid.size()), r2(grid.size());
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const double e1 = m.kappa1 * s1[n] + A;
    const double e2 = m.kappa2 * s2[n] - mu2;
    r1[n] = std::exp(e1 * t);
    const double d = e1 - e2;
    r2[n] = std::abs(d) < eps ? r * t * std::exp(e2 * t) : r * std::expm1(d * t) / d * std::exp(e2 * t);
  }
  return {std::move(r1), std::move(r2)};
}

inline std::pair<double, double> epidemic_first_moments(const EpidemicModel& m, double t, const Site& x,
                                                        const ThetaGrid& grid) {
  if (!(t >= 0.0)) throw std::invalid_argument("epidemic_first_moments: negative time");
  if (t == 0.0) return {sup_norm(x) == 0 ? 1.0 : 0.0, 0.0};
  const auto [r1, r2] = epidemic_first_moment_spectra(m, t, grid);
  return {inverse_at(grid, r1, x), inverse_at(grid, r2, x)};
}

// ---------------------------------------------------------------------------
// Second moment of the infected count, M2(t, x, y) = E N1(t, x, y)^2

struct M2Value {
  double value = 0.0;
  double first = 0.0;  // M1(t, x, y)
  double boundary_mass = 0.0;
  bool degraded = false;
  bool converged = true;
};

struct M2Options {
  int box_radius = 40;
  std::size_t intervals = 200;
  double tol = 1e-8;
  int max_doublings = 8;
  double boundary_tolerance = 1e-6;
};

// M2 = M1 + beta2 int_0^t sum_w M1(t-s, x, w) M1(s, w, y)^2 ds
inline M2Value epidemic_m2(const EpidemicModel& m, double t, const Site& x, const Site& y, const ThetaGrid& grid,
                           const M2Options& opt = {}) {
  if (!(t >= 0.0)) throw std::invalid_argument("epidemic_m2: negative time");
  const Site u = y - x;
  M2Value out;
  if (t == 0.0) {
    out.value = out.first = sup_norm(u) == 0 ? 1.0 : 0.0;
    return out;
  }
  const int radius = std::max<int>(opt.box_radius, static_cast<int>(sup_norm(u)));
  const LatticeBox box(m.dim(), radius);
  const BoxTransform tr(grid, box);
  const auto sym = symbol_table(m.kernel1, grid);
  const double A = m.law.growth(), b2 = m.law.beta2nd();
  const std::size_t n = box.size();

  // p(tau, 0, .) on the box
  auto walk_field = [&](double tau) {
    std::vector<double> f(n, 0.0);
    if (tau == 0.0) {
      f[box.center()] = 1.0;
      return f;
    }
    std::vector<double> spec(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) spec[k] = std::exp(m.kappa1 * sym[k] * tau);
    tr.inverse(spec, f);
    return f;
  };
  // w - u for every box site w, as a box index or -1
  std::vector<std::int64_t> shifted(n, -1);
  for (std::size_t w = 0; w < n; ++w) {
    const auto idx = box.index(box.site(w) - u);
    if (idx) shifted[w] = static_cast<std::int64_t>(*idx);
  }
  const auto pt = walk_field(t);
  out.first = std::exp(A * t) * pt[*box.index(u)];
  if (b2 == 0.0) {
    out.value = out.first;
    return out;
  }
  double lost = 0.0;
  auto integrand = [&](double s) {
    const auto a = walk_field(t - s);
    const auto b = walk_field(s);
    double sum = 0.0, mass = 0.0;
    for (std::size_t w = 0; w < n; ++w) {
      mass += b[w];
      if (shifted[w] >= 0) {
        const double q = b[static_cast<std::size_t>(shifted[w])];
        sum += a[w] * q * q;
      }
    }
    lost = std::max(lost, std::abs(1.0 - mass));
    return std::vector<double>{std::exp(A * (t - s) + 2.0 * A * s) * sum};
  };
  auto change = [](const std::vector<double>& p, const std::vector<double>& q) {
    return std::abs(p[0] - q[0]) / std::max(std::abs(q[0]), 1e-300);
  };
  const auto res = simpson_doubling(integrand, 0.0, t, opt.intervals, opt.tol, opt.max_doublings, change);
  out.value = out.first + b2 * res.value[0];
  out.converged = res.converged;
  out.boundary_mass = lost;
  out.degraded = lost > opt.boundary_tolerance;
  return out;
}

struct EpidemicField {
  double t = 0.0;
  LatticeBox box{1, 0};
  std::vector<double> m1, m2;  // M1(t, x, 0), M2(t, x, 0)
  double boundary_mass = 0.0;
  bool degraded = false;
};

// Direct integration of the backward equations for M1 and M2 on a box.
inline EpidemicField epidemic_m2_ode(const EpidemicModel& m, double t, int box_radius,
                                     const OracleOptions& opt = {}) {
  if (!(t >= 0.0)) throw std::invalid_argument("epidemic_m2_ode: negative time");
  const LatticeBox box(m.dim(), box_radius);
  const TruncatedGenerator gen(m.kernel1, m.kappa1, box);
  const std::size_t n = box.size();
  const double A = m.law.growth(), b2 = m.law.beta2nd();
  State x(2 * n + 1, 0.0);
  x[box.center()] = 1.0;
  x[n + box.center()] = 1.0;
  auto rhs = [&](const State& s, State& ds, double) {
    std::fill(ds.begin(), ds.end(), 0.0);
    gen.apply_add(&s[0], 1, &ds[0]);
    gen.apply_add(&s[n], 1, &ds[n]);
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      ds[k] += A * s[k];
      ds[n + k] += A * s[n + k] + b2 * s[k] * s[k];
      loss += gen.outflow(k) * (std::abs(s[k]) + std::abs(s[n + k]));
    }
    ds.back() = loss;
  };
  const double rate = 2.0 * m.kappa1 + std::abs(A) + b2 + 1e-12;
  integrate_adaptive(rhs, x, t, OdeOptions{opt.abs_tol, opt.rel_tol, 2.0 / rate});
  EpidemicField f;
  f.t = t;
  f.box = box;
  f.m1.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  f.m2.assign(x.begin() + static_cast<std::ptrdiff_t>(n), x.begin() + static_cast<std::ptrdiff_t>(2 * n));
  f.boundary_mass = x.back();
  f.degraded = f.boundary_mass > opt.boundary_tolerance;
  return f;
}

struct IntermittencyPoint {
  double t = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  bool underflow = false;  // M1 too small for a meaningful ratio
  bool diffusive = false;  // |x - y| <= C sqrt(t)
  bool degraded = false;
};

inline std::vector<IntermittencyPoint> intermittency_ratio(const EpidemicModel& m, const std::vector<double>& t_list,
                                                           const Site& x, const Site& y, const ThetaGrid& grid,
                                                           double c_diffusive = 2.0, const M2Options& opt = {}) {
  constexpr double floor = 1e-300;
  std::vector<IntermittencyPoint> out;
  const Site u = y - x;
  double dist = 0.0;
  for (auto c : u) dist += static_cast<double>(c) * c;
  dist = std::sqrt(dist);
  for (double t : t_list) {
    IntermittencyPoint p;
    p.t = t;
    const auto v = epidemic_m2(m, t, x, y, grid, opt);
    p.m1 = v.first;
    p.m2 = v.value;
    p.degraded = v.degraded;
    p.diffusive = dist <= c_diffusive * std::sqrt(t);
    if (!(std::abs(p.m1) > floor)) p.underflow = true;
    else p.ratio = p.m2 / (p.m1 * p.m1);
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pair correlations E[N_i(t,x) N_j(t,y)] from one infected particle at the origin

struct CorrelationField {
  double t = 0.0;
  LatticeBox box{1, 0};
  std::vector<double> r1, r2;        // first moments on the box
  std::vector<double> r11, r12, r22;  // index x * n + y
  double boundary_mass = 0.0;
  bool degraded = false;

  std::size_t pair(const Site& x, const Site& y) const {
    const auto ix = box.index(x), iy = box.index(y);
    if (!ix || !iy) throw std::out_of_range("correlation site outside the box");
    return *ix * box.size() + *iy;
  }
  double R1(const Site& x) const { return r1[*box.index(x)]; }
  double R2(const Site& x) const { return r2[*box.index(x)]; }
  double R11(const Site& x, const Site& y) const { return r11[pair(x, y)]; }
  double R12(const Site& x, const Site& y) const { return r12[pair(x, y)]; }
  double R22(const Site& x, const Site& y) const { return r22[pair(x, y)]; }
};

namespace detail {

// out[x, y] += (L_x f)(x, y) + (L_y f)(x, y) on the pair field
inline void pair_generator_add(const TruncatedGenerator& gx, const TruncatedGenerator& gy, const double* f,
                               double* out) {
  const std::size_t n = gx.size();
  for (std::size_t y = 0; y < n; ++y) gx.apply_add(f + y, n, out + y);
  for (std::size_t x = 0; x < n; ++x) gy.apply_add(f + x * n, 1, out + x * n);
}

inline void symmetrise(double* f, std::size_t n) {
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 1; y < n; ++y) {
      const double v = 0.5 * (f[x * n + y] + f[y * n + x]);
      f[x * n + y] = f[y * n + x] = v;
    }
}

}  // namespace detail

inline CorrelationField correlation_ode(const EpidemicModel& m, double t, int box_radius,
                                        const OracleOptions& opt = {}) {
  if (!(t >= 0.0)) throw std::invalid_argument("correlation_ode: negative time");
  const LatticeBox box(m.dim(), box_radius);
  const std::size_t n = box.size(), nn = n * n;
  const TruncatedGenerator g1(m.kernel1, m.kappa1, box), g2(m.kernel2, m.kappa2, box);
  const double A = m.law.growth(), r = m.law.conversion_rate, mu1 = m.law.mu1, mu2 = m.law.mu2;
  const double q = m.law.beta_sq();
  const double k1 = m.kappa1, k2 = m.kappa2;

  // layout: R1 [0, n), R2 [n, 2n), R11, R12, R22 (nn each), boundary loss
  const std::size_t o11 = 2 * n, o12 = o11 + nn, o22 = o12 + nn, oloss = o22 + nn;
  State x(oloss + 1, 0.0);
  x[box.center()] = 1.0;
  x[o11 + box.center() * n + box.center()] = 1.0;

  std::vector<double> lr1(n), lr2(n);
  auto rhs = [&](const State& s, State& ds, double) {
    std::fill(ds.begin(), ds.end(), 0.0);
    const double* R1 = &s[0];
    const double* R2 = &s[n];
    const double* R11 = &s[o11];
    const double* R12 = &s[o12];
    const double* R22 = &s[o22];
    std::fill(lr1.begin(), lr1.end(), 0.0);
    std::fill(lr2.begin(), lr2.end(), 0.0);
    g1.apply_add(R1, 1, lr1.data());
    g2.apply_add(R2, 1, lr2.data());
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      ds[k] = lr1[k] + A * R1[k];
      ds[n + k] = lr2[k] - mu2 * R2[k] + r * R1[k];
      loss += g1.outflow(k) * std::abs(R1[k]) + g2.outflow(k) * std::abs(R2[k]);
    }
    ds[oloss] = loss;

    double* d11 = &ds[o11];
    double* d12 = &ds[o12];
    double* d22 = &ds[o22];
    detail::pair_generator_add(g1, g1, R11, d11);
    detail::pair_generator_add(g1, g2, R12, d12);
    detail::pair_generator_add(g2, g2, R22, d22);
    for (std::size_t xi = 0; xi < n; ++xi)
      for (std::size_t yi = 0; yi < n; ++yi) {
        const std::size_t p = xi * n + yi;
        d11[p] += 2.0 * A * R11[p];
        d12[p] += (A - mu2) * R12[p] + r * R11[p];
        d22[p] += -2.0 * mu2 * R22[p] + r * (R12[p] + R12[yi * n + xi]);
      }
    for (std::size_t xi = 0; xi < n; ++xi) {
      const std::size_t dgl = xi * n + xi;
      d11[dgl] += (q + mu1 + r + 2.0 * k1) * R1[xi] + lr1[xi];
      d12[dgl] -= r * R1[xi];
      d22[dgl] += r * R1[xi] + (mu2 + 2.0 * k2) * R2[xi] + lr2[xi];
      // a particle jumping between x and y lowers N(x) N(y)
      for (std::size_t e = 0; e < g1.support_size(); ++e) {
        const auto yi = g1.neighbour(xi, e);
        if (yi >= 0) d11[xi * n + static_cast<std::size_t>(yi)] -= k1 * g1.weight(e) * (R1[xi] + R1[yi]);
      }
      for (std::size_t e = 0; e < g2.support_size(); ++e) {
        const auto yi = g2.neighbour(xi, e);
        if (yi >= 0) d22[xi * n + static_cast<std::size_t>(yi)] -= k2 * g2.weight(e) * (R2[xi] + R2[yi]);
      }
    }
    detail::symmetrise(d11, n);
    detail::symmetrise(d22, n);
  };
  const double rate = 4.0 * std::max(k1, k2) + 2.0 * std::abs(A) + 2.0 * mu2 + 2.0 * r + 1e-12;
  integrate_adaptive(rhs, x, t, OdeOptions{opt.abs_tol, opt.rel_tol, 2.0 / rate});

  CorrelationField f;
  f.t = t;
  f.box = box;
  f.r1.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  f.r2.assign(x.begin() + static_cast<std::ptrdiff_t>(n), x.begin() + static_cast<std::ptrdiff_t>(2 * n));
  f.r11.assign(x.begin() + static_cast<std::ptrdiff_t>(o11), x.begin() + static_cast<std::ptrdiff_t>(o12));
  f.r12.assign(x.begin() + static_cast<std::ptrdiff_t>(o12), x.begin() + static_cast<std::ptrdiff_t>(o22));
  f.r22.assign(x.begin() + static_cast<std::ptrdiff_t>(o22), x.begin() + static_cast<std::ptrdiff_t>(oloss));
  f.boundary_mass = x[oloss];
  f.degraded = f.boundary_mass > opt.boundary_tolerance;
  return f;
}

// Products G = R1(x) R2(y) and K = R1(x) R1(y), integrated through their own
// pair equations rather than multiplied out.
struct ProductFields {
  std::vector<double> g, k;  // index x * n + y
};

inline ProductFields product_fields_ode(const EpidemicModel& m, double t, int box_radius,
                                        const OracleOptions& opt = {}) {
  const LatticeBox box(m.dim(), box_radius);
  const std::size_t n = box.size(), nn = n * n;
  const TruncatedGenerator g1(m.kernel1, m.kappa1, box), g2(m.kernel2, m.kappa2, box);
  const double A = m.law.growth(), r = m.law.conversion_rate, mu2 = m.law.mu2;
  State x(2 * nn, 0.0);
  x[nn + box.center() * n + box.center()] = 1.0;  // K(0) = delta delta
  auto rhs = [&](const State& s, State& ds, double) {
    std::fill(ds.begin(), ds.end(), 0.0);
    const double* G = &s[0];
    const double* K = &s[nn];
    detail::pair_generator_add(g1, g2, G, &ds[0]);
    detail::pair_generator_add(g1, g1, K, &ds[nn]);
    for (std::size_t p = 0; p < nn; ++p) {
      ds[p] += (A - mu2) * G[p] + r * K[p];
      ds[nn + p] += 2.0 * A * K[p];
    }
  };
  const double rate = 4.0 * std::max(m.kappa1, m.kappa2) + 2.0 * std::abs(A) + mu2 + r + 1e-12;
  integrate_adaptive(rhs, x, t, OdeOptions{opt.abs_tol, opt.rel_tol, 2.0 / rate});
  ProductFields out;
  out.g.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nn));
  out.k.assign(x.begin() + static_cast<std::ptrdiff_t>(nn), x.end());
  return out;
}

}  // namespace brw
