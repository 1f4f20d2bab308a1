#pragma once

#include "core.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace brw {

using State = std::vector<double>;

struct OdeOptions {
  double abs_tol = 1e-9;
  double rel_tol = 1e-7;
  double max_step = 0.0;  // 0: no cap
};

// Integrates x' = f(x, t) from 0 to t_end with adaptive Dormand-Prince 5(4).
template <class Rhs>
void integrate_adaptive(Rhs&& rhs, State& x, double t_end, const OdeOptions& opt) {
  namespace ode = boost::numeric::odeint;
  if (t_end <= 0.0) return;
  using stepper_t = ode::runge_kutta_dopri5<State>;
  const double cap = opt.max_step > 0.0 ? opt.max_step : t_end;
  const double dt0 = std::min(cap, t_end) * 1e-2;
  auto sys = [&rhs](const State& s, State& ds, double t) { rhs(s, ds, t); };
  try {
    ode::integrate_adaptive(ode::make_controlled(opt.abs_tol, opt.rel_tol, cap, stepper_t()), sys, x,
                            0.0, t_end, dt0);
  } catch (const std::exception& e) {
    throw IntegrationError(std::string("ODE integration failed (step-size underflow?): ") + e.what());
  }
  for (double v : x)
    if (!std::isfinite(v)) throw IntegrationError("ODE integration produced a non-finite value");
}

// Composite Simpson rule for a vector-valued integrand on [a, b], starting
// from n0 intervals and doubling until the change between successive
// estimates, measured by `change`, drops below tol.
struct SimpsonResult {
  std::vector<double> value;
  std::size_t intervals = 0;
  bool converged = false;
};

template <class Integrand, class Change>
SimpsonResult simpson_doubling(Integrand&& g, double a, double b, std::size_t n0, double tol,
                               int max_doublings, Change&& change) {
  if (n0 % 2) ++n0;
  SimpsonResult res;
  std::size_t n = n0;
  double h = (b - a) / static_cast<double>(n);
  std::vector<double> ends = g(a);
  {
    const auto fb = g(b);
    for (std::size_t k = 0; k < ends.size(); ++k) ends[k] += fb[k];
  }
  const std::size_t dim = ends.size();
  std::vector<double> odd(dim, 0.0), interior(dim, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const auto f = g(a + h * static_cast<double>(i));
    for (std::size_t k = 0; k < dim; ++k) {
      interior[k] += f[k];
      if (i % 2) odd[k] += f[k];
    }
  }
  auto estimate = [&](double step) {
    std::vector<double> s(dim);
    for (std::size_t k = 0; k < dim; ++k)
      s[k] = step / 3.0 * (ends[k] + 4.0 * odd[k] + 2.0 * (interior[k] - odd[k]));
    return s;
  };
  res.value = estimate(h);
  res.intervals = n;
  if (b == a) {
    res.converged = true;
    return res;
  }
  for (int it = 0; it < max_doublings; ++it) {
    n *= 2;
    h *= 0.5;
    std::fill(odd.begin(), odd.end(), 0.0);
    for (std::size_t i = 1; i < n; i += 2) {
      const auto f = g(a + h * static_cast<double>(i));
      for (std::size_t k = 0; k < dim; ++k) odd[k] += f[k];
    }
    for (std::size_t k = 0; k < dim; ++k) interior[k] += odd[k];
    auto next = estimate(h);
    const double c = change(res.value, next);
    res.value = std::move(next);
    res.intervals = n;
    if (c < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace brw
