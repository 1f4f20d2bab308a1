#pragma once

#include "core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace brw {

struct Birth {
  int k = 0;  // type-1 offspring
  int l = 0;  // type-2 offspring
  double rate = 0.0;
  bool operator==(const Birth&) const = default;
};

// Death, birth and conversion intensities of the two particle types.
class BranchingLaw {
 public:
  BranchingLaw() = default;

  BranchingLaw(double mu1, double mu2, std::vector<Birth> beta1, std::vector<Birth> beta2,
               double conversion_rate = 0.0)
      : mu_{mu1, mu2}, beta_{std::move(beta1), std::move(beta2)}, r_(conversion_rate) {
    auto rate_ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    detail::require(rate_ok(mu1), "mu1 must be a finite rate >= 0");
    detail::require(rate_ok(mu2), "mu2 must be a finite rate >= 0");
    detail::require(rate_ok(r_), "conversion_rate must be a finite rate >= 0");
    for (int i = 0; i < 2; ++i) {
      const std::string who = "beta" + std::to_string(i + 1);
      auto& list = beta_[i];
      for (const auto& b : list) {
        const std::string at = who + "(" + std::to_string(b.k) + "," + std::to_string(b.l) + ")";
        detail::require(b.k >= 0 && b.l >= 0, at + ": offspring counts must be >= 0");
        detail::require(b.k + b.l >= 2,
                        at + ": k + l must be >= 2 (a single offspring would be a type change, "
                             "which only conversion_rate may express)");
        detail::require(rate_ok(b.rate), at + ": rate must be finite and >= 0");
      }
      std::sort(list.begin(), list.end(),
                [](const Birth& a, const Birth& b) { return a.k != b.k ? a.k < b.k : a.l < b.l; });
      for (std::size_t n = 1; n < list.size(); ++n)
        detail::require(list[n].k != list[n - 1].k || list[n].l != list[n - 1].l,
                        who + "(" + std::to_string(list[n].k) + "," + std::to_string(list[n].l) +
                            ") listed twice");
      double tot = 0.0;
      for (const auto& b : list) tot += b.rate;
      detail::require(std::isfinite(tot), who + ": total branching rate is not finite");
    }
  }

  double mu(int type) const { return mu_.at(type - 1); }
  const std::vector<Birth>& beta(int type) const { return beta_.at(type - 1); }
  double conversion_rate() const { return r_; }

  double beta_total(int type) const {
    double s = 0.0;
    for (const auto& b : beta(type)) s += b.rate;
    return s;
  }

  // beta_i(k,l) <= c0^(k+l) / (k! l!) for every stored entry
  bool satisfies_carleman(double c0) const {
    for (int i = 1; i <= 2; ++i)
      for (const auto& b : beta(i)) {
        const double bound =
            std::exp((b.k + b.l) * std::log(c0) - std::lgamma(b.k + 1.0) - std::lgamma(b.l + 1.0));
        if (b.rate > bound) return false;
      }
    return true;
  }

  bool operator==(const BranchingLaw&) const = default;

 private:
  std::array<double, 2> mu_{0.0, 0.0};
  std::array<std::vector<Birth>, 2> beta_;
  double r_ = 0.0;
};

struct DerivedConstants {
  double b = 0, c = 0;
  double r1 = 0, r2 = 0;
  double C1 = 0, C2 = 0;
  std::array<double, 2> beta_total{0, 0};
  double beta2nd = 0;  // sum n(n-1) beta_1(n,0)
  double conversion = 0;
  Eigen::Matrix2d matrixD = Eigen::Matrix2d::Zero();
  double perron_root = 0;
  Eigen::Vector2d left_eig = Eigen::Vector2d::Zero();
  Eigen::Vector2d right_eig = Eigen::Vector2d::Zero();
  // second factorial moment densities, factorial[i](j,k), i = type - 1
  std::array<Eigen::Matrix2d, 2> factorial{Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()};

  // effective coupling of the first-moment system; conversion acts like a
  // beta_1(0,1) event and is zero for the plain two-type model
  double a_shift() const { return r1 - conversion; }
  double b_eff() const { return b + conversion; }
};

namespace detail {

// null vector of the 2x2 matrix m (assumed singular up to round-off)
inline Eigen::Vector2d null_vector(const Eigen::Matrix2d& m) {
  const Eigen::Vector2d r0 = m.row(0), r1 = m.row(1);
  const Eigen::Vector2d r = r0.norm() >= r1.norm() ? r0 : r1;
  if (r.norm() == 0.0) return {1.0, 0.0};
  return {-r(1), r(0)};
}

}  // namespace detail

inline DerivedConstants derive_constants(const BranchingLaw& law) {
  DerivedConstants dc;
  for (const auto& e : law.beta(1)) {
    dc.b += e.l * e.rate;
    dc.r1 += (e.k - 1) * e.rate;
    if (e.l == 0) dc.beta2nd += e.k * (e.k - 1.0) * e.rate;
  }
  for (const auto& e : law.beta(2)) {
    dc.c += e.k * e.rate;
    dc.r2 += (e.l - 1) * e.rate;
  }
  dc.r1 -= law.mu(1);
  dc.r2 -= law.mu(2);
  dc.C1 = 0.5 * (dc.r1 + dc.r2);
  dc.C2 = 0.5 * std::sqrt((dc.r1 - dc.r2) * (dc.r1 - dc.r2) + 4.0 * dc.b * dc.c);
  dc.beta_total = {law.beta_total(1), law.beta_total(2)};
  dc.conversion = law.conversion_rate();
  for (int i = 0; i < 2; ++i)
    for (const auto& e : law.beta(i + 1)) {
      dc.factorial[i](0, 0) += e.k * (e.k - 1.0) * e.rate;
      dc.factorial[i](0, 1) += static_cast<double>(e.k) * e.l * e.rate;
      dc.factorial[i](1, 1) += e.l * (e.l - 1.0) * e.rate;
      dc.factorial[i](1, 0) = dc.factorial[i](0, 1);
    }

  Eigen::Matrix2d& D = dc.matrixD;
  D << dc.a_shift(), dc.b_eff(), dc.c, dc.r2;
  const double tr = D(0, 0) + D(1, 1);
  const double diff = D(0, 0) - D(1, 1);
  const double disc = std::sqrt(diff * diff + 4.0 * D(0, 1) * D(1, 0));
  dc.perron_root = 0.5 * (tr + disc);

  const Eigen::Matrix2d shifted = D - dc.perron_root * Eigen::Matrix2d::Identity();
  Eigen::Vector2d v = detail::null_vector(shifted);
  Eigen::Vector2d u = detail::null_vector(shifted.transpose());
  if (v.sum() < 0) v = -v;
  if (u.sum() < 0) u = -u;
  const double uv = u.dot(v);
  if (std::abs(uv) > 1e-300) {
    u /= u.sum() != 0.0 ? u.sum() : 1.0;
    v /= u.dot(v);
  } else {
    u.normalize();
    v.normalize();
  }
  dc.left_eig = u;
  dc.right_eig = v;
  return dc;
}

struct Criticality {
  enum class Regime { subcritical, critical, supercritical };
  Regime regime = Regime::critical;
  bool irreducible = false;
  bool positivity_applicable = false;  // only meaningful for irreducible D
  double positivity = 0.0;             // sum_i v_i b^(i)_jk u_j u_k
};

inline const char* to_string(Criticality::Regime r) {
  switch (r) {
    case Criticality::Regime::subcritical: return "subcritical";
    case Criticality::Regime::critical: return "critical";
    case Criticality::Regime::supercritical: return "supercritical";
  }
  return "?";
}

inline Criticality classify_criticality(const DerivedConstants& dc, const BranchingLaw& /*law*/) {
  constexpr double tol = 1e-12;
  Criticality out;
  out.irreducible = dc.matrixD(0, 1) > 0.0 && dc.matrixD(1, 0) > 0.0;
  out.positivity_applicable = out.irreducible;
  for (int i = 0; i < 2; ++i)
    out.positivity += dc.right_eig(i) * dc.left_eig.dot(dc.factorial[i] * dc.left_eig);
  if (dc.perron_root > tol) {
    out.regime = Criticality::Regime::supercritical;
  } else if (dc.perron_root < -tol) {
    out.regime = Criticality::Regime::subcritical;
  } else {
    // a zero root with positivity <= 0 needs a law without any births, which
    // cannot be irreducible; the value stays available to the caller
    out.regime = Criticality::Regime::critical;
  }
  return out;
}

// Coefficients of the 2x2 first-moment system at a fixed frequency.
struct ThetaCoefficients {
  double a = 0, d = 0;
  double lambda1 = 0, lambda2 = 0;
  double disc = 0;  // (a - d)^2 + 4 b c
};

inline ThetaCoefficients theta_coefficients_from_symbols(const DerivedConstants& dc, double kappa1_sym1,
                                                         double kappa2_sym2) {
  ThetaCoefficients tc;
  tc.a = kappa1_sym1 + dc.a_shift();
  tc.d = kappa2_sym2 + dc.r2;
  tc.disc = (tc.a - tc.d) * (tc.a - tc.d) + 4.0 * dc.b_eff() * dc.c;
  const double s = std::sqrt(tc.disc);
  tc.lambda1 = 0.5 * (tc.a + tc.d + s);
  tc.lambda2 = 0.5 * (tc.a + tc.d - s);
  return tc;
}

}  // namespace brw
