#pragma once

#include "branching_law.hpp"
#include "lattice_walk.hpp"

#include <array>

namespace brw {

// Two (kernel, kappa) walks plus the branching law.
class TwoTypeModel {
 public:
  TwoTypeModel() = default;

  TwoTypeModel(JumpKernel kernel1, double kappa1, JumpKernel kernel2, double kappa2, BranchingLaw law)
      : kernel_{std::move(kernel1), std::move(kernel2)}, kappa_{kappa1, kappa2}, law_(std::move(law)) {
    detail::require(kernel_[0].dim() == kernel_[1].dim(), "kernels of the two types differ in dimension");
    detail::require(std::isfinite(kappa1) && kappa1 >= 0.0, "kappa1 must be a finite rate >= 0");
    detail::require(std::isfinite(kappa2) && kappa2 >= 0.0, "kappa2 must be a finite rate >= 0");
    dc_ = derive_constants(law_);
  }

  int dim() const { return kernel_[0].dim(); }
  const JumpKernel& kernel(int type) const { return kernel_.at(type - 1); }
  double kappa(int type) const { return kappa_.at(type - 1); }
  const BranchingLaw& law() const { return law_; }
  const DerivedConstants& constants() const { return dc_; }

  // rho_i = kappa_i + mu_i + sum beta_i + r [i == 1]
  double total_rate(int type) const {
    return kappa(type) + law_.mu(type) + law_.beta_total(type) +
           (type == 1 ? law_.conversion_rate() : 0.0);
  }

  bool equal_walks() const { return kernel_[0] == kernel_[1] && kappa_[0] == kappa_[1]; }

  bool operator==(const TwoTypeModel& o) const {
    return kernel_ == o.kernel_ && kappa_ == o.kappa_ && law_ == o.law_;
  }

 private:
  std::array<JumpKernel, 2> kernel_;
  std::array<double, 2> kappa_{1.0, 1.0};
  BranchingLaw law_;
  DerivedConstants dc_;
};

inline ThetaCoefficients theta_coefficients(const DerivedConstants& dc, const TwoTypeModel& model,
                                            std::span<const double> theta) {
  return theta_coefficients_from_symbols(dc, model.kappa(1) * fourier_symbol(model.kernel(1), theta),
                                         model.kappa(2) * fourier_symbol(model.kernel(2), theta));
}

// Critical law of the one-dimensional clustering figure.
inline BranchingLaw figure_critical_law() {
  return BranchingLaw(0.25, 0.375, {{2, 0, 0.125}, {1, 1, 0.125}}, {{0, 2, 0.125}, {1, 1, 0.25}});
}

inline TwoTypeModel figure_critical_model() {
  return TwoTypeModel(JumpKernel::nearest_neighbour(1), 1.0, JumpKernel::uniform_box(1, 3), 4.0,
                      figure_critical_law());
}

}  // namespace brw
