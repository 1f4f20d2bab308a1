#pragma once

#include "brw/brw.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

namespace brw::support {

// p(t, 0, 0) of the rate-1 simple walk on Z as a Poisson mixture of the
// discrete-time return probabilities, truncated at n_max steps.
inline double simple_walk_return_series(double t, int n_max = 60) {
  double sum = 0.0;
  for (int n = 0; n <= n_max; n += 2) {
    // Poisson(t) weight of n steps times C(n, n/2) / 2^n
    const double log_w = -t + n * std::log(t) - std::lgamma(n + 1.0);
    const double log_pn = std::lgamma(n + 1.0) - 2.0 * std::lgamma(n / 2 + 1.0) - n * std::log(2.0);
    sum += std::exp(log_w + log_pn);
  }
  return sum;
}

// p(t, 0, x) of the rate-1 simple walk on Z: e^{-t} I_|x|(t)
inline double simple_walk_bessel(double t, int x) {
  return std::exp(-t) * std::cyl_bessel_i(static_cast<double>(std::abs(x)), t);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("brw2_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline TwoTypeModel single_type_model(double mu1, std::vector<Birth> beta1, double kappa = 1.0) {
  return TwoTypeModel(JumpKernel::nearest_neighbour(1), kappa, JumpKernel::nearest_neighbour(1), 1.0,
                      BranchingLaw(mu1, 0.0, std::move(beta1), {}));
}

}  // namespace brw::support
