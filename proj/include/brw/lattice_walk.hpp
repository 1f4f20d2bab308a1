#pragma once

#include "core.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <map>
#include <span>
#include <sstream>
#include <utility>

namespace brw {

// Symmetric jump distribution a(v), v != 0, stored normalised to total mass 1.
class JumpKernel {
 public:
  struct Entry {
    Site v;
    double weight;
    bool operator==(const Entry&) const = default;
  };

  JumpKernel() = default;

  // Weights are normalised unless they already sum to 1 within 1e-12.
  static JumpKernel from_pairs(int dim, std::vector<std::pair<Site, double>> pairs) {
    detail::require(dim >= 1, "kernel dimension must be >= 1");
    detail::require(!pairs.empty(), "kernel support is empty");
    std::map<Site, double> w;
    double total = 0.0;
    for (auto& [v, a] : pairs) {
      detail::require(static_cast<int>(v.size()) == dim,
                      "kernel vector " + to_string(v) + " has wrong dimension");
      detail::require(sup_norm(v) > 0, "kernel vector " + to_string(v) + " is zero");
      detail::require(std::isfinite(a) && a > 0.0,
                      "kernel weight at " + to_string(v) + " must be positive and finite");
      detail::require(!w.count(v), "kernel vector " + to_string(v) + " listed twice");
      w[v] = a;
      total += a;
    }
    detail::require(std::isfinite(total) && total > 0.0, "kernel weights are not normalisable");
    const double scale = std::abs(total - 1.0) <= 1e-12 ? 1.0 : 1.0 / total;
    for (auto& [v, a] : w)
      detail::require(w.count(-v) > 0, "kernel is asymmetric: " + to_string(v) + " has no mirror " + to_string(-v));
    auto num = [](double x) {
      std::ostringstream os;
      os << x;
      return os.str();
    };
    for (auto& [v, a] : w) {
      const double b = w.at(-v);
      detail::require(std::abs(b - a) <= 1e-12 * std::max(1.0, a),
                      "kernel is asymmetric: weight " + num(a) + " at " + to_string(v) + " but " +
                          num(b) + " at " + to_string(-v));
    }
    JumpKernel k;
    k.dim_ = dim;
    for (auto& [v, a] : w) k.entries_.push_back({v, a * scale});
    k.finish();
    return k;
  }

  // a(v) = 1/(2d) on the unit vectors
  static JumpKernel nearest_neighbour(int dim) {
    std::vector<std::pair<Site, double>> p;
    for (int k = 0; k < dim; ++k) {
      Site v = origin(dim);
      v[k] = 1;
      p.emplace_back(v, 1.0);
      p.emplace_back(-v, 1.0);
    }
    return from_pairs(dim, std::move(p));
  }

  // uniform over v != 0 with |v|_inf <= radius
  static JumpKernel uniform_box(int dim, int radius) {
    detail::require(radius >= 1, "uniform kernel radius must be >= 1");
    const LatticeBox box(dim, radius);
    std::vector<std::pair<Site, double>> p;
    for (std::size_t i = 0; i < box.size(); ++i) {
      Site v = box.site(i);
      if (sup_norm(v) > 0) p.emplace_back(v, 1.0);
    }
    return from_pairs(dim, std::move(p));
  }

  int dim() const { return dim_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t support_size() const { return entries_.size(); }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  int range() const { return range_; }

  double weight(const Site& v) const {
    for (const auto& e : entries_)
      if (e.v == v) return e.weight;
    return 0.0;
  }

  std::size_t draw_index(Philox4x32& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                 entries_.size() - 1);
  }

  bool operator==(const JumpKernel& o) const { return dim_ == o.dim_ && entries_ == o.entries_; }

 private:
  void finish() {
    cov_ = Eigen::MatrixXd::Zero(dim_, dim_);
    cumulative_.clear();
    double acc = 0.0;
    range_ = 0;
    for (const auto& e : entries_) {
      for (int k = 0; k < dim_; ++k)
        for (int j = 0; j < dim_; ++j) cov_(k, j) += e.weight * e.v[k] * e.v[j];
      acc += e.weight;
      cumulative_.push_back(acc);
      range_ = std::max<int>(range_, static_cast<int>(sup_norm(e.v)));
    }
    cumulative_.back() = 1.0;
    detail::require(lattice_generates(), "kernel support does not generate Z^d (reducible walk)");
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    detail::require(llt.info() == Eigen::Success, "kernel covariance is not positive definite");
  }

  // Integer row reduction to echelon form; the support generates Z^d iff
  // every pivot is +-1.
  bool lattice_generates() const {
    std::vector<std::vector<long long>> rows;
    for (const auto& e : entries_) {
      std::vector<long long> r(e.v.begin(), e.v.end());
      rows.push_back(r);
    }
    for (int col = 0; col < dim_; ++col) {
      // gcd-reduce column `col` among remaining rows
      while (true) {
        std::size_t piv = rows.size();
        for (std::size_t i = 0; i < rows.size(); ++i)
          if (rows[i][col] != 0 &&
              (piv == rows.size() || std::llabs(rows[i][col]) < std::llabs(rows[piv][col])))
            piv = i;
        if (piv == rows.size()) return false;
        bool reduced = false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (i == piv || rows[i][col] == 0) continue;
          const long long q = rows[i][col] / rows[piv][col];
          for (int k = 0; k < dim_; ++k) rows[i][k] -= q * rows[piv][k];
          if (rows[i][col] != 0) reduced = true;
        }
        if (!reduced) {
          if (std::llabs(rows[piv][col]) != 1) return false;
          rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(piv));
          break;
        }
      }
    }
    return true;
  }

  int dim_ = 0;
  int range_ = 0;
  std::vector<Entry> entries_;
  std::vector<double> cumulative_;
  Eigen::MatrixXd cov_;
};

// ---------------------------------------------------------------------------

inline double fourier_symbol(const JumpKernel& kernel, std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != kernel.dim())
    throw std::invalid_argument("theta dimension does not match kernel dimension");
  double s = 0.0;
  for (const auto& e : kernel.entries()) {
    double phase = 0.0;
    for (int k = 0; k < kernel.dim(); ++k) phase += theta[k] * e.v[k];
    const double h = std::sin(0.5 * phase);
    s -= 2.0 * e.weight * h * h;  // cos - 1 without cancellation
  }
  return s;
}

// symbol at every node of the grid
inline std::vector<double> symbol_table(const JumpKernel& kernel, const ThetaGrid& grid) {
  if (grid.dim() != kernel.dim())
    throw std::invalid_argument("grid dimension does not match kernel dimension");
  std::vector<double> out(grid.size());
  std::vector<double> th(static_cast<std::size_t>(grid.dim()));
  for (std::size_t n = 0; n < grid.size(); ++n) {
    grid.node(n, th.data());
    out[n] = fourier_symbol(kernel, th);
  }
  return out;
}

// (2 pi)^-d * quadrature of spectrum(theta) cos(theta . u)
inline double inverse_at(const ThetaGrid& grid, std::span<const double> spectrum, const Site& u) {
  if (static_cast<int>(u.size()) != grid.dim())
    throw std::invalid_argument("site dimension does not match grid dimension");
  const int d = grid.dim();
  const std::size_t m = static_cast<std::size_t>(grid.nodes_per_axis());
  const auto& ax = grid.axis();
  if (d == 1) {
    double s = 0.0;
    for (std::size_t n = 0; n < m; ++n) s += spectrum[n] * std::cos(ax[n] * u[0]);
    return s * grid.inverse_scale();
  }
  // per-axis phases, combined as complex products
  std::vector<std::complex<double>> ph(m * static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k)
    for (std::size_t n = 0; n < m; ++n) ph[k * m + n] = std::polar(1.0, ax[n] * u[k]);
  double s = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    std::size_t r = n;
    std::complex<double> z(1.0, 0.0);
    for (int k = d - 1; k >= 0; --k) {
      z *= ph[k * m + r % m];
      r /= m;
    }
    s += spectrum[n] * z.real();
  }
  return s * grid.inverse_scale();
}

inline double transition_probability(const JumpKernel& kernel, double kappa, double t, const Site& x,
                                     const Site& y, const ThetaGrid& grid) {
  if (!(t >= 0.0)) throw std::invalid_argument("transition_probability: negative time");
  if (static_cast<int>(x.size()) != kernel.dim() || static_cast<int>(y.size()) != kernel.dim() ||
      grid.dim() != kernel.dim())
    throw std::invalid_argument("transition_probability: dimension mismatch");
  const Site u = y - x;
  if (t == 0.0) return sup_norm(u) == 0 ? 1.0 : 0.0;
  auto sym = symbol_table(kernel, grid);
  for (auto& v : sym) v = std::exp(kappa * v * t);
  const double p = inverse_at(grid, sym, u);
  return std::clamp(p, 0.0, 1.0);
}

inline double gaussian_asymptote(const JumpKernel& kernel, double kappa, double t, const Site& s) {
  if (!(t > 0.0)) throw std::invalid_argument("gaussian_asymptote: t must be > 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("gaussian_asymptote: kappa must be > 0");
  if (static_cast<int>(s.size()) != kernel.dim())
    throw std::invalid_argument("gaussian_asymptote: dimension mismatch");
  const auto& b = kernel.covariance();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(b);
  if (!lu.isInvertible()) throw std::domain_error("gaussian_asymptote: singular covariance");
  Eigen::VectorXd sv(kernel.dim());
  for (int k = 0; k < kernel.dim(); ++k) sv(k) = s[k];
  const double q = sv.dot(lu.solve(sv));
  const double d = kernel.dim();
  return std::exp(-q / (2.0 * kappa * t)) /
         (std::pow(2.0 * std::numbers::pi * kappa * t, d / 2.0) * std::sqrt(b.determinant()));
}

// gamma_d = 1 / ((2 pi)^{d/2} sqrt(det(kappa B)))
inline double gamma_constant(const JumpKernel& kernel, double kappa) {
  const double d = kernel.dim();
  return 1.0 / (std::pow(2.0 * std::numbers::pi, d / 2.0) *
                std::sqrt(std::pow(kappa, d) * kernel.covariance().determinant()));
}

inline Site sample_jump(const JumpKernel& kernel, Philox4x32& rng) {
  return kernel.entries()[kernel.draw_index(rng)].v;
}

// ---------------------------------------------------------------------------
// Transforms between a spectrum on a ThetaGrid and a field on a LatticeBox.
// Both directions are real parts of a separable complex-exponential
// contraction, one axis at a time. Fields here are even, so cosines suffice.

class BoxTransform {
 public:
  BoxTransform(const ThetaGrid& grid, const LatticeBox& box)
      : d_(grid.dim()), m_(static_cast<std::size_t>(grid.nodes_per_axis())), side_(box.side()),
        scale_(grid.inverse_scale()), grid_size_(grid.size()), box_size_(box.size()) {
    detail::require(grid.dim() == box.dim(), "grid and box dimensions differ");
    phase_.resize(m_ * side_);
    for (std::size_t n = 0; n < m_; ++n)
      for (std::size_t j = 0; j < side_; ++j)
        phase_[n * side_ + j] =
            std::polar(1.0, grid.axis()[n] * (static_cast<double>(j) - box.radius()));
  }

  std::size_t grid_size() const { return grid_size_; }
  std::size_t box_size() const { return box_size_; }

  // field(x) = M^-d sum_theta spectrum(theta) cos(theta . x)
  void inverse(std::span<const double> spectrum, std::span<double> field) const {
    contract(spectrum, field, true);
    for (auto& v : field) v *= scale_;
  }

  // spectrum(theta) = sum_x field(x) cos(theta . x)
  void forward(std::span<const double> field, std::span<double> spectrum) const {
    contract(field, spectrum, false);
  }

 private:
  void contract(std::span<const double> in, std::span<double> out, bool to_box) const {
    const std::size_t n_in = to_box ? m_ : side_;
    const std::size_t n_out = to_box ? side_ : m_;
    if (d_ == 1) {
      for (std::size_t o = 0; o < n_out; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_in; ++i)
          s += in[i] * (to_box ? phase_[i * side_ + o] : phase_[o * side_ + i]).real();
        out[o] = s;
      }
      return;
    }
    std::vector<std::complex<double>> cur(in.begin(), in.end()), next;
    std::size_t pre = 1, post = 1;
    for (int k = 1; k < d_; ++k) post *= n_in;
    // axis k: shape [pre, n_in, post] -> [pre, n_out, post]
    for (int k = 0; k < d_; ++k) {
      next.assign(pre * n_out * post, {0.0, 0.0});
      for (std::size_t a = 0; a < pre; ++a)
        for (std::size_t i = 0; i < n_in; ++i)
          for (std::size_t o = 0; o < n_out; ++o) {
            const auto w = to_box ? phase_[i * side_ + o] : phase_[o * side_ + i];
            const auto* src = &cur[(a * n_in + i) * post];
            auto* dst = &next[(a * n_out + o) * post];
            for (std::size_t b = 0; b < post; ++b) dst[b] += w * src[b];
          }
      cur.swap(next);
      pre *= n_out;
      if (k + 1 < d_) post /= n_in;
    }
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = cur[n].real();
  }

  int d_;
  std::size_t m_;
  std::size_t side_;
  double scale_;
  std::size_t grid_size_;
  std::size_t box_size_;
  std::vector<std::complex<double>> phase_;
};

}  // namespace brw
