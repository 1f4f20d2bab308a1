#pragma once

#include <boost/container/small_vector.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace brw {

// A lattice point of Z^d. Inline storage covers d <= 3 without allocation.
using Site = boost::container::small_vector<std::int32_t, 3>;

inline Site origin(int dim) { return Site(static_cast<std::size_t>(dim), 0); }

inline std::string to_string(const Site& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) os << ',';
    os << s[k];
  }
  os << ')';
  return os.str();
}

inline std::int64_t sup_norm(const Site& s) {
  std::int64_t m = 0;
  for (auto c : s) m = std::max<std::int64_t>(m, std::abs(static_cast<std::int64_t>(c)));
  return m;
}

inline Site operator+(const Site& a, const Site& b) {
  Site r(a);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] += b[k];
  return r;
}

inline Site operator-(const Site& a, const Site& b) {
  Site r(a);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] -= b[k];
  return r;
}

inline Site operator-(const Site& a) {
  Site r(a);
  for (auto& c : r) c = -c;
  return r;
}

// ---------------------------------------------------------------------------
// errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IntegrationError : Error {
  using Error::Error;
};

struct UnsupportedConfiguration : Error {
  using Error::Error;
};

struct EventCapExceeded : Error {
  std::size_t cap;
  explicit EventCapExceeded(std::size_t c)
      : Error("event cap of " + std::to_string(c) +
              " events exceeded (population blow-up at this horizon?)"),
        cap(c) {}
};

namespace detail {
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// LatticeBox: sites with |x|_inf <= L, row-major with the first coordinate
// slowest.

class LatticeBox {
 public:
  LatticeBox(int dim, int radius) : dim_(dim), radius_(radius) {
    detail::require(dim >= 1, "box dimension must be >= 1");
    detail::require(radius >= 0, "box radius must be >= 0");
    side_ = 2 * static_cast<std::size_t>(radius) + 1;
    size_ = 1;
    for (int k = 0; k < dim; ++k) size_ *= side_;
  }

  int dim() const { return dim_; }
  int radius() const { return radius_; }
  std::size_t side() const { return side_; }
  std::size_t size() const { return size_; }

  bool contains(const Site& s) const { return sup_norm(s) <= radius_; }

  std::optional<std::size_t> index(const Site& s) const {
    if (static_cast<int>(s.size()) != dim_ || !contains(s)) return std::nullopt;
    std::size_t idx = 0;
    for (int k = 0; k < dim_; ++k) idx = idx * side_ + static_cast<std::size_t>(s[k] + radius_);
    return idx;
  }

  Site site(std::size_t idx) const {
    Site s(static_cast<std::size_t>(dim_));
    for (int k = dim_ - 1; k >= 0; --k) {
      s[k] = static_cast<std::int32_t>(idx % side_) - radius_;
      idx /= side_;
    }
    return s;
  }

  std::size_t center() const { return size_ / 2; }

  bool on_boundary(std::size_t idx) const { return sup_norm(site(idx)) == radius_; }

  bool operator==(const LatticeBox&) const = default;

 private:
  int dim_;
  int radius_;
  std::size_t side_;
  std::size_t size_;
};

// ---------------------------------------------------------------------------
// ThetaGrid: midpoint tensor grid on [-pi, pi]^d.

class ThetaGrid {
 public:
  ThetaGrid(int dim, int nodes_per_axis) : dim_(dim), m_(nodes_per_axis) {
    detail::require(dim >= 1, "grid dimension must be >= 1");
    detail::require(nodes_per_axis >= 2 && nodes_per_axis % 2 == 0,
                    "grid nodes per axis must be an even integer >= 2");
    size_ = 1;
    for (int k = 0; k < dim; ++k) size_ *= static_cast<std::size_t>(m_);
    axis_.resize(static_cast<std::size_t>(m_));
    const double h = 2.0 * std::numbers::pi / m_;
    for (int k = 0; k < m_; ++k) axis_[k] = -std::numbers::pi + (k + 0.5) * h;
  }

  static int default_nodes(int dim) { return dim == 1 ? 256 : dim == 2 ? 128 : 48; }
  static ThetaGrid for_dim(int dim) { return ThetaGrid(dim, default_nodes(dim)); }

  int dim() const { return dim_; }
  int nodes_per_axis() const { return m_; }
  std::size_t size() const { return size_; }
  const std::vector<double>& axis() const { return axis_; }

  // quadrature weight of a single node; the weights sum to (2 pi)^d
  double weight() const { return std::pow(2.0 * std::numbers::pi / m_, dim_); }

  // inverse-transform normalisation (2 pi)^-d * weight = M^-d
  double inverse_scale() const { return 1.0 / static_cast<double>(size_); }

  void node(std::size_t n, double* theta) const {
    for (int k = dim_ - 1; k >= 0; --k) {
      theta[k] = axis_[n % static_cast<std::size_t>(m_)];
      n /= static_cast<std::size_t>(m_);
    }
  }

  std::vector<double> node(std::size_t n) const {
    std::vector<double> th(static_cast<std::size_t>(dim_));
    node(n, th.data());
    return th;
  }

  // index of the node at -theta
  std::size_t mirror(std::size_t n) const {
    std::size_t out = 0, mul = 1;
    for (int k = 0; k < dim_; ++k) {
      const std::size_t c = n % static_cast<std::size_t>(m_);
      out += (static_cast<std::size_t>(m_) - 1 - c) * mul;
      mul *= static_cast<std::size_t>(m_);
      n /= static_cast<std::size_t>(m_);
    }
    return out;
  }

  bool operator==(const ThetaGrid& o) const { return dim_ == o.dim_ && m_ == o.m_; }

 private:
  int dim_;
  int m_;
  std::size_t size_;
  std::vector<double> axis_;
};

}  // namespace brw
