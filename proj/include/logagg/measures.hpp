#pragma once

// Grid-function calculus: composite Simpson quadrature on a closed uniform
// grid, the generalized Kullback-Leibler divergence, the Hellinger distance,
// the L2(h) norm and the (g, m, psi, t) decomposition of a positive function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace logagg {

enum class DomainKind { unit_interval, symmetric_pi };

/// Uniform grid over [0,1] (reference density h = 1) or [-pi,pi]
/// (h = 1/(2 pi)). Nodes include both endpoints, so there are grid_size + 1.
class Domain {
 public:
  Domain(DomainKind kind, std::size_t grid_size) : kind_(kind), grid_size_(grid_size) {
    if (grid_size_ < 16 || grid_size_ % 2 != 0) {
      throw std::invalid_argument("Domain: grid_size must be even and >= 16, got " +
                                  std::to_string(grid_size_));
    }
  }

  static Domain unit(std::size_t grid_size) { return {DomainKind::unit_interval, grid_size}; }
  static Domain circle(std::size_t grid_size) { return {DomainKind::symmetric_pi, grid_size}; }

  DomainKind kind() const noexcept { return kind_; }
  std::size_t grid_size() const noexcept { return grid_size_; }
  std::size_t num_nodes() const noexcept { return grid_size_ + 1; }

  double lower() const noexcept {
    return kind_ == DomainKind::unit_interval ? 0.0 : -std::numbers::pi;
  }
  double upper() const noexcept {
    return kind_ == DomainKind::unit_interval ? 1.0 : std::numbers::pi;
  }
  double length() const noexcept { return upper() - lower(); }
  double step() const noexcept { return length() / static_cast<double>(grid_size_); }
  double node(std::size_t i) const noexcept {
    return lower() + step() * static_cast<double>(i);
  }
  /// Value of the (constant) reference density on the domain.
  double reference_density() const noexcept { return 1.0 / length(); }

  /// Composite Simpson weight of node i.
  double weight(std::size_t i) const noexcept {
    const double third = step() / 3.0;
    if (i == 0 || i == grid_size_) return third;
    return (i % 2 == 1) ? 4.0 * third : 2.0 * third;
  }

  bool contains(double x) const noexcept { return x >= lower() && x <= upper(); }

  friend bool operator==(const Domain& a, const Domain& b) noexcept {
    return a.kind_ == b.kind_ && a.grid_size_ == b.grid_size_;
  }

 private:
  DomainKind kind_;
  std::size_t grid_size_;
};

/// A real function tabulated at the nodes of a Domain.
class GridFunction {
 public:
  GridFunction(Domain domain, std::vector<double> values)
      : domain_(domain), values_(std::move(values)) {
    if (values_.size() != domain_.num_nodes()) {
      throw std::invalid_argument("GridFunction: expected " +
                                  std::to_string(domain_.num_nodes()) + " values, got " +
                                  std::to_string(values_.size()));
    }
  }

  template <class F>
  static GridFunction tabulate(Domain domain, F&& f) {
    std::vector<double> v(domain.num_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(domain.node(i));
    return {domain, std::move(v)};
  }

  static GridFunction constant(Domain domain, double c) {
    return {domain, std::vector<double>(domain.num_nodes(), c)};
  }

  const Domain& domain() const noexcept { return domain_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  /// Piecewise-linear interpolation between nodes; x must lie in the domain.
  double at(double x) const {
    if (!domain_.contains(x)) {
      throw std::out_of_range("GridFunction::at: point outside the domain");
    }
    const double u = (x - domain_.lower()) / domain_.step();
    auto i = static_cast<std::size_t>(u);
    if (i >= domain_.grid_size()) i = domain_.grid_size() - 1;
    const double frac = u - static_cast<double>(i);
    return values_[i] + frac * (values_[i + 1] - values_[i]);
  }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double sup_norm() const {
    double s = 0.0;
    for (double v : values_) s = std::max(s, std::abs(v));
    return s;
  }

  template <class F>
  GridFunction map(F&& f) const {
    std::vector<double> v(values_.size());
    std::transform(values_.begin(), values_.end(), v.begin(), f);
    return {domain_, std::move(v)};
  }

 private:
  Domain domain_;
  std::vector<double> values_;
};

/// Derived quantities of a positive function f: g = log(f/h), m = int f,
/// psi = -int g h, t = g + psi.
struct LogProfile {
  std::vector<double> g;
  double m = 0.0;
  double psi = 0.0;
  std::vector<double> t;
};

namespace detail {

inline void require_same_domain(const GridFunction& p, const GridFunction& q, const char* op) {
  if (!(p.domain() == q.domain())) {
    throw std::invalid_argument(std::string(op) + ": grid functions live on different domains");
  }
}

}  // namespace detail

/// Simpson integral (Lebesgue measure) of values tabulated on the domain.
inline double integrate(const Domain& domain, std::span<const double> values) {
  if (values.size() != domain.num_nodes()) {
    throw std::invalid_argument("integrate: size mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += domain.weight(i) * values[i];
  return s;
}

inline double integrate(const GridFunction& p) { return integrate(p.domain(), p.values()); }

/// int p q over the domain.
inline double inner(const Domain& domain, std::span<const double> p, std::span<const double> q) {
  if (p.size() != domain.num_nodes() || q.size() != domain.num_nodes()) {
    throw std::invalid_argument("inner: size mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += domain.weight(i) * p[i] * q[i];
  return s;
}

inline double inner(const GridFunction& p, const GridFunction& q) {
  detail::require_same_domain(p, q, "inner");
  return inner(p.domain(), p.values(), q.values());
}

/// Generalized KL divergence int p log(p/q) - int p + int q, with 0 log 0 = 0.
inline double kl_divergence(const GridFunction& p, const GridFunction& q) {
  detail::require_same_domain(p, q, "kl_divergence");
  const Domain& d = p.domain();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    const double qi = q[i];
    if (pi < 0.0 || qi < 0.0) {
      throw std::invalid_argument("kl_divergence: arguments must be non-negative");
    }
    double integrand = qi - pi;
    if (pi > 0.0) {
      if (qi == 0.0) {
        throw std::domain_error("kl_divergence: q vanishes where p is positive");
      }
      integrand += pi * std::log(pi / qi);
    }
    s += d.weight(i) * integrand;
  }
  return s;
}

/// Squared Hellinger distance int (sqrt p - sqrt q)^2.
inline double hellinger_sq(const GridFunction& p, const GridFunction& q) {
  detail::require_same_domain(p, q, "hellinger_sq");
  const Domain& d = p.domain();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) {
      throw std::invalid_argument("hellinger_sq: arguments must be non-negative");
    }
    const double diff = std::sqrt(p[i]) - std::sqrt(q[i]);
    s += d.weight(i) * diff * diff;
  }
  return s;
}

/// int p^2 h.
inline double l2h_norm_sq(const Domain& domain, std::span<const double> p) {
  return inner(domain, p, p) * domain.reference_density();
}

inline double l2h_norm_sq(const GridFunction& p) { return l2h_norm_sq(p.domain(), p.values()); }

inline LogProfile log_decompose(const GridFunction& f) {
  const Domain& d = f.domain();
  const double h = d.reference_density();
  LogProfile out;
  out.g.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!(f[i] > 0.0)) {
      throw std::domain_error("log_decompose: f must be strictly positive at every node");
    }
    out.g[i] = std::log(f[i] / h);
  }
  out.m = integrate(f);
  out.psi = -integrate(d, out.g) * h;
  out.t.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out.t[i] = out.g[i] + out.psi;
  return out;
}

/// exp(v) h tabulated on the domain.
inline GridFunction exp_times_reference(const Domain& domain, std::span<const double> v) {
  const double h = domain.reference_density();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i]) * h;
  return {domain, std::move(out)};
}

inline double sup_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

}  // namespace logagg
