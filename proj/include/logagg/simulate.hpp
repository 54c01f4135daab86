#pragma once

// Samplers and the two hypercube families used to audit the lower bounds.
//
// Random numbers come from std::mt19937_64 seeded through std::seed_seq with
// (seed, stream); both are fully specified by the standard, and uniforms and
// normals are derived here rather than through the implementation-defined
// std distributions, so draws are reproducible across toolchains.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "logagg/density_agg.hpp"
#include "logagg/fourier.hpp"
#include "logagg/measures.hpp"
#include "logagg/spectral_agg.hpp"

namespace logagg {

struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

class Rng {
 public:
  explicit Rng(RngSpec spec) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(spec.stream), static_cast<std::uint32_t>(spec.stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t bits() { return engine_(); }

  /// Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal by the Box-Muller transform.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// n draws by inverting the CDF of the piecewise-linear interpolant of f.
inline IidSample sample_iid(const GridFunction& f, std::size_t n, RngSpec spec) {
  const Domain& d = f.domain();
  if (f.min() < 0.0) throw std::invalid_argument("sample_iid: density must be non-negative");
  const double step = d.step();
  std::vector<double> cdf(f.size(), 0.0);
  for (std::size_t i = 1; i < f.size(); ++i) cdf[i] = cdf[i - 1] + 0.5 * step * (f[i - 1] + f[i]);
  const double total = cdf.back();
  if (!(total > 0.0)) throw std::invalid_argument("sample_iid: density has zero mass");

  Rng rng(spec);
  std::vector<double> points(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double target = rng.uniform01() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    std::size_t cell = static_cast<std::size_t>(it - cdf.begin());
    cell = std::clamp<std::size_t>(cell, 1, d.grid_size()) - 1;
    // Density a + b u on the cell; solve a u + b u^2 / 2 = rest for u.
    const double a = f[cell];
    const double b = (f[cell + 1] - f[cell]) / step;
    const double rest = target - cdf[cell];
    const double disc = std::max(0.0, a * a + 2.0 * b * rest);
    const double denom = a + std::sqrt(disc);
    double u = denom > 0.0 ? 2.0 * rest / denom : 0.0;
    u = std::clamp(u, 0.0, step);
    points[s] = std::min(d.upper(), d.node(cell) + u);
  }
  return {d, std::move(points)};
}

/// Draws x = C z with C C^T = 2 pi T_n(f); the factor is computed once.
class GaussianSampler {
 public:
  GaussianSampler(const GridFunction& f, std::size_t n) : n_(n) {
    if (n == 0 || n > 4096) throw std::invalid_argument("GaussianSampler: n must lie in [1, 4096]");
    // T_n(f) is positive definite for any non-negative f of positive mass, so
    // zeros of f (e.g. 1 + cos at +-pi) are allowed; the factorization decides.
    if (!(f.min() >= 0.0) || !(integrate(f) > 0.0)) {
      throw std::invalid_argument("GaussianSampler: spectral density must be non-negative with positive mass");
    }
    const Eigen::MatrixXd sigma = 2.0 * std::numbers::pi * toeplitz_build(f, n).dense_real();
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw std::domain_error("GaussianSampler: covariance 2 pi T_n(f) is not positive definite at n = " +
                              std::to_string(n));
    }
    factor_ = llt.matrixL();
  }

  std::size_t n() const noexcept { return n_; }

  GaussianPath sample(RngSpec spec) const {
    Rng rng(spec);
    Eigen::VectorXd z(static_cast<Eigen::Index>(n_));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    const Eigen::VectorXd x = factor_.triangularView<Eigen::Lower>() * z;
    return GaussianPath(std::vector<double>(x.data(), x.data() + x.size()));
  }

 private:
  std::size_t n_;
  Eigen::MatrixXd factor_;
};

inline GaussianPath sample_gaussian_path(const GridFunction& f, std::size_t n, RngSpec spec) {
  return GaussianSampler(f, n).sample(spec);
}

// ---------------------------------------------------------------------------
// The bump phi on [0, pi].

/// zeta(x) = exp(-1/(x(pi/2 - x))) on (0, pi/2), zero elsewhere, and its
/// first two derivatives.
struct BumpValue {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

inline BumpValue zeta_eval(double x) {
  const double q = x * (0.5 * std::numbers::pi - x);
  if (!(q > 1.0 / 700.0)) return {};
  const double z = std::exp(-1.0 / q);
  const double dq = 0.5 * std::numbers::pi - 2.0 * x;
  const double w1 = dq / (q * q);
  const double w2 = -2.0 / (q * q) - 2.0 * dq * dq / (q * q * q);
  return {z, z * w1, z * (w1 * w1 + w2)};
}

inline double zeta(double x) { return zeta_eval(x).value; }

/// phi = zeta on [0, pi/2], -zeta(. - pi/2) on [pi/2, pi], zero outside.
inline BumpValue phi_eval(double x) {
  const double half = 0.5 * std::numbers::pi;
  if (x <= 0.0 || x >= std::numbers::pi) return {};
  if (x <= half) return zeta_eval(x);
  const BumpValue z = zeta_eval(x - half);
  return {-z.value, -z.d1, -z.d2};
}

inline double phi(double x) { return phi_eval(x).value; }

inline double phi_sup_norm() { return std::exp(-16.0 / (std::numbers::pi * std::numbers::pi)); }

namespace detail {

/// Simpson rule for a function on [a, b] with `cells` (even) cells.
template <class F>
double simpson(F&& f, double a, double b, std::size_t cells) {
  const double h = (b - a) / static_cast<double>(cells);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < cells; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
  return s * h / 3.0;
}

}  // namespace detail

/// int_0^pi phi^2, by quadrature on `cells` cells.
inline double phi_sq_integral(std::size_t cells = 1 << 14) {
  return detail::simpson([](double x) { return phi(x) * phi(x); }, 0.0, std::numbers::pi, cells);
}

/// Frozen value of int_0^pi phi^2.
inline constexpr double kPhiSqIntegral = 0.05100071360799;

/// sup_{0 < s <= 1/2} ||(log(1 + s phi))^{(p)}||_{L2([0,pi], dx/pi)} / s for p in
/// {0, 1, 2}: the constant bounding derivatives of the spectral hypercube's
/// log-densities.
inline double bump_derivative_constant(int p) {
  if (p < 0 || p > 2) throw std::invalid_argument("bump_derivative_constant: p must be 0, 1 or 2");
  auto ratio = [p](double s) {
    auto integrand = [p, s](double x) {
      const BumpValue b = phi_eval(x);
      double v = 0.0;
      if (s == 0.0) {
        v = p == 0 ? b.value : (p == 1 ? b.d1 : b.d2);
      } else {
        const double base = 1.0 + s * b.value;
        if (p == 0) {
          v = std::log(base) / s;
        } else if (p == 1) {
          v = b.d1 / base;
        } else {
          v = b.d2 / base - s * b.d1 * b.d1 / (base * base);
        }
      }
      return v * v;
    };
    return std::sqrt(detail::simpson(integrand, 0.0, std::numbers::pi, 1 << 13) / std::numbers::pi);
  };
  double best = ratio(0.0);
  for (int i = 1; i <= 100; ++i) best = std::max(best, ratio(0.005 * i));
  return best;
}

/// Smallest D with 2^{D/8} >= N.
inline int hypercube_dimension(std::size_t n_members) {
  if (n_members < 2) throw std::invalid_argument("hypercube_dimension: N must be at least 2");
  int d = 1;
  while (std::pow(2.0, d / 8.0) < static_cast<double>(n_members)) ++d;
  return d;
}

using Codeword = std::vector<std::uint8_t>;

inline std::size_t hamming_distance(const Codeword& a, const Codeword& b) {
  std::size_t s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] != b[i] ? 1 : 0;
  return s;
}

/// N words of {0,1}^D, the zero word first, pairwise Hamming distance at least
/// ceil(D/4). Lexicographic greedy search for D <= 16, randomized greedy with
/// restarts above.
inline std::vector<Codeword> select_codewords(int dim, std::size_t count, RngSpec spec) {
  if (dim < 1 || count < 1) throw std::invalid_argument("select_codewords: need D >= 1 and N >= 1");
  if (std::pow(2.0, dim / 8.0) < static_cast<double>(count)) {
    throw std::invalid_argument("select_codewords: 2^{D/8} < N");
  }
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t min_dist = (d + 3) / 4;
  auto admissible = [&](const std::vector<Codeword>& chosen, const Codeword& w) {
    return std::all_of(chosen.begin(), chosen.end(),
                       [&](const Codeword& c) { return hamming_distance(c, w) >= min_dist; });
  };

  std::vector<Codeword> chosen{Codeword(d, 0)};
  if (dim <= 16) {
    for (std::uint32_t v = 1; v < (1u << dim) && chosen.size() < count; ++v) {
      Codeword w(d);
      for (std::size_t i = 0; i < d; ++i) w[i] = static_cast<std::uint8_t>((v >> (d - 1 - i)) & 1u);
      if (admissible(chosen, w)) chosen.push_back(std::move(w));
    }
  } else {
    Rng rng(spec);
    for (int attempt = 0; attempt < 64 && chosen.size() < count; ++attempt) {
      chosen.assign(1, Codeword(d, 0));
      for (int draw = 0; draw < 100000 && chosen.size() < count; ++draw) {
        Codeword w(d);
        for (std::size_t i = 0; i < d; ++i) w[i] = static_cast<std::uint8_t>(rng.bits() >> 63);
        if (admissible(chosen, w)) chosen.push_back(std::move(w));
      }
    }
  }
  if (chosen.size() < count) {
    throw std::runtime_error("select_codewords: found only " + std::to_string(chosen.size()) + " of " +
                             std::to_string(count) + " words at distance " + std::to_string(min_dist));
  }
  return chosen;
}

enum class FamilyKind { density, spectral };

struct HypercubeFamily {
  FamilyKind kind = FamilyKind::density;
  int D = 0;
  /// T for the density family, s for the spectral family.
  double amplitude = 0.0;
  std::vector<Codeword> codewords;
  std::vector<GridFunction> members;
  /// Both sides of the precondition: lhs = (log N + x)/n < rhs.
  double precondition_lhs = 0.0;
  double precondition_rhs = 0.0;
  /// Spectral family only: "integer" or "non-integer" smoothness branch, and
  /// the constants feeding the precondition.
  std::string branch;
  double cbar_rl = 0.0;
  double c_rl = 0.0;
};

/// Members 1 + sum_j delta_j alpha_j on [0,1], alpha_j = +T/D on the first
/// half of (j/D, (j+1)/D] and -T/D on the second half. At a jump node the
/// value is the mean of the two sides, which with grid_size a multiple of 4D
/// makes Simpson exact on every piece.
inline HypercubeFamily build_density_hypercube(std::size_t n_members, double L, std::size_t n, double x,
                                               std::size_t grid_size = 1024, RngSpec spec = {}) {
  if (!(L > 0.0) || n == 0 || !(x >= 0.0)) throw std::invalid_argument("build_density_hypercube: bad arguments");
  HypercubeFamily fam;
  fam.kind = FamilyKind::density;
  fam.precondition_lhs = (std::log(static_cast<double>(n_members)) + x) / static_cast<double>(n);
  const double e = 1.0 - std::exp(-L);
  fam.precondition_rhs = 3.0 * e * e;
  if (!(fam.precondition_lhs < fam.precondition_rhs)) {
    throw std::invalid_argument("build_density_hypercube: (log N + x)/n = " + std::to_string(fam.precondition_lhs) +
                                " violates (log N + x)/n < 3(1 - e^{-L})^2 = " +
                                std::to_string(fam.precondition_rhs));
  }
  fam.D = hypercube_dimension(n_members);
  const auto d = static_cast<std::size_t>(fam.D);
  if (grid_size % (4 * d) != 0) {
    throw std::invalid_argument("build_density_hypercube: grid_size must be a multiple of 4D = " +
                                std::to_string(4 * d));
  }
  fam.amplitude = fam.D * std::sqrt(fam.precondition_lhs / 3.0);
  fam.codewords = select_codewords(fam.D, n_members, spec);

  const Domain dom = Domain::unit(grid_size);
  const std::size_t half = grid_size / (2 * d);
  const double a = fam.amplitude / fam.D;
  for (const Codeword& w : fam.codewords) {
    // Value on each half-cell, then nodal values.
    std::vector<double> piece(2 * d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      if (w[j] == 0) continue;
      piece[2 * j] += a;
      piece[2 * j + 1] -= a;
    }
    std::vector<double> v(dom.num_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i % half != 0) {
        v[i] = piece[i / half];
      } else if (i == 0) {
        v[i] = piece.front();
      } else if (i == grid_size) {
        v[i] = piece.back();
      } else {
        v[i] = 0.5 * (piece[i / half - 1] + piece[i / half]);
      }
    }
    fam.members.emplace_back(dom, std::move(v));
  }
  return fam;
}

/// C-bar_{r,L} of the spectral construction and its branch label. `c_r` is
/// the Sobolev embedding constant; supports 1/2 < r <= 2.
struct SpectralConstants {
  double cbar_rl = 0.0;
  double c_rl = 0.0;
  std::string branch;
};

inline SpectralConstants spectral_family_constants(double r, double L, double phi_sq = kPhiSqIntegral) {
  if (!(r > 0.5 && r <= 2.0)) throw std::invalid_argument("spectral_family_constants: r must lie in (1/2, 2]");
  if (!(L > 0.0)) throw std::invalid_argument("spectral_family_constants: L must be positive");
  const double cr = c_r_constant(r).value;
  const double lg = std::pow(std::log(2.0), r);
  const bool integer = std::floor(r) == r;
  double deriv = 0.0;
  if (integer) {
    deriv = bump_derivative_constant(static_cast<int>(r));
  } else {
    const double lo = std::floor(r);
    const double hi = std::ceil(r);
    deriv = std::pow(bump_derivative_constant(static_cast<int>(hi)), r - lo) *
            std::pow(bump_derivative_constant(static_cast<int>(lo)), hi - r);
  }
  SpectralConstants out;
  out.branch = integer ? "integer" : "non-integer";
  out.cbar_rl = std::min({lg / 2.0, lg * L / (std::sqrt(8.0) * cr),
                          lg * L / (std::sqrt(2.0) * cr * std::pow(16.0, r) * deriv)});
  out.c_rl = 3.0 * out.cbar_rl * out.cbar_rl * phi_sq / (2.0 * std::numbers::pi);
  return out;
}

/// Members 2 pi f(y) = 1 + s sum_j delta_j phi(D|y| - (j-1) pi) on [-pi,pi].
inline HypercubeFamily build_spectral_hypercube(std::size_t n_members, double r, double L, std::size_t n, double x,
                                                std::size_t grid_size = 8192, RngSpec spec = {}) {
  if (n == 0 || !(x >= 0.0)) throw std::invalid_argument("build_spectral_hypercube: bad arguments");
  HypercubeFamily fam;
  fam.kind = FamilyKind::spectral;
  const double log_n = std::log(static_cast<double>(n_members));
  const SpectralConstants c = spectral_family_constants(r, L);
  fam.branch = c.branch;
  fam.cbar_rl = c.cbar_rl;
  fam.c_rl = c.c_rl;
  fam.precondition_lhs = (log_n + x) / static_cast<double>(n);
  fam.precondition_rhs = c.c_rl / std::pow(log_n, 2.0 * r);
  if (!(fam.precondition_lhs < fam.precondition_rhs)) {
    throw std::invalid_argument("build_spectral_hypercube: (log N + x)/n = " + std::to_string(fam.precondition_lhs) +
                                " violates (log N + x)/n < C(r,L)/log(N)^{2r} = " +
                                std::to_string(fam.precondition_rhs));
  }
  fam.D = hypercube_dimension(n_members);
  fam.amplitude = std::sqrt(2.0 * std::numbers::pi / (3.0 * kPhiSqIntegral)) * std::sqrt(fam.precondition_lhs);
  fam.codewords = select_codewords(fam.D, n_members, spec);

  const Domain dom = Domain::circle(grid_size);
  for (const Codeword& w : fam.codewords) {
    fam.members.push_back(GridFunction::tabulate(dom, [&](double y) {
      const double u = std::abs(y);
      double s = 0.0;
      for (int j = 1; j <= fam.D; ++j) {
        if (w[static_cast<std::size_t>(j - 1)] != 0) s += phi(fam.D * u - (j - 1) * std::numbers::pi);
      }
      return (1.0 + fam.amplitude * s) / (2.0 * std::numbers::pi);
    }));
  }
  return fam;
}

}  // namespace logagg
