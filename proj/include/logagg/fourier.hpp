#pragma once

// Fourier coefficients of functions on [-pi,pi], periodic Sobolev norms,
// the embedding constant C_r = (sum_{k != 0} |k|^{-2r})^{1/2}, the
// fractional functional I_r and Toeplitz matrices T_n(l).

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "logagg/measures.hpp"

namespace logagg {

/// Coefficients a_k = (1/2pi) int e^{-ikx} l(x) dx for |k| <= k_max.
class FourierSeries {
 public:
  FourierSeries(int k_max, std::vector<std::complex<double>> coeffs)
      : k_max_(k_max), coeffs_(std::move(coeffs)) {
    if (k_max_ < 0 || coeffs_.size() != static_cast<std::size_t>(2 * k_max_ + 1)) {
      throw std::invalid_argument("FourierSeries: need 2*k_max+1 coefficients");
    }
  }

  int k_max() const noexcept { return k_max_; }
  std::complex<double> operator[](int k) const {
    if (k < -k_max_ || k > k_max_) return {0.0, 0.0};
    return coeffs_[static_cast<std::size_t>(k + k_max_)];
  }
  std::span<const std::complex<double>> coeffs() const noexcept { return coeffs_; }

  /// sum |a_k|^2, the Parseval partial sum.
  double energy() const {
    double s = 0.0;
    for (const auto& c : coeffs_) s += std::norm(c);
    return s;
  }

 private:
  int k_max_;
  std::vector<std::complex<double>> coeffs_;
};

namespace detail {

inline void require_circle(const Domain& d, const char* op) {
  if (d.kind() != DomainKind::symmetric_pi) {
    throw std::invalid_argument(std::string(op) + ": function must live on [-pi,pi]");
  }
}

}  // namespace detail

/// Quadrature approximation of the Fourier coefficients of a real function.
/// k_max is limited to grid_size/4 so that products e^{-ikx} l(x) stay
/// resolved by the coarse Simpson sub-rule.
inline FourierSeries fourier_coefficients(const GridFunction& l, int k_max) {
  const Domain& d = l.domain();
  detail::require_circle(d, "fourier_coefficients");
  const auto grid = static_cast<long>(d.grid_size());
  if (k_max < 0 || 4L * k_max > grid) {
    throw std::invalid_argument("fourier_coefficients: k_max " + std::to_string(k_max) +
                                " exceeds grid_size/4 = " + std::to_string(grid / 4));
  }
  // x_i = -pi + 2 pi i / G, so e^{-ikx_i} = (-1)^k * w^{-(k i mod G)}.
  std::vector<std::complex<double>> roots(static_cast<std::size_t>(grid));
  for (long j = 0; j < grid; ++j) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(grid);
    roots[static_cast<std::size_t>(j)] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<double> weighted(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) weighted[i] = d.weight(i) * l[i];

  std::vector<std::complex<double>> coeffs(static_cast<std::size_t>(2 * k_max + 1));
  const double scale = 1.0 / (2.0 * std::numbers::pi);
  for (long k = 0; k <= k_max; ++k) {
    std::complex<double> acc{0.0, 0.0};
    long idx = 0;
    for (std::size_t i = 0; i < weighted.size(); ++i) {
      acc += weighted[i] * roots[static_cast<std::size_t>(idx)];
      idx += k;
      if (idx >= grid) idx -= grid;
    }
    if (k % 2 == 1) acc = -acc;
    acc *= scale;
    coeffs[static_cast<std::size_t>(k_max + k)] = acc;
    coeffs[static_cast<std::size_t>(k_max - k)] = std::conj(acc);
  }
  return {k_max, std::move(coeffs)};
}

struct SobolevNorm {
  double norm = 0.0;
  double seminorm = 0.0;
};

inline SobolevNorm sobolev_norm(const FourierSeries& a, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("sobolev_norm: r must be positive");
  double l2 = 0.0;
  double semi = 0.0;
  for (int k = -a.k_max(); k <= a.k_max(); ++k) {
    const double e = std::norm(a[k]);
    l2 += e;
    if (k != 0) semi += std::pow(std::abs(static_cast<double>(k)), 2.0 * r) * e;
  }
  return {std::sqrt(l2 + semi), std::sqrt(semi)};
}

/// ||l||_{2,r} and {l}_{2,r} truncated at |k| <= k_max.
inline SobolevNorm sobolev_norm(const GridFunction& l, double r, int k_max) {
  return sobolev_norm(fourier_coefficients(l, k_max), r);
}

/// Default truncation used when a caller does not pick one.
inline int default_k_max(const Domain& d) { return static_cast<int>(d.grid_size() / 4); }

struct SeriesConstant {
  double value = 0.0;
  /// Upper bound on the part of C_r^2 dropped by the truncation.
  double tail_bound = 0.0;
};

/// C_r = sqrt(2 sum_{k=1}^{k_cut} k^{-2r}); diverges for r <= 1/2.
inline SeriesConstant c_r_constant(double r, long k_cut = 1'000'000) {
  if (!(r > 0.5)) throw std::invalid_argument("c_r_constant: requires r > 1/2");
  if (k_cut < 1) throw std::invalid_argument("c_r_constant: k_cut must be positive");
  double s = 0.0;
  // Summing small terms first keeps the partial sum accurate.
  for (long k = k_cut; k >= 1; --k) s += std::pow(static_cast<double>(k), -2.0 * r);
  const double tail = 2.0 * std::pow(static_cast<double>(k_cut), 1.0 - 2.0 * r) / (2.0 * r - 1.0);
  return {std::sqrt(2.0 * s), tail};
}

/// The two constants bracketing I_r(l) / {l}^2_{2,r}:
///   lower = int_{-pi}^{pi} |1-e^{iz}|^2 / |z|^{1+2r} dz,
///   upper = int_R       |1-e^{iz}|^2 / |z|^{1+2r} dz.
struct FractionalConstants {
  double lower = 0.0;
  double upper = 0.0;
};

inline FractionalConstants fractional_constants(double r) {
  if (!(r > 0.0 && r < 1.0)) {
    throw std::invalid_argument("fractional_constants: r must lie in (0,1)");
  }
  // |1-e^{iz}|^2 = 2(1 - cos z) = sum_{j>=1} (-1)^{j+1} 2 z^{2j} / (2j)!,
  // integrated term by term against z^{-1-2r} on [0,pi].
  const double pi = std::numbers::pi;
  double lower = 0.0;
  double factorial = 1.0;
  for (int j = 1; j <= 40; ++j) {
    factorial *= static_cast<double>((2 * j - 1) * (2 * j));
    const double exponent = 2.0 * j - 2.0 * r;
    const double term = 2.0 * std::pow(pi, exponent) / (factorial * exponent);
    lower += (j % 2 == 1) ? term : -term;
  }
  lower *= 2.0;
  // int_0^inf (1 - cos z) z^{-1-a} dz = pi / (2 Gamma(1+a) sin(pi a / 2)), a = 2r.
  const double upper = 2.0 * pi / (std::tgamma(1.0 + 2.0 * r) * std::sin(pi * r));
  return {lower, upper};
}

/// I_r(l) = (1/2pi) int int |l(x+y) - l(x)|^2 / |y|^{1+2r} dx dy over
/// [-pi,pi]^2 with l extended periodically.
///
/// The structure function D(y) = (1/2pi) int |l(x+y)-l(x)|^2 dx is exact on
/// grid shifts. Away from the singular axis the y-integral is Simpson; on
/// the band |y| < delta, D is replaced by its least-squares even polynomial
/// c1 y^2 + ... + c4 y^8 (fitted to the grid samples in the band) and
/// integrated in closed form.
inline double i_r_functional(const GridFunction& l, double r) {
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("i_r_functional: r must lie in (0,1)");
  const Domain& d = l.domain();
  detail::require_circle(d, "i_r_functional");
  const std::size_t grid = d.grid_size();
  const double step = d.step();
  const std::size_t half = grid / 2;

  auto structure = [&](std::size_t shift) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
      const double diff = l[(i + shift) % grid] - l[i];
      s += diff * diff;
    }
    return s / static_cast<double>(grid);
  };

  std::size_t band = std::max<std::size_t>(8, static_cast<std::size_t>(std::lround(0.2 / step)));
  band = std::min(band, half - 2);
  if ((half - band) % 2 == 1) ++band;
  const double delta = static_cast<double>(band) * step;

  constexpr int kTerms = 4;
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(band), kTerms);
  Eigen::VectorXd samples(static_cast<Eigen::Index>(band));
  for (std::size_t m = 1; m <= band; ++m) {
    const double u = static_cast<double>(m) / static_cast<double>(band);
    double p = u * u;
    for (int j = 0; j < kTerms; ++j) {
      basis(static_cast<Eigen::Index>(m - 1), j) = p;
      p *= u * u;
    }
    samples(static_cast<Eigen::Index>(m - 1)) = structure(m);
  }
  const Eigen::VectorXd c = basis.colPivHouseholderQr().solve(samples);
  double near = 0.0;
  for (int j = 0; j < kTerms; ++j) {
    // c_j (y/delta)^{2j+2} y^{-1-2r} integrated over [0, delta].
    const double exponent = 2.0 * (j + 1) - 2.0 * r;
    near += c(j) * std::pow(delta, -2.0 * r) / exponent;
  }

  double far = 0.0;
  for (std::size_t m = band; m <= half; ++m) {
    const double y = static_cast<double>(m) * step;
    const double w = (m == band || m == half) ? 1.0 : ((m - band) % 2 == 1 ? 4.0 : 2.0);
    far += w * structure(m) * std::pow(y, -1.0 - 2.0 * r);
  }
  far *= step / 3.0;
  return 2.0 * (near + far);
}

/// n x n Toeplitz matrix with entries [T]_{j,k} = a_{k-j}, a the Fourier
/// coefficients of its symbol.
class ToeplitzMatrix {
 public:
  /// coeffs[d + n - 1] = a_d for d = -(n-1), ..., n-1.
  ToeplitzMatrix(std::size_t n, std::vector<std::complex<double>> coeffs)
      : n_(n), coeffs_(std::move(coeffs)) {
    if (n_ == 0 || coeffs_.size() != 2 * n_ - 1) {
      throw std::invalid_argument("ToeplitzMatrix: need 2n-1 coefficients");
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::complex<double> symbol_coeff(long d) const {
    return coeffs_[static_cast<std::size_t>(d + static_cast<long>(n_) - 1)];
  }
  std::complex<double> entry(std::size_t j, std::size_t k) const {
    return symbol_coeff(static_cast<long>(k) - static_cast<long>(j));
  }

  bool is_real(double tol = 1e-12) const {
    for (const auto& c : coeffs_) {
      if (std::abs(c.imag()) > tol) return false;
    }
    return true;
  }

  Eigen::MatrixXcd dense() const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXcd m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < n; ++k) m(j, k) = entry(static_cast<std::size_t>(j), static_cast<std::size_t>(k));
    }
    return m;
  }

  /// Real symmetric materialization; the symbol must be even.
  Eigen::MatrixXd dense_real() const {
    if (!is_real(1e-10)) throw std::domain_error("ToeplitzMatrix::dense_real: symbol is not even");
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < n; ++k) m(j, k) = entry(static_cast<std::size_t>(j), static_cast<std::size_t>(k)).real();
    }
    return m;
  }

  double trace() const { return static_cast<double>(n_) * symbol_coeff(0).real(); }

  /// x^T T x for real x, summed entry by entry.
  double quadratic_form(std::span<const double> x) const {
    if (x.size() != n_) throw std::invalid_argument("ToeplitzMatrix::quadratic_form: size mismatch");
    std::vector<double> diag(coeffs_.size());
    for (std::size_t i = 0; i < coeffs_.size(); ++i) diag[i] = coeffs_[i].real();
    double total = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      // Row j uses coefficients a_{k-j}, k = 0..n-1.
      const double* row = diag.data() + (n_ - 1 - j);
      double acc = 0.0;
      for (std::size_t k = 0; k < n_; ++k) acc += row[k] * x[k];
      total += x[j] * acc;
    }
    return total;
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> coeffs_;
};

/// T_n from already computed coefficients; indices beyond a.k_max() are zero.
inline ToeplitzMatrix toeplitz_from_series(const FourierSeries& a, std::size_t n) {
  std::vector<std::complex<double>> c(2 * n - 1);
  for (long d = -(static_cast<long>(n) - 1); d <= static_cast<long>(n) - 1; ++d) {
    c[static_cast<std::size_t>(d + static_cast<long>(n) - 1)] = a[static_cast<int>(d)];
  }
  return {n, std::move(c)};
}

/// T_n(l) with coefficients up to min(n-1, grid_size/4); higher ones dropped.
inline ToeplitzMatrix toeplitz_build(const GridFunction& l, std::size_t n) {
  if (n == 0) throw std::invalid_argument("toeplitz_build: n must be positive");
  const int k_max = std::min(static_cast<int>(n) - 1, default_k_max(l.domain()));
  return toeplitz_from_series(fourier_coefficients(l, k_max), n);
}

/// log det of a Hermitian positive-definite Toeplitz matrix by Cholesky.
inline double toeplitz_logdet(const ToeplitzMatrix& t) {
  if (t.is_real(1e-10)) {
    Eigen::LLT<Eigen::MatrixXd> llt(t.dense_real());
    if (llt.info() != Eigen::Success) throw std::domain_error("toeplitz_logdet: matrix is not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  Eigen::LLT<Eigen::MatrixXcd> llt(t.dense());
  if (llt.info() != Eigen::Success) throw std::domain_error("toeplitz_logdet: matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
}

struct LevinsonResult {
  double logdet = 0.0;
  /// One-step prediction error variances v_0 >= v_1 >= ... ; det T_m = prod v_k.
  std::vector<double> prediction_variances;
};

/// Durbin recursion on the first column of a real symmetric positive-definite
/// Toeplitz matrix; O(m^2) time and O(m) memory.
inline LevinsonResult levinson_durbin(std::span<const double> column) {
  const std::size_t m = column.size();
  if (m == 0) throw std::invalid_argument("levinson_durbin: empty column");
  LevinsonResult out;
  out.prediction_variances.reserve(m);
  double v = column[0];
  if (!(v > 0.0)) throw std::domain_error("levinson_durbin: matrix is not positive definite");
  out.prediction_variances.push_back(v);
  out.logdet = std::log(v);
  std::vector<double> a;
  std::vector<double> next;
  a.reserve(m);
  next.reserve(m);
  for (std::size_t k = 1; k < m; ++k) {
    double acc = column[k];
    for (std::size_t i = 1; i < k; ++i) acc -= a[i - 1] * column[k - i];
    const double kappa = acc / v;
    next.assign(k, 0.0);
    for (std::size_t i = 1; i < k; ++i) next[i - 1] = a[i - 1] - kappa * a[k - i - 1];
    next[k - 1] = kappa;
    a.swap(next);
    v *= (1.0 - kappa * kappa);
    if (!(v > 0.0)) throw std::domain_error("levinson_durbin: matrix is not positive definite");
    out.prediction_variances.push_back(v);
    out.logdet += std::log(v);
  }
  return out;
}

struct LogdetBound {
  double logdet = 0.0;
  /// -n ||l - 1||^2_{L2(h)}; logdet >= bound for admissible l.
  double bound = 0.0;
};

/// log det T_n(l) and its lower bound for symbols with int l h = 1 and
/// 1/2 <= l <= 3/2. Dense Cholesky up to n = 512, Durbin above (the symbol
/// bounds keep the recursion well conditioned).
inline LogdetBound toeplitz_logdet_bound_check(const GridFunction& l, std::size_t n) {
  const Domain& d = l.domain();
  detail::require_circle(d, "toeplitz_logdet_bound_check");
  const double mean = integrate(l) * d.reference_density();
  if (std::abs(mean - 1.0) > 1e-6) {
    throw std::invalid_argument("toeplitz_logdet_bound_check: int l h must equal 1, got " +
                                std::to_string(mean));
  }
  if (l.min() < 0.5 || l.max() > 1.5) {
    throw std::invalid_argument("toeplitz_logdet_bound_check: l must take values in [1/2, 3/2]");
  }
  const ToeplitzMatrix t = toeplitz_build(l, n);
  double logdet = 0.0;
  if (n <= 512) {
    logdet = toeplitz_logdet(t);
  } else {
    std::vector<double> column(n);
    for (std::size_t k = 0; k < n; ++k) column[k] = t.entry(k, 0).real();
    logdet = levinson_durbin(column).logdet;
  }
  const GridFunction centered = l.map([](double v) { return v - 1.0; });
  return {logdet, -static_cast<double>(n) * l2h_norm_sq(centered)};
}

}  // namespace logagg
