#pragma once

// S-aggregation f^S_lambda = exp(g_lambda) h of positive functions on
// [-pi,pi], driven by a stationary Gaussian sample through the periodogram
// pairing <l, I_n> = (1/n) x^T T_n(l) x.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "logagg/fourier.hpp"
#include "logagg/measures.hpp"
#include "logagg/simplex_opt.hpp"

namespace logagg {

/// The criterion p . lambda - m_lambda/2 - sum_k lambda_k m_k / 2 with
/// m_lambda = int exp(sum_k lambda_k g_k) h. The pairings p_k = <g_k, I> are
/// supplied by the caller, so the same object serves spectral samples and
/// i.i.d. density samples.
class SCriterion {
 public:
  SCriterion(Domain domain, std::vector<std::vector<double>> g, std::vector<double> m,
             std::vector<double> pairings)
      : domain_(domain), g_(std::move(g)), m_(std::move(m)), p_(std::move(pairings)) {
    if (g_.empty() || m_.size() != g_.size() || p_.size() != g_.size()) {
      throw std::invalid_argument("SCriterion: inconsistent sizes");
    }
  }

  std::size_t size() const noexcept { return g_.size(); }
  std::span<const double> pairings() const noexcept { return p_; }

  std::vector<double> g_lambda(std::span<const double> lambda) const {
    std::vector<double> out(domain_.num_nodes(), 0.0);
    for (std::size_t k = 0; k < g_.size(); ++k) {
      if (lambda[k] == 0.0) continue;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda[k] * g_[k][i];
    }
    return out;
  }

  GridFunction aggregate(std::span<const double> lambda) const {
    return exp_times_reference(domain_, g_lambda(lambda));
  }

  double m_lambda(std::span<const double> lambda) const { return integrate(aggregate(lambda)); }

  double value(std::span<const double> lambda) const {
    double lin = 0.0;
    for (std::size_t k = 0; k < g_.size(); ++k) lin += lambda[k] * (p_[k] - 0.5 * m_[k]);
    return lin - 0.5 * m_lambda(lambda);
  }

  std::vector<double> gradient(std::span<const double> lambda) const {
    const GridFunction f = aggregate(lambda);
    std::vector<double> grad(g_.size());
    for (std::size_t k = 0; k < g_.size(); ++k) {
      grad[k] = p_[k] - 0.5 * inner(domain_, g_[k], f.values()) - 0.5 * m_[k];
    }
    return grad;
  }

 private:
  Domain domain_;
  std::vector<std::vector<double>> g_;
  std::vector<double> m_;
  std::vector<double> p_;
};

/// A bank of positive even functions on [-pi,pi] whose log-ratios g_k lie in
/// the periodic Sobolev ball ||g_k||_{2,r} <= sobolev_bound.
class SpectralBank {
 public:
  SpectralBank(std::vector<GridFunction> estimators, double r, double sobolev_bound)
      : estimators_(std::move(estimators)), r_(r), sobolev_bound_(sobolev_bound) {
    if (estimators_.empty()) throw std::invalid_argument("SpectralBank: empty bank");
    if (!(r_ > 0.5)) throw std::invalid_argument("SpectralBank: r must exceed 1/2");
    const Domain& d = estimators_.front().domain();
    detail::require_circle(d, "SpectralBank");
    const std::size_t grid = d.grid_size();
    for (std::size_t k = 0; k < estimators_.size(); ++k) {
      const GridFunction& f = estimators_[k];
      if (!(f.domain() == d)) throw std::invalid_argument("SpectralBank: estimators on different grids");
      profiles_.push_back(log_decompose(f));
      const auto& g = profiles_.back().g;
      for (std::size_t i = 0; i <= grid; ++i) {
        if (std::abs(g[i] - g[grid - i]) > 1e-6) {
          throw std::invalid_argument("SpectralBank: estimator " + std::to_string(k) + " is not even");
        }
      }
      series_.push_back(fourier_coefficients(GridFunction(d, g), default_k_max(d)));
      const double norm = sobolev_norm(series_.back(), r_).norm;
      if (norm > sobolev_bound_ + 1e-6) {
        throw std::invalid_argument("SpectralBank: ||g_" + std::to_string(k) + "||_{2,r} = " +
                                    std::to_string(norm) + " exceeds the declared bound " +
                                    std::to_string(sobolev_bound_));
      }
      norms_.push_back(norm);
      sup_ = std::max(sup_, sup_norm(g));
    }
  }

  std::size_t size() const noexcept { return estimators_.size(); }
  const Domain& domain() const noexcept { return estimators_.front().domain(); }
  const GridFunction& estimator(std::size_t k) const { return estimators_.at(k); }
  const LogProfile& profile(std::size_t k) const { return profiles_.at(k); }
  const FourierSeries& log_series(std::size_t k) const { return series_.at(k); }
  double r() const noexcept { return r_; }
  double sobolev_bound() const noexcept { return sobolev_bound_; }
  /// max_k ||g_k||_inf.
  double K_bound() const noexcept { return sup_; }
  /// max_k ||g_k||_{2,r}.
  double max_sobolev_norm() const { return *std::max_element(norms_.begin(), norms_.end()); }
  double sobolev_norm_of(std::size_t k) const { return norms_.at(k); }

 private:
  std::vector<GridFunction> estimators_;
  double r_;
  double sobolev_bound_;
  std::vector<LogProfile> profiles_;
  std::vector<FourierSeries> series_;
  std::vector<double> norms_;
  double sup_ = 0.0;
};

/// One realization X_1..X_n of a stationary centered sequence.
class GaussianPath {
 public:
  explicit GaussianPath(std::vector<double> x) : x_(std::move(x)) {
    if (x_.empty()) throw std::invalid_argument("GaussianPath: empty path");
    for (double v : x_) {
      if (!std::isfinite(v)) throw std::invalid_argument("GaussianPath: non-finite entry");
    }
  }
  std::size_t size() const noexcept { return x_.size(); }
  double operator[](std::size_t i) const noexcept { return x_[i]; }
  std::span<const double> values() const noexcept { return x_; }

 private:
  std::vector<double> x_;
};

/// (1/n) sum_{i=1}^{n-j} x_i x_{i+j}.
inline double empirical_autocov(const GaussianPath& x, std::size_t j) {
  const std::size_t n = x.size();
  if (j >= n) throw std::out_of_range("empirical_autocov: lag must be below n");
  double s = 0.0;
  for (std::size_t i = 0; i + j < n; ++i) s += x[i] * x[i + j];
  return s / static_cast<double>(n);
}

inline std::vector<double> empirical_autocovs(const GaussianPath& x) {
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = empirical_autocov(x, j);
  return out;
}

/// I_n(y) = gamma_0/2pi + (1/pi) sum_{j=1}^{n-1} gamma_j cos(j y) on the grid.
inline GridFunction periodogram_In(const GaussianPath& x, const Domain& domain) {
  detail::require_circle(domain, "periodogram_In");
  const std::vector<double> gamma = empirical_autocovs(x);
  std::vector<double> v(domain.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double y = domain.node(i);
    double s = gamma[0] / (2.0 * std::numbers::pi);
    for (std::size_t j = 1; j < gamma.size(); ++j) {
      s += gamma[j] * std::cos(static_cast<double>(j) * y) / std::numbers::pi;
    }
    v[i] = s;
  }
  return {domain, std::move(v)};
}

/// <l, I_n> = (1/n) x^T T_n(l) x.
inline double pairing_In(const GridFunction& l, const GaussianPath& x) {
  const ToeplitzMatrix t = toeplitz_build(l, x.size());
  return t.quadratic_form(x.values()) / static_cast<double>(x.size());
}

/// The same pairing from precomputed coefficients of l.
inline double pairing_In(const FourierSeries& a, const GaussianPath& x) {
  const ToeplitzMatrix t = toeplitz_from_series(a, x.size());
  return t.quadratic_form(x.values()) / static_cast<double>(x.size());
}

/// int l I_n by quadrature against the tabulated periodogram.
inline double pairing_series(const GridFunction& l, const GaussianPath& x) {
  return inner(l, periodogram_In(x, l.domain()));
}

inline SCriterion spectral_criterion(const SpectralBank& bank, const GaussianPath& x) {
  std::vector<std::vector<double>> g;
  std::vector<double> m;
  std::vector<double> p;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    g.push_back(bank.profile(k).g);
    m.push_back(bank.profile(k).m);
    p.push_back(pairing_In(bank.log_series(k), x));
  }
  return {bank.domain(), std::move(g), std::move(m), std::move(p)};
}

inline std::vector<double> g_lambda(const SimplexWeights& lambda, const SpectralBank& bank) {
  if (lambda.size() != bank.size()) throw std::invalid_argument("g_lambda: weight/bank size mismatch");
  std::vector<double> out(bank.domain().num_nodes(), 0.0);
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto& g = bank.profile(k).g;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda[k] * g[i];
  }
  return out;
}

inline GridFunction spectral_aggregate_of(const SimplexWeights& lambda, const SpectralBank& bank) {
  return exp_times_reference(bank.domain(), g_lambda(lambda, bank));
}

inline double m_lambda_S(const SimplexWeights& lambda, const SpectralBank& bank) {
  return integrate(spectral_aggregate_of(lambda, bank));
}

/// pen^S(lambda) = sum_k lambda_k m_k - m_lambda.
inline double pen_S(const SimplexWeights& lambda, const SpectralBank& bank) {
  double s = 0.0;
  for (std::size_t k = 0; k < bank.size(); ++k) s += lambda[k] * bank.profile(k).m;
  return s - m_lambda_S(lambda, bank);
}

/// H^S_n(lambda) = <g_lambda, I_n> - m_lambda - pen^S(lambda)/2.
inline double criterion_HS(const SimplexWeights& lambda, const SpectralBank& bank, const GaussianPath& x) {
  const GridFunction gl(bank.domain(), g_lambda(lambda, bank));
  return pairing_In(gl, x) - m_lambda_S(lambda, bank) - 0.5 * pen_S(lambda, bank);
}

struct SpectralAggregate {
  OptimizerResult optimizer;
  SimplexWeights weights;
  GridFunction f_hat;
};

inline SpectralAggregate aggregate_spectral(const SpectralBank& bank, const GaussianPath& x,
                                            const OptimizerOptions& options = {}) {
  const SCriterion crit = spectral_criterion(bank, x);
  OptimizerResult res = maximize_on_simplex([&](std::span<const double> l) { return crit.value(l); },
                                            [&](std::span<const double> l) { return crit.gradient(l); },
                                            bank.size(), options);
  if (!res.converged) {
    throw ConvergenceError("aggregate_spectral: optimizer stopped with gap " + std::to_string(res.fw_gap),
                           res);
  }
  GridFunction f_hat = crit.aggregate(res.weights.values());
  SimplexWeights w = res.weights;
  return {std::move(res), std::move(w), std::move(f_hat)};
}

/// gamma_j = int f(y) cos(j y) dy = 2 pi Re a_j(f), j = 0..j_max.
inline std::vector<double> autocovariances(const GridFunction& f, int j_max) {
  const FourierSeries a = fourier_coefficients(f, j_max);
  std::vector<double> gamma(static_cast<std::size_t>(j_max) + 1);
  for (int j = 0; j <= j_max; ++j) gamma[static_cast<std::size_t>(j)] = 2.0 * std::numbers::pi * a[j].real();
  return gamma;
}

/// <l, fbar_n> with fbar_n(y) = sum_{|j|<n} (1-|j|/n) gamma_j e^{ijy} / 2pi,
/// truncated at |j| <= grid_size/4.
inline double pairing_expected_periodogram(const GridFunction& l, const GridFunction& f, std::size_t n) {
  const int j_max = std::min(static_cast<int>(n) - 1, default_k_max(l.domain()));
  const FourierSeries al = fourier_coefficients(l, j_max);
  const std::vector<double> gamma = autocovariances(f, j_max);
  double s = gamma[0] * al[0].real();
  for (int j = 1; j <= j_max; ++j) {
    const double taper = 1.0 - static_cast<double>(j) / static_cast<double>(n);
    s += 2.0 * taper * gamma[static_cast<std::size_t>(j)] * al[j].real();
  }
  return s;
}

/// B_n(l) = <l, fbar_n - f>.
inline double bias_functional(const GridFunction& l, const GridFunction& f_true, std::size_t n) {
  detail::require_same_domain(l, f_true, "bias_functional");
  return pairing_expected_periodogram(l, f_true, n) - inner(l, f_true);
}

/// B_n(g_lambda - g_{k*}).
inline double bias_diagnostic(const SpectralBank& bank, const GridFunction& f_true, const SimplexWeights& lambda,
                              std::size_t k_star, std::size_t n) {
  if (k_star >= bank.size()) throw std::out_of_range("bias_diagnostic: k_star out of range");
  std::vector<double> l = g_lambda(lambda, bank);
  const auto& gk = bank.profile(k_star).g;
  for (std::size_t i = 0; i < l.size(); ++i) l[i] -= gk[i];
  return bias_functional(GridFunction(bank.domain(), std::move(l)), f_true, n);
}

/// H^S_n(hat) - H^S_n(probe) - D(f_hat || f_probe)/2; non-negative at an
/// exact maximizer.
inline double strong_concavity_margin(const SCriterion& crit, std::span<const double> hat,
                                      std::span<const double> probe) {
  return crit.value(hat) - crit.value(probe) -
         0.5 * kl_divergence(crit.aggregate(hat), crit.aggregate(probe));
}

}  // namespace logagg
