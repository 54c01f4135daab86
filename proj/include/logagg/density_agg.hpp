#pragma once

// D-aggregation of probability densities: f^D_lambda = exp(t_lambda - psi_lambda) h
// with t_lambda = sum_k lambda_k t_k and psi_lambda = log int e^{t_lambda} h,
// weights chosen by maximizing the penalized criterion H^D_n over the simplex.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "logagg/measures.hpp"
#include "logagg/simplex_opt.hpp"
#include "logagg/spectral_agg.hpp"

namespace logagg {

/// Probability densities f_k = exp(t_k - psi_k) h, validated at construction.
class DensityBank {
 public:
  explicit DensityBank(std::vector<GridFunction> estimators,
                       double declared_K = std::numeric_limits<double>::infinity())
      : estimators_(std::move(estimators)) {
    if (estimators_.empty()) throw std::invalid_argument("DensityBank: empty bank");
    const Domain& d = estimators_.front().domain();
    for (std::size_t k = 0; k < estimators_.size(); ++k) {
      if (!(estimators_[k].domain() == d)) {
        throw std::invalid_argument("DensityBank: estimators on different grids");
      }
      LogProfile p = log_decompose(estimators_[k]);
      if (std::abs(p.m - 1.0) > 1e-8) {
        throw std::invalid_argument("DensityBank: estimator " + std::to_string(k) + " has mass " +
                                    std::to_string(p.m));
      }
      if (p.psi < -1e-8) throw std::invalid_argument("DensityBank: negative psi");
      const double tk = sup_norm(p.t);
      if (tk > declared_K) {
        throw std::invalid_argument("DensityBank: ||t_" + std::to_string(k) + "||_inf = " +
                                    std::to_string(tk) + " exceeds K = " + std::to_string(declared_K));
      }
      K_ = std::max(K_, tk);
      profiles_.push_back(std::move(p));
    }
  }

  std::size_t size() const noexcept { return estimators_.size(); }
  const Domain& domain() const noexcept { return estimators_.front().domain(); }
  const GridFunction& estimator(std::size_t k) const { return estimators_.at(k); }
  const LogProfile& profile(std::size_t k) const { return profiles_.at(k); }
  /// max_k ||t_k||_inf.
  double K_bound() const noexcept { return K_; }

  /// Smallest eigenvalue of the Gram matrix <t_i, t_j>_{L2(h)}; zero when the
  /// t_k are linearly dependent.
  double gram_min_eigenvalue() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd gram(n, n);
    const double h = domain().reference_density();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        gram(i, j) = gram(j, i) =
            inner(domain(), profiles_[static_cast<std::size_t>(i)].t, profiles_[static_cast<std::size_t>(j)].t) * h;
      }
    }
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues()(0);
  }

 private:
  std::vector<GridFunction> estimators_;
  std::vector<LogProfile> profiles_;
  double K_ = 0.0;
};

/// n i.i.d. draws inside a domain.
class IidSample {
 public:
  IidSample(const Domain& domain, std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("IidSample: empty sample");
    for (double x : points_) {
      if (!domain.contains(x)) throw std::out_of_range("IidSample: point outside the domain");
    }
  }
  std::size_t size() const noexcept { return points_.size(); }
  std::span<const double> points() const noexcept { return points_; }

 private:
  std::vector<double> points_;
};

/// (1/n) sum_i v(X_i) with v linearly interpolated between nodes.
inline double empirical_mean(const Domain& domain, std::span<const double> v, const IidSample& sample) {
  const GridFunction f(domain, std::vector<double>(v.begin(), v.end()));
  double s = 0.0;
  for (double x : sample.points()) s += f.at(x);
  return s / static_cast<double>(sample.size());
}

inline std::vector<double> t_lambda(const SimplexWeights& lambda, const DensityBank& bank) {
  if (lambda.size() != bank.size()) throw std::invalid_argument("t_lambda: weight/bank size mismatch");
  std::vector<double> out(bank.domain().num_nodes(), 0.0);
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto& t = bank.profile(k).t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda[k] * t[i];
  }
  return out;
}

/// log int e^{t} h.
inline double log_partition(const Domain& domain, std::span<const double> t) {
  // Shift by the maximum so that large tilts do not overflow.
  const double top = *std::max_element(t.begin(), t.end());
  std::vector<double> e(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) e[i] = std::exp(t[i] - top);
  return top + std::log(integrate(domain, e) * domain.reference_density());
}

inline double psi_lambda(const SimplexWeights& lambda, const DensityBank& bank) {
  return log_partition(bank.domain(), t_lambda(lambda, bank));
}

/// exp(t - log int e^t h) h.
inline GridFunction normalized_exponential(const Domain& domain, std::span<const double> t) {
  const double psi = log_partition(domain, t);
  std::vector<double> shifted(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) shifted[i] = t[i] - psi;
  return exp_times_reference(domain, shifted);
}

inline GridFunction density_aggregate_of(const SimplexWeights& lambda, const DensityBank& bank) {
  return normalized_exponential(bank.domain(), t_lambda(lambda, bank));
}

/// pen^D(lambda) = sum_k lambda_k psi_k - psi_lambda.
inline double pen_D(const SimplexWeights& lambda, const DensityBank& bank) {
  double s = 0.0;
  for (std::size_t k = 0; k < bank.size(); ++k) s += lambda[k] * bank.profile(k).psi;
  return s - psi_lambda(lambda, bank);
}

/// The same penalty written as sum_k lambda_k D(f^D_lambda || f_k).
inline double pen_D_kl(const SimplexWeights& lambda, const DensityBank& bank) {
  const GridFunction f = density_aggregate_of(lambda, bank);
  double s = 0.0;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    if (lambda[k] > 0.0) s += lambda[k] * kl_divergence(f, bank.estimator(k));
  }
  return s;
}

/// H^D_n as a function on the simplex, with c_k = (1/n) sum_i t_k(X_i)
/// precomputed from the sample.
class DCriterion {
 public:
  DCriterion(const DensityBank& bank, const IidSample& sample) : bank_(&bank) {
    for (std::size_t k = 0; k < bank.size(); ++k) {
      c_.push_back(empirical_mean(bank.domain(), bank.profile(k).t, sample));
    }
  }

  std::size_t size() const noexcept { return c_.size(); }
  std::span<const double> empirical_terms() const noexcept { return c_; }

  std::vector<double> t_of(std::span<const double> lambda) const {
    std::vector<double> out(bank_->domain().num_nodes(), 0.0);
    for (std::size_t k = 0; k < c_.size(); ++k) {
      if (lambda[k] == 0.0) continue;
      const auto& t = bank_->profile(k).t;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda[k] * t[i];
    }
    return out;
  }

  GridFunction aggregate(std::span<const double> lambda) const {
    return normalized_exponential(bank_->domain(), t_of(lambda));
  }

  /// (1/n) sum t_lambda(X_i) - psi_lambda/2 - sum_k lambda_k psi_k / 2.
  double value(std::span<const double> lambda) const {
    double lin = 0.0;
    for (std::size_t k = 0; k < c_.size(); ++k) lin += lambda[k] * (c_[k] - 0.5 * bank_->profile(k).psi);
    return lin - 0.5 * log_partition(bank_->domain(), t_of(lambda));
  }

  std::vector<double> gradient(std::span<const double> lambda) const {
    const GridFunction f = aggregate(lambda);
    std::vector<double> grad(c_.size());
    for (std::size_t k = 0; k < c_.size(); ++k) {
      grad[k] = c_[k] - 0.5 * inner(bank_->domain(), bank_->profile(k).t, f.values()) -
                0.5 * bank_->profile(k).psi;
    }
    return grad;
  }

 private:
  const DensityBank* bank_;
  std::vector<double> c_;
};

/// H^D_n(lambda) = <t_lambda, I_n> - psi_lambda - pen^D(lambda)/2.
inline double criterion_HD(const SimplexWeights& lambda, const DensityBank& bank, const IidSample& sample) {
  const std::vector<double> t = t_lambda(lambda, bank);
  return empirical_mean(bank.domain(), t, sample) - log_partition(bank.domain(), t) -
         0.5 * pen_D(lambda, bank);
}

struct DensityAggregate {
  OptimizerResult optimizer;
  SimplexWeights weights;
  GridFunction f_hat;
};

inline DensityAggregate aggregate_density(const DensityBank& bank, const IidSample& sample,
                                          const OptimizerOptions& options = {}) {
  const DCriterion crit(bank, sample);
  OptimizerResult res = maximize_on_simplex([&](std::span<const double> l) { return crit.value(l); },
                                            [&](std::span<const double> l) { return crit.gradient(l); },
                                            bank.size(), options);
  if (!res.converged) {
    throw ConvergenceError("aggregate_density: optimizer stopped with gap " + std::to_string(res.fw_gap), res);
  }
  GridFunction f_hat = crit.aggregate(res.weights.values());
  SimplexWeights w = res.weights;
  return {std::move(res), std::move(w), std::move(f_hat)};
}

/// H^D_n(hat) - H^D_n(probe) - D(f_hat || f_probe)/2.
inline double strong_concavity_margin(const DCriterion& crit, std::span<const double> hat,
                                      std::span<const double> probe) {
  return crit.value(hat) - crit.value(probe) -
         0.5 * kl_divergence(crit.aggregate(hat), crit.aggregate(probe));
}

/// S-criterion on a density bank, pairing g_k with the empirical measure.
inline SCriterion density_s_criterion(const DensityBank& bank, const IidSample& sample) {
  std::vector<std::vector<double>> g;
  std::vector<double> m;
  std::vector<double> p;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    g.push_back(bank.profile(k).g);
    m.push_back(bank.profile(k).m);
    p.push_back(empirical_mean(bank.domain(), bank.profile(k).g, sample));
  }
  return {bank.domain(), std::move(g), std::move(m), std::move(p)};
}

/// Maximize the S-criterion, then divide f^S_lambda by its mass.
inline DensityAggregate normalized_s_aggregate(const DensityBank& bank, const IidSample& sample,
                                               const OptimizerOptions& options = {}) {
  const SCriterion crit = density_s_criterion(bank, sample);
  OptimizerResult res = maximize_on_simplex([&](std::span<const double> l) { return crit.value(l); },
                                            [&](std::span<const double> l) { return crit.gradient(l); },
                                            bank.size(), options);
  if (!res.converged) {
    throw ConvergenceError("normalized_s_aggregate: optimizer stopped with gap " + std::to_string(res.fw_gap),
                           res);
  }
  const GridFunction f = crit.aggregate(res.weights.values());
  const double mass = integrate(f);
  GridFunction f_hat = f.map([mass](double v) { return v / mass; });
  SimplexWeights w = res.weights;
  return {std::move(res), std::move(w), std::move(f_hat)};
}

}  // namespace logagg
