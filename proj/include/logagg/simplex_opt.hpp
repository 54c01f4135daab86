#pragma once

// Concave maximization over the probability simplex by Frank-Wolfe with
// away steps and exact line search. The Frank-Wolfe gap
//   max_k dH/dlambda_k - lambda . grad H
// is an upper bound on max H - H(lambda) for concave H.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace logagg {

/// A point of the probability simplex.
class SimplexWeights {
 public:
  explicit SimplexWeights(std::vector<double> lambda) : lambda_(std::move(lambda)) {
    if (lambda_.empty()) throw std::invalid_argument("SimplexWeights: empty weight vector");
    double sum = 0.0;
    for (double v : lambda_) {
      if (!(v >= 0.0)) throw std::invalid_argument("SimplexWeights: negative or NaN entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw std::invalid_argument("SimplexWeights: entries sum to " + std::to_string(sum));
    }
  }

  static SimplexWeights uniform(std::size_t n) {
    if (n == 0) throw std::invalid_argument("SimplexWeights::uniform: n must be positive");
    return SimplexWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }
  static SimplexWeights vertex(std::size_t n, std::size_t k) {
    if (k >= n) throw std::out_of_range("SimplexWeights::vertex: index out of range");
    std::vector<double> v(n, 0.0);
    v[k] = 1.0;
    return SimplexWeights(std::move(v));
  }

  std::size_t size() const noexcept { return lambda_.size(); }
  double operator[](std::size_t k) const noexcept { return lambda_[k]; }
  std::span<const double> values() const noexcept { return lambda_; }

 private:
  std::vector<double> lambda_;
};

struct OptimizerOptions {
  double tol = 1e-8;
  int max_iter = 5000;
};

struct OptimizerResult {
  SimplexWeights weights = SimplexWeights::uniform(1);
  double objective = 0.0;
  double fw_gap = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective after each accepted iterate, starting with the initial point.
  std::vector<double> trace;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, OptimizerResult result)
      : std::runtime_error(what), result_(std::move(result)) {}
  const OptimizerResult& result() const noexcept { return result_; }

 private:
  OptimizerResult result_;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Clip tiny negatives and rescale so the entries sum to one.
inline void renormalize(std::vector<double>& v) {
  double sum = 0.0;
  for (double& x : v) {
    if (x < 0.0) x = 0.0;
    sum += x;
  }
  for (double& x : v) x /= sum;
}

inline double fw_gap(std::span<const double> lambda, std::span<const double> grad) {
  const double best = *std::max_element(grad.begin(), grad.end());
  return std::max(0.0, best - dot(lambda, grad));
}

}  // namespace detail

/// Maximize a concave differentiable objective over the simplex of dimension n.
/// objective: (std::span<const double>) -> double
/// gradient:  (std::span<const double>) -> std::vector<double>
template <class Objective, class Gradient>
OptimizerResult maximize_on_simplex(Objective&& objective, Gradient&& gradient, std::size_t n,
                                    const OptimizerOptions& options = {}) {
  if (n == 0) throw std::invalid_argument("maximize_on_simplex: n must be positive");
  if (!(options.tol > 0.0) || options.max_iter < 0) {
    throw std::invalid_argument("maximize_on_simplex: invalid options");
  }
  std::vector<double> lambda(n, 1.0 / static_cast<double>(n));
  double value = objective(std::span<const double>(lambda));
  std::vector<double> grad = gradient(std::span<const double>(lambda));

  OptimizerResult out;
  out.trace.push_back(value);
  int iter = 0;
  double gap = detail::fw_gap(lambda, grad);

  std::vector<double> direction(n);
  std::vector<double> trial(n);
  while (gap > options.tol && iter < options.max_iter) {
    // Toward-vertex candidate: largest partial derivative, lowest index on ties.
    const auto s = static_cast<std::size_t>(std::max_element(grad.begin(), grad.end()) - grad.begin());
    // Away-vertex candidate: smallest partial derivative among active coordinates.
    std::size_t a = n;
    for (std::size_t k = 0; k < n; ++k) {
      if (lambda[k] > 0.0 && (a == n || grad[k] < grad[a])) a = k;
    }
    const double mean = detail::dot(lambda, grad);
    const double away_gap = mean - grad[a];

    double gamma_max = 1.0;
    bool away = false;
    if (gap >= away_gap || lambda[a] >= 1.0) {
      for (std::size_t k = 0; k < n; ++k) direction[k] = -lambda[k];
      direction[s] += 1.0;
    } else {
      away = true;
      for (std::size_t k = 0; k < n; ++k) direction[k] = lambda[k];
      direction[a] -= 1.0;
      gamma_max = lambda[a] / (1.0 - lambda[a]);
    }

    auto slope = [&](double gamma) {
      for (std::size_t k = 0; k < n; ++k) trial[k] = std::max(0.0, lambda[k] + gamma * direction[k]);
      const std::vector<double> g = gradient(std::span<const double>(trial));
      return detail::dot(g, direction);
    };

    // The restriction to the segment is concave, so its derivative is
    // decreasing; locate the sign change by Illinois regula falsi, which keeps
    // a bracket like bisection but converges superlinearly.
    double gamma = gamma_max;
    const double slope_hi = slope(gamma_max);
    if (slope_hi < 0.0) {
      double lo = 0.0;
      double hi = gamma_max;
      double s_lo = away ? away_gap : gap;
      double s_hi = slope_hi;
      const double scale = s_lo;
      int side = 0;
      gamma = 0.5 * (lo + hi);
      for (int b = 0; b < 200; ++b) {
        gamma = (lo * s_hi - hi * s_lo) / (s_hi - s_lo);
        if (!(gamma > lo && gamma < hi)) gamma = 0.5 * (lo + hi);
        const double sg = slope(gamma);
        if (std::abs(sg) <= 1e-14 * scale || hi - lo <= 1e-15 * gamma_max) break;
        if (sg > 0.0) {
          lo = gamma;
          s_lo = sg;
          if (side == 1) s_hi *= 0.5;
          side = 1;
        } else {
          hi = gamma;
          s_hi = sg;
          if (side == -1) s_lo *= 0.5;
          side = -1;
        }
      }
    }

    std::vector<double> next(n);
    for (std::size_t k = 0; k < n; ++k) next[k] = lambda[k] + gamma * direction[k];
    if (away && gamma == gamma_max) next[a] = 0.0;
    detail::renormalize(next);
    const double next_value = objective(std::span<const double>(next));
    // An exact line search on a concave function cannot descend; a drop
    // beyond rounding means the objective is not concave along the segment.
    if (next_value < value - 1e-12 * (1.0 + std::abs(value))) break;
    lambda.swap(next);
    value = next_value;
    grad = gradient(std::span<const double>(lambda));
    gap = detail::fw_gap(lambda, grad);
    out.trace.push_back(value);
    ++iter;
  }

  out.weights = SimplexWeights(lambda);
  out.objective = value;
  out.fw_gap = gap;
  out.iterations = iter;
  out.converged = gap <= options.tol;
  return out;
}

/// Largest discrepancy between central finite differences and the analytic
/// gradient along the feasible directions e_j - e_i.
template <class Objective, class Gradient>
double gradient_check(Objective&& objective, Gradient&& gradient, const SimplexWeights& lambda,
                      double h_step) {
  const std::size_t n = lambda.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (lambda[k] < h_step) throw std::invalid_argument("gradient_check: weights must be >= h_step");
  }
  const std::vector<double> base(lambda.values().begin(), lambda.values().end());
  const std::vector<double> grad = gradient(std::span<const double>(base));
  double worst = 0.0;
  std::vector<double> plus(n);
  std::vector<double> minus(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      plus = base;
      minus = base;
      plus[j] += h_step;
      plus[i] -= h_step;
      minus[j] -= h_step;
      minus[i] += h_step;
      const double fd = (objective(std::span<const double>(plus)) - objective(std::span<const double>(minus))) /
                        (2.0 * h_step);
      worst = std::max(worst, std::abs(fd - (grad[j] - grad[i])));
    }
  }
  return worst;
}

}  // namespace logagg
