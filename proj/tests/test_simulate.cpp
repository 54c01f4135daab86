#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace logagg;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(Rng, DeterministicPerSeedAndStream) {
  Rng a({1, 2});
  Rng b({1, 2});
  Rng c({1, 3});
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.bits();
    EXPECT_EQ(x, b.bits());
    differs = differs || x != c.bits();
  }
  EXPECT_TRUE(differs);
  Rng u({5, 0});
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform01();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng r({9, 0});
  double s = 0.0;
  double s2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(SampleIid, UniformMean) {
  const IidSample s = sample_iid(GridFunction::constant(Domain::unit(64), 1.0), 10000, {1, 0});
  double mean = 0.0;
  for (double x : s.points()) mean += x;
  mean /= 10000.0;
  EXPECT_NEAR(mean, 0.5, 3.0 * (1.0 / std::sqrt(12.0)) / 100.0);
}

TEST(SampleIid, LinearDensityMatchesSqrtInversion) {
  const auto f = GridFunction::tabulate(Domain::unit(64), [](double x) { return 2.0 * x; });
  const std::size_t n = 10000;
  const IidSample s = sample_iid(f, n, {2, 0});
  // The piecewise-linear CDF is exact for a linear density, so draws are sqrt(U) for the same U.
  Rng rng({2, 0});
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    EXPECT_NEAR(s.points()[i], std::sqrt(u), 1e-12);
    mean += s.points()[i];
  }
  mean /= static_cast<double>(n);
  EXPECT_NEAR(mean, 2.0 / 3.0, 3.0 * std::sqrt(1.0 / 18.0 / static_cast<double>(n)));
}

TEST(SampleIid, KolmogorovSmirnov) {
  const Domain d = Domain::unit(1024);
  const auto u = GridFunction::tabulate(d, [](double x) { return 0.8 * std::sin(2.0 * kPi * x); });
  const GridFunction f = normalized_exponential(d, u.values());
  const std::size_t n = 20000;
  const IidSample s = sample_iid(f, n, {3, 0});
  std::vector<double> pts(s.points().begin(), s.points().end());
  std::sort(pts.begin(), pts.end());
  // Reference CDF by fine trapezoid accumulation of the interpolant.
  std::vector<double> cdf(d.num_nodes(), 0.0);
  for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] = cdf[i - 1] + 0.5 * d.step() * (f[i - 1] + f[i]);
  auto F = [&](double x) {
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(x / d.step()), d.grid_size() - 1);
    const double t = x - d.node(i);
    const double slope = (f[i + 1] - f[i]) / d.step();
    return (cdf[i] + f[i] * t + 0.5 * slope * t * t) / cdf.back();
  };
  double ks = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fx = F(pts[i]);
    ks = std::max({ks, std::abs(fx - static_cast<double>(i) / n), std::abs(fx - static_cast<double>(i + 1) / n)});
  }
  EXPECT_LE(ks, 1.95 / std::sqrt(static_cast<double>(n)));
}

TEST(SampleIid, Deterministic) {
  const auto f = GridFunction::tabulate(Domain::unit(64), [](double x) { return 2.0 * x; });
  const IidSample a = sample_iid(f, 100, {4, 7});
  const IidSample b = sample_iid(f, 100, {4, 7});
  EXPECT_TRUE(std::equal(a.points().begin(), a.points().end(), b.points().begin()));
}

TEST(GaussianPath, WhiteNoiseLagOne) {
  const auto f = GridFunction::constant(Domain::circle(256), 1.0 / (2.0 * kPi));
  const GaussianSampler sampler(f, 64);
  const int paths = 10000;
  double s = 0.0;
  double s2 = 0.0;
  for (int p = 0; p < paths; ++p) {
    const double g = empirical_autocov(sampler.sample({5, static_cast<std::uint64_t>(p)}), 1);
    s += g;
    s2 += g * g;
  }
  const double mean = s / paths;
  const double sd = std::sqrt((s2 / paths - mean * mean) / paths);
  EXPECT_LE(std::abs(mean), 3.0 * sd);
}

TEST(GaussianPath, CovarianceFactorAndDeterminism) {
  const auto f = GridFunction::tabulate(Domain::circle(256), [](double y) { return (1.0 + std::cos(y)) / (2.0 * kPi); });
  const GaussianPath a = sample_gaussian_path(f, 32, {6, 1});
  const GaussianPath b = sample_gaussian_path(f, 32, {6, 1});
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_THROW(GaussianSampler(f, 5000), std::invalid_argument);
  EXPECT_THROW(GaussianSampler(GridFunction::constant(Domain::circle(64), 0.0), 8), std::invalid_argument);
  EXPECT_THROW(GaussianSampler(GridFunction::constant(Domain::circle(64), -1.0), 8), std::invalid_argument);
  EXPECT_EQ(f.min(), 0.0);
}

TEST(Bump, ShapeProperties) {
  EXPECT_DOUBLE_EQ(phi_sup_norm(), std::exp(-16.0 / (kPi * kPi)));
  double sup = 0.0;
  for (int i = 0; i <= 100000; ++i) sup = std::max(sup, std::abs(phi(kPi * i / 100000.0)));
  EXPECT_NEAR(sup, phi_sup_norm(), 1e-9);
  EXPECT_NEAR(detail::simpson([](double x) { return phi(x); }, 0.0, kPi, 1 << 14), 0.0, 1e-9);
  EXPECT_EQ(phi(0.0), 0.0);
  EXPECT_EQ(phi(kPi / 2.0), 0.0);
  EXPECT_EQ(phi(kPi), 0.0);
}

TEST(Bump, SquaredIntegralRegression) {
  const double coarse = phi_sq_integral(1 << 13);
  const double fine = phi_sq_integral(1 << 15);
  EXPECT_NEAR(coarse, fine, 1e-8);
  EXPECT_NEAR(fine, kPhiSqIntegral, 1e-10);
}

TEST(Bump, DerivativesMatchFiniteDifferences) {
  for (double x : {0.3, 0.7, 1.2, 1.9, 2.5}) {
    const double h = 1e-5;
    const BumpValue b = phi_eval(x);
    EXPECT_NEAR(b.d1, (phi(x + h) - phi(x - h)) / (2 * h), 1e-6);
    EXPECT_NEAR(b.d2, (phi(x + h) - 2 * phi(x) + phi(x - h)) / (h * h), 1e-3);
  }
}

TEST(Hypercube, Dimension) {
  EXPECT_EQ(hypercube_dimension(2), 8);
  EXPECT_EQ(hypercube_dimension(16), 32);
  EXPECT_EQ(hypercube_dimension(3), 13);
  EXPECT_THROW(hypercube_dimension(1), std::invalid_argument);
}

TEST(Codewords, SmallExhaustive) {
  const auto w = select_codewords(8, 2, {});
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(std::count(w[0].begin(), w[0].end(), 1), 0);
  EXPECT_GE(std::count(w[1].begin(), w[1].end(), 1), 2);
  EXPECT_THROW(select_codewords(8, 3, {}), std::invalid_argument);
}

TEST(Codewords, DistanceCertificateAndDeterminism) {
  for (int D : {13, 16, 24, 32}) {
    const std::size_t N = static_cast<std::size_t>(std::floor(std::pow(2.0, D / 8.0)));
    const auto w = select_codewords(D, N, {11, 0});
    ASSERT_EQ(w.size(), N);
    EXPECT_EQ(std::count(w[0].begin(), w[0].end(), 1), 0);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = i + 1; j < N; ++j) EXPECT_GE(hamming_distance(w[i], w[j]), static_cast<std::size_t>((D + 3) / 4));
    }
    EXPECT_EQ(w, select_codewords(D, N, {11, 0}));
  }
}

TEST(DensityHypercube, Certificates) {
  for (std::size_t N : {2u, 16u}) {
    const std::size_t n = 10000;
    const double x = 1.0;
    const HypercubeFamily fam = build_density_hypercube(N, 1.0, n, x, 1024, {3, 0});
    const double T = fam.amplitude;
    const double D = fam.D;
    EXPECT_NEAR(T, D * std::sqrt((std::log(static_cast<double>(N)) + x) / (3.0 * n)), 1e-15);
    for (std::size_t i = 0; i < fam.members[0].size(); ++i) EXPECT_EQ(fam.members[0][i], 1.0);
    for (std::size_t i = 0; i < N; ++i) {
      const GridFunction& f = fam.members[i];
      EXPECT_NEAR(integrate(f), 1.0, 1e-9);
      EXPECT_GE(f.min(), 1.0 - T / D - 1e-15);
      EXPECT_LE(f.max(), 1.0 + T / D + 1e-15);
      const double budget = std::log(static_cast<double>(N)) + x;
      EXPECT_LE(n * kl_divergence(f, fam.members[0]), budget / 3.0 * (1.0 + 1e-6));
      EXPECT_NEAR(n * T * T / (D * D), budget / 3.0, 1e-9);
      for (std::size_t j = i + 1; j < N; ++j) {
        EXPECT_GE(hellinger_sq(f, fam.members[j]), 4.0 * std::pow(2.0, -8.5) / 3.0 * budget / n);
      }
    }
  }
}

TEST(DensityHypercube, Preconditions) {
  EXPECT_THROW(build_density_hypercube(16, 1.0, 3, 1.0), std::invalid_argument);
  EXPECT_THROW(build_density_hypercube(16, 1.0, 10000, 1.0, 1000), std::invalid_argument);
}

TEST(SpectralHypercube, CertificatesSmall) {
  const std::size_t N = 2;
  const std::size_t n = 200000;
  const HypercubeFamily fam = build_spectral_hypercube(N, 1.0, 1.0, n, 1.0, 4096, {4, 0});
  EXPECT_EQ(fam.branch, "integer");
  const double s = fam.amplitude;
  const double cr = c_r_constant(1.0).value;
  for (std::size_t i = 0; i < N; ++i) {
    const GridFunction& f = fam.members[i];
    EXPECT_NEAR(integrate(f), 1.0, 1e-9);
    EXPECT_GE(2.0 * kPi * f.min(), 1.0 - s * phi_sup_norm() - 1e-12);
    EXPECT_LE(2.0 * kPi * f.max(), 1.0 + s * phi_sup_norm() + 1e-12);
    const LogProfile p = log_decompose(f);
    EXPECT_LE(sobolev_norm(GridFunction(f.domain(), p.g), 1.0, default_k_max(f.domain())).norm, 1.0 / cr);
  }
  const double budget = std::log(static_cast<double>(N)) + 1.0;
  EXPECT_GE(hellinger_sq(fam.members[0], fam.members[1]), 4.0 * std::pow(8.0, -2.5) / 3.0 * budget / n);
  const GaussianKl kl = gaussian_kl_to_white_noise(fam.members[1].map([](double v) { return 2.0 * kPi * v; }), n);
  EXPECT_FALSE(kl.exact);
  EXPECT_LE(kl.kl, budget / 3.0);
}

TEST(SpectralHypercube, BranchesAndPreconditions) {
  EXPECT_EQ(spectral_family_constants(1.5, 1.0).branch, "non-integer");
  EXPECT_EQ(spectral_family_constants(2.0, 1.0).branch, "integer");
  EXPECT_THROW(spectral_family_constants(2.5, 1.0), std::invalid_argument);
  EXPECT_THROW(build_spectral_hypercube(16, 1.0, 1.0, 1000, 1.0), std::invalid_argument);
}

TEST(GaussianKl, ExactForSmallNAndConservativeAbove) {
  const auto l = GridFunction::tabulate(Domain::circle(512), [](double y) { return 1.0 + 0.3 * std::cos(y); });
  const GaussianKl exact = gaussian_kl_to_white_noise(l, 100, 4096);
  EXPECT_TRUE(exact.exact);
  EXPECT_NEAR(exact.kl, -0.5 * toeplitz_logdet(toeplitz_build(l, 100)), 1e-12);
  const GaussianKl ext = gaussian_kl_to_white_noise(l, 100, 40);
  EXPECT_FALSE(ext.exact);
  EXPECT_GE(ext.kl, exact.kl - 1e-12);
  EXPECT_NEAR(ext.kl, exact.kl, 1e-6);
}
