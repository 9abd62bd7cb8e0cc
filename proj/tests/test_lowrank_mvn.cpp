#include "ssn/lowrank_mvn.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <gtest/gtest.h>

#include "ssn/errors.hpp"
#include "ssn/rng.hpp"
#include "test_support.hpp"

namespace ssn {
namespace {

using testing::random_gaussian;
using testing::relative_error;

LowRankGaussian make(std::vector<double> mean, std::vector<double> factor,
                     std::vector<double> raw, std::size_t s, std::size_t c, std::size_t r) {
  const std::size_t d = s * c;
  return LowRankGaussian(Tensor({d}, std::move(mean)), Tensor({d, r}, std::move(factor)),
                         Tensor({d}, std::move(raw)), s, c, r);
}

TEST(Softplus, InverseRoundTripsAndIsStable) {
  for (double y : {1e-8, 1e-3, 0.5, 1.0, 7.0, 60.0}) {
    EXPECT_NEAR(softplus(softplus_inverse(y)), y, 1e-14 * std::max(1.0, y));
  }
  EXPECT_EQ(softplus(-800.0), 0.0);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_EQ(softplus(kDiagRawAtFloor) + kDiagFloor, kDiagFloor);
  EXPECT_THROW(softplus_inverse(0.0), ValidationError);
}

TEST(LowRankGaussian, LargeNegativeRawGivesFloor) {
  const auto g = make({0, 0}, {0, 0}, {-1e6, -1e6}, 2, 1, 1);
  EXPECT_NEAR(g.diag(0), 1e-5, 1e-20);
  EXPECT_NEAR(g.diag(1), 1e-5, 1e-20);
}

TEST(LowRankGaussian, ToyConfigurationIsValid) {
  std::mt19937_64 gen(3);
  const auto g = random_gaussian(gen, 21, 1, 2);
  EXPECT_EQ(g.dim(), 21u);
  EXPECT_EQ(g.rank(), 2u);
}

TEST(LowRankGaussian, RejectsBadShapesAndValues) {
  EXPECT_THROW(make({0, 0}, {0, 0, 0, 0}, {0, 0}, 2, 1, 1), DimensionError);  // factor is [2, 2]
  EXPECT_THROW(LowRankGaussian(Tensor({2}), Tensor({2, 2}), Tensor({2}), 2, 1, 1), DimensionError);
  EXPECT_THROW(make({0, NAN}, {0, 0}, {0, 0}, 2, 1, 1), ValidationError);
  EXPECT_THROW(make({0, 0}, {0, INFINITY}, {0, 0}, 2, 1, 1), ValidationError);
  EXPECT_THROW(LowRankGaussian(Tensor({0}), Tensor({0, 1}), Tensor({0}), 0, 1, 1), ValidationError);
}

TEST(Sample, DegenerateCovarianceReturnsMean) {
  const auto g = make({1.5, -2.0}, {0, 0}, {kDiagRawAtFloor, kDiagRawAtFloor}, 2, 1, 1);
  const auto batch = sample(g, 3, 11);
  // 6-sigma band of the floor standard deviation.
  const double tol = 6.0 * std::sqrt(kDiagFloor);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_NEAR(batch.values(m, 0), 1.5, tol);
    EXPECT_NEAR(batch.values(m, 1), -2.0, tol);
  }
}

TEST(Sample, StandardNormalMeanWithinStandardError) {
  const double raw = softplus_inverse(1.0 - kDiagFloor);
  const auto g = make({0}, {0}, {raw}, 1, 1, 1);
  EXPECT_NEAR(g.diag(0), 1.0, 1e-15);
  const std::size_t n = 100000;
  const auto batch = sample(g, n, 5);
  double mean = 0.0;
  for (double v : batch.values.data()) mean += v;
  mean /= static_cast<double>(n);
  EXPECT_LT(std::abs(mean), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Sample, SharedFactorGivesNearPerfectCorrelation) {
  const auto g = make({0, 0}, {1, 1}, {kDiagRawAtFloor, kDiagRawAtFloor}, 2, 1, 1);
  const std::size_t n = 100000;
  const auto batch = sample(g, n, 9);
  double sxx = 0, syy = 0, sxy = 0, sx = 0, sy = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const double x = batch.values(m, 0), y = batch.values(m, 1);
    sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
  }
  const double nn = static_cast<double>(n);
  const double cov = sxy / nn - sx * sy / (nn * nn);
  const double corr = cov / std::sqrt((sxx / nn - sx * sx / (nn * nn)) * (syy / nn - sy * sy / (nn * nn)));
  EXPECT_GE(corr, 0.99);
}

TEST(Sample, SameSeedIsBitIdentical) {
  std::mt19937_64 gen(1);
  const auto g = random_gaussian(gen, 6, 2, 3);
  const auto a = sample(g, 50, 1234);
  const auto b = sample(g, 50, 1234);
  EXPECT_EQ(a.values, b.values);
  const auto c = sample(g, 50, 1235);
  EXPECT_NE(a.values, c.values);
}

TEST(Sample, RecordedNoiseReproducesSamples) {
  std::mt19937_64 gen(2);
  const auto g = random_gaussian(gen, 5, 1, 2);
  const auto batch = sample(g, 4, 77);
  for (std::size_t m = 0; m < 4; ++m) {
    EXPECT_EQ(batch.noise[m].seed, 77u);
    const auto eta = realize(g, batch.noise[m]);
    for (std::size_t i = 0; i < g.dim(); ++i) EXPECT_EQ(eta[i], batch.values(m, i));
  }
}

TEST(Sample, RejectsZeroCount) {
  const auto g = make({0}, {0}, {0}, 1, 1, 1);
  EXPECT_THROW(sample(g, 0, 1), ValidationError);
}

// Empirical mean within 4 SE and covariance within 5 SE of P P^T + D.
TEST(Sample, MomentsMatchParameters) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 4; ++trial) {
    const auto g = random_gaussian(gen, 3, 1, 2);
    const std::size_t n = 40000, d = g.dim();
    const auto batch = sample(g, n, 100 + static_cast<std::uint64_t>(trial));
    const Tensor cov = dense_covariance(g);
    std::vector<double> mean(d, 0.0);
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t i = 0; i < d; ++i) mean[i] += batch.values(m, i);
    for (double& v : mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_LT(std::abs(mean[i] - g.mean()[i]), 4.0 * std::sqrt(cov(i, i) / n));
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double c = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
          c += (batch.values(m, i) - g.mean()[i]) * (batch.values(m, j) - g.mean()[j]);
        }
        c /= static_cast<double>(n);
        // Var of x_i x_j under a Gaussian is S_ii S_jj + S_ij^2.
        const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
        EXPECT_LT(std::abs(c - cov(i, j)), 5.0 * se) << i << "," << j;
      }
    }
  }
}

TEST(Sample, FactorVarianceFractionConverges) {
  const auto g = make({0, 0, 0}, {2, 0, 1, 1, 0, 3}, {0.0, 0.5, -1.0}, 3, 1, 2);
  double factor_trace = 0.0, total_trace = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 2; ++k) factor_trace += g.factor()(i, k) * g.factor()(i, k);
    total_trace += g.diag(i);
  }
  total_trace += factor_trace;
  const std::size_t n = 200000;
  const auto batch = sample(g, n, 8);
  double factor_energy = 0.0, total_energy = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    const auto& noise = batch.noise[m];
    for (std::size_t i = 0; i < 3; ++i) {
      double f = 0.0;
      for (std::size_t k = 0; k < 2; ++k) f += g.factor()(i, k) * noise.eps_factor[k];
      factor_energy += f * f;
      total_energy += batch.values(m, i) * batch.values(m, i);
    }
  }
  EXPECT_NEAR(factor_energy / total_energy, factor_trace / total_trace, 0.01);
}

TEST(MarginalVariance, ZeroFactorIsDiagonal) {
  const auto g = make({0, 0}, {0, 0}, {0.3, -0.4}, 2, 1, 1);
  const Tensor v = marginal_variance(g);
  EXPECT_EQ(v[0], g.diag(0));
  EXPECT_EQ(v[1], g.diag(1));
}

TEST(MarginalVariance, DirectFormula) {
  const double raw = softplus_inverse(0.5 - kDiagFloor);
  const auto g = make({0}, {1, 2}, {raw}, 1, 1, 2);
  EXPECT_NEAR(marginal_variance(g)[0], 5.5, 1e-14);
}

TEST(MarginalVariance, MatchesDenseDiagonal) {
  std::mt19937_64 gen(4);
  const auto g = random_gaussian(gen, 10, 3, 4);
  const Tensor v = marginal_variance(g);
  const Tensor cov = dense_covariance(g);
  for (std::size_t i = 0; i < g.dim(); ++i) EXPECT_NEAR(v[i], cov(i, i), 1e-12);
}

TEST(LogProb, StandardNormalAtZero) {
  const double raw = softplus_inverse(1.0 - kDiagFloor);
  const auto g = make({0}, {0}, {raw}, 1, 1, 1);
  const std::vector<double> x{0.0};
  EXPECT_NEAR(log_prob(g, x), -0.5 * std::log(2.0 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(log_prob(g, x), -0.9189385332046727, 1e-12);
}

TEST(LogProb, MatchesDenseOracleOnRandomInstances) {
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::size_t> pix(1, 16), cls(1, 4), rk(1, 8);
  std::normal_distribution<double> normal(0.0, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t s = pix(gen), c = cls(gen);
    while (s * c > 64) s = pix(gen);
    const auto g = random_gaussian(gen, s, c, rk(gen));
    std::vector<double> x(g.dim());
    for (double& v : x) v = normal(gen);
    const double fast = log_prob(g, x);
    const double dense = dense_log_prob(g, x);
    EXPECT_LT(relative_error(fast, dense), 1e-6) << "trial " << trial;
  }
}

TEST(LogProb, MaximalAtMean) {
  std::mt19937_64 gen(5);
  const auto g = random_gaussian(gen, 4, 2, 3);
  const std::vector<double> mu(g.mean().data().begin(), g.mean().data().end());
  // -0.5 logdet(2 pi Sigma) via the dense oracle
  const Tensor cov = dense_covariance(g);
  Eigen::Map<const Eigen::MatrixXd> sigma(cov.data().data(), 8, 8);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double at_mean = log_prob(g, mu);
  EXPECT_NEAR(at_mean, -0.5 * (8 * std::log(2 * std::numbers::pi) + log_det), 1e-10);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (int k = 0; k < 20; ++k) {
    auto x = mu;
    for (double& v : x) v += normal(gen);
    EXPECT_LT(log_prob(g, x), at_mean);
  }
}

TEST(LogProb, RejectsBadInput) {
  const auto g = make({0, 0}, {1, 1}, {0, 0}, 2, 1, 1);
  const std::vector<double> short_x{0.0};
  const std::vector<double> nan_x{0.0, NAN};
  EXPECT_THROW(log_prob(g, short_x), DimensionError);
  EXPECT_THROW(log_prob(g, nan_x), ValidationError);
}

TEST(DenseCovariance, ZeroFactorIsDiagonal) {
  const auto g = make({0, 0, 0}, {0, 0, 0}, {0.1, 0.2, 0.3}, 3, 1, 1);
  const Tensor cov = dense_covariance(g);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(cov(i, j), i == j ? g.diag(i) : 0.0);
}

TEST(DenseCovariance, CholeskySucceedsForRandomSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 gen(seed);
    // Large factor entries and tiny diagonals stress conditioning.
    const auto g = random_gaussian(gen, 8, 2, 3, 5.0);
    const Tensor cov = dense_covariance(g);
    Eigen::Map<const Eigen::MatrixXd> sigma(cov.data().data(), 16, 16);
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(sigma).info(), Eigen::Success) << "seed " << seed;
  }
}

TEST(DenseCovariance, SizeGuard) {
  const std::size_t d = kDenseLimit + 1;
  const LowRankGaussian g(Tensor({d}), Tensor({d, 1}), Tensor({d}), d, 1, 1);
  EXPECT_THROW(dense_covariance(g), SizeGuardError);
  EXPECT_NO_THROW(log_prob(g, std::vector<double>(d, 0.0)));
}

TEST(Rng, FixedSequenceAndNormalMoments) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng r(7);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    ss += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(ss / n, 1.0, 0.02);
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
}

}  // namespace
}  // namespace ssn
