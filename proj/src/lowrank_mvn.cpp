#include "ssn/lowrank_mvn.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ssn/errors.hpp"
#include "ssn/rng.hpp"

namespace ssn {

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ValidationError("softplus_inverse needs a positive argument");
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void expect_shape(const Tensor& t, const std::vector<std::size_t>& want, const char* name) {
  if (t.shape() != want) {
    Tensor probe(want);
    throw DimensionError(std::string(name) + " has shape " + t.shape_string() + ", expected " +
                         probe.shape_string());
  }
}

void expect_finite(const Tensor& t, const char* name) {
  if (!t.all_finite()) throw ValidationError(std::string(name) + " contains non-finite values");
}

// In-place lower Cholesky of a small row-major n x n matrix. Returns false if
// a pivot is not strictly positive.
bool small_cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
    for (std::size_t k = j + 1; k < n; ++k) a[j * n + k] = 0.0;
  }
  return true;
}

}  // namespace

LowRankGaussian::LowRankGaussian(Tensor mean, Tensor factor, Tensor diag_raw, std::size_t pixels,
                                 std::size_t classes, std::size_t rank)
    : mean_(std::move(mean)),
      factor_(std::move(factor)),
      diag_raw_(std::move(diag_raw)),
      pixels_(pixels),
      classes_(classes),
      rank_(rank) {
  if (pixels_ == 0 || classes_ == 0 || rank_ == 0) {
    throw ValidationError("S, C and R must all be at least 1");
  }
  const std::size_t n = pixels_ * classes_;
  expect_shape(mean_, {n}, "mean");
  expect_shape(factor_, {n, rank_}, "factor");
  expect_shape(diag_raw_, {n}, "diag_raw");
  expect_finite(mean_, "mean");
  expect_finite(factor_, "factor");
  expect_finite(diag_raw_, "diag_raw");
}

Tensor LowRankGaussian::effective_diag() const {
  Tensor out({dim()});
  for (std::size_t i = 0; i < dim(); ++i) out[i] = diag(i);
  return out;
}

void realize(const LowRankGaussian& dist, const NoiseDraw& noise, std::span<double> out) {
  const std::size_t n = dist.dim();
  const std::size_t r = dist.rank();
  if (noise.eps_factor.size() != r || noise.eps_diag.size() != n || out.size() != n) {
    throw DimensionError("noise draw does not match distribution dimensions");
  }
  const auto& mean = dist.mean();
  const auto& factor = dist.factor();
  for (std::size_t i = 0; i < n; ++i) {
    double v = mean[i];
    for (std::size_t k = 0; k < r; ++k) v += factor(i, k) * noise.eps_factor[k];
    out[i] = v + std::sqrt(dist.diag(i)) * noise.eps_diag[i];
  }
}

std::vector<double> realize(const LowRankGaussian& dist, const NoiseDraw& noise) {
  std::vector<double> out(dist.dim());
  realize(dist, noise, out);
  return out;
}

std::vector<NoiseDraw> draw_noise(const LowRankGaussian& dist, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample count must be at least 1");
  std::vector<NoiseDraw> noise;
  noise.reserve(n);
  Rng rng(seed);
  for (std::size_t m = 0; m < n; ++m) {
    NoiseDraw draw{std::vector<double>(dist.rank()), std::vector<double>(dist.dim()), seed};
    for (double& e : draw.eps_factor) e = rng.normal();
    for (double& e : draw.eps_diag) e = rng.normal();
    noise.push_back(std::move(draw));
  }
  return noise;
}

SampleBatch sample(const LowRankGaussian& dist, std::size_t n, std::uint64_t seed) {
  const std::size_t d = dist.dim();
  SampleBatch batch{Tensor({n, d}), draw_noise(dist, n, seed)};
  for (std::size_t m = 0; m < n; ++m) {
    realize(dist, batch.noise[m], batch.values.data().subspan(m * d, d));
  }
  return batch;
}

Tensor marginal_variance(const LowRankGaussian& dist) {
  Tensor out({dist.dim()});
  const auto& factor = dist.factor();
  for (std::size_t i = 0; i < dist.dim(); ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < dist.rank(); ++k) v += factor(i, k) * factor(i, k);
    out[i] = v + dist.diag(i);
  }
  return out;
}

double log_prob(const LowRankGaussian& dist, std::span<const double> logits) {
  const std::size_t n = dist.dim();
  const std::size_t r = dist.rank();
  if (logits.size() != n) throw DimensionError("logits length does not match S*C");
  for (double v : logits) {
    if (!std::isfinite(v)) throw ValidationError("logits contain non-finite values");
  }
  const auto& factor = dist.factor();

  // capacitance = I + P^T D^-1 P, b = P^T D^-1 (x - mu)
  std::vector<double> cap(r * r, 0.0);
  std::vector<double> b(r, 0.0);
  double log_det_d = 0.0;
  double quad_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = dist.diag(i);
    const double inv_d = 1.0 / d;
    const double dev = logits[i] - dist.mean()[i];
    log_det_d += std::log(d);
    quad_d += dev * dev * inv_d;
    for (std::size_t a = 0; a < r; ++a) {
      const double pa = factor(i, a) * inv_d;
      b[a] += pa * dev;
      for (std::size_t c = 0; c <= a; ++c) cap[a * r + c] += pa * factor(i, c);
    }
  }
  for (std::size_t a = 0; a < r; ++a) {
    cap[a * r + a] += 1.0;
    for (std::size_t c = 0; c < a; ++c) cap[c * r + a] = cap[a * r + c];
  }

  std::vector<double> chol = cap;
  double jitter = 0.0;
  bool ok = small_cholesky(chol, r);
  for (int attempt = 0; !ok && attempt < 4; ++attempt) {
    jitter = attempt == 0 ? 1e-10 : jitter * 10.0;
    chol = cap;
    for (std::size_t a = 0; a < r; ++a) chol[a * r + a] += jitter;
    ok = small_cholesky(chol, r);
  }
  if (!ok) {
    double lo = cap[0], hi = cap[0];
    for (std::size_t a = 0; a < r; ++a) {
      lo = std::min(lo, cap[a * r + a]);
      hi = std::max(hi, cap[a * r + a]);
    }
    std::ostringstream msg;
    msg << "capacitance matrix not positive definite after jitter " << jitter
        << " (rank " << r << ", diagonal range [" << lo << ", " << hi << "], ratio " << hi / lo
        << ")";
    throw NumericalError(msg.str());
  }

  // Forward solve L z = b; then b^T K^-1 b = |z|^2.
  double log_det_cap = 0.0;
  double quad_cap = 0.0;
  std::vector<double> z(r);
  for (std::size_t a = 0; a < r; ++a) {
    double s = b[a];
    for (std::size_t c = 0; c < a; ++c) s -= chol[a * r + c] * z[c];
    z[a] = s / chol[a * r + a];
    quad_cap += z[a] * z[a];
    log_det_cap += 2.0 * std::log(chol[a * r + a]);
  }

  const double quad = quad_d - quad_cap;
  const double log_det = log_det_d + log_det_cap;
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

Tensor dense_covariance(const LowRankGaussian& dist) {
  const std::size_t n = dist.dim();
  if (n > kDenseLimit) {
    throw SizeGuardError("dense covariance refused: S*C = " + std::to_string(n) + " exceeds " +
                         std::to_string(kDenseLimit));
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> p(
      dist.factor().data().data(), static_cast<Eigen::Index>(n),
      static_cast<Eigen::Index>(dist.rank()));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cov = p * p.transpose();
  for (std::size_t i = 0; i < n; ++i) cov(i, i) += dist.diag(i);
  return Tensor({n, n}, std::vector<double>(cov.data(), cov.data() + cov.size()));
}

double dense_log_prob(const LowRankGaussian& dist, std::span<const double> logits) {
  const std::size_t n = dist.dim();
  if (logits.size() != n) throw DimensionError("logits length does not match S*C");
  const Tensor cov = dense_covariance(dist);
  Eigen::Map<const Eigen::MatrixXd> sigma(cov.data().data(), static_cast<Eigen::Index>(n),
                                          static_cast<Eigen::Index>(n));
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("dense covariance Cholesky failed");
  Eigen::VectorXd dev(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) dev[static_cast<Eigen::Index>(i)] = logits[i] - dist.mean()[i];
  const Eigen::VectorXd z = llt.matrixL().solve(dev);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det +
                 z.squaredNorm());
}

}  // namespace ssn
