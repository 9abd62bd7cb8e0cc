#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssn/tensor.hpp"

namespace ssn {

// Lower bound added to softplus(diag_raw); keeps the covariance strictly
// positive definite.
inline constexpr double kDiagFloor = 1e-5;

// A diag_raw value whose effective diagonal equals kDiagFloor exactly in
// double precision (softplus(-50) ~ 2e-22 is below half an ulp of 1e-5).
inline constexpr double kDiagRawAtFloor = -50.0;

// Largest S*C the dense oracles will materialize.
inline constexpr std::size_t kDenseLimit = 4096;

double softplus(double x);
// Inverse of softplus on (0, inf).
double softplus_inverse(double y);
double sigmoid(double x);

// N(mean, P P^T + D) over a flattened logit map.
//
// Flattening is pixel-major, class-minor: element i = pixel * C + class.
// D_i = softplus(diag_raw_i) + kDiagFloor. Instances are immutable.
class LowRankGaussian {
 public:
  // mean: [S*C], factor: [S*C, R], diag_raw: [S*C]. Throws DimensionError on
  // shape mismatch and ValidationError on non-finite entries or zero extents.
  LowRankGaussian(Tensor mean, Tensor factor, Tensor diag_raw, std::size_t pixels,
                  std::size_t classes, std::size_t rank);

  std::size_t pixels() const { return pixels_; }
  std::size_t classes() const { return classes_; }
  std::size_t rank() const { return rank_; }
  std::size_t dim() const { return pixels_ * classes_; }

  const Tensor& mean() const { return mean_; }
  const Tensor& factor() const { return factor_; }
  const Tensor& diag_raw() const { return diag_raw_; }

  // Effective diagonal D_i.
  double diag(std::size_t i) const { return softplus(diag_raw_[i]) + kDiagFloor; }
  Tensor effective_diag() const;

  friend bool operator==(const LowRankGaussian&, const LowRankGaussian&) = default;

 private:
  Tensor mean_;
  Tensor factor_;
  Tensor diag_raw_;
  std::size_t pixels_;
  std::size_t classes_;
  std::size_t rank_;
};

// Standard-normal latents for one sample. Kept so that a loss and its
// gradient can be evaluated on identical noise.
struct NoiseDraw {
  std::vector<double> eps_factor;  // [R]
  std::vector<double> eps_diag;    // [S*C]
  std::uint64_t seed = 0;          // seed of the sample() call that drew it
};

struct SampleBatch {
  Tensor values;  // [n, S*C]
  std::vector<NoiseDraw> noise;
};

// Draws n samples eta = mu + P eps_factor + sqrt(D) * eps_diag. Per sample the
// generator emits R factor variates followed by S*C diagonal variates.
SampleBatch sample(const LowRankGaussian& dist, std::size_t n, std::uint64_t seed);

// The latents sample() would use, without realizing them.
std::vector<NoiseDraw> draw_noise(const LowRankGaussian& dist, std::size_t n, std::uint64_t seed);

// Deterministic map from a recorded noise draw to a logit sample.
void realize(const LowRankGaussian& dist, const NoiseDraw& noise, std::span<double> out);
std::vector<double> realize(const LowRankGaussian& dist, const NoiseDraw& noise);

// diag(P P^T) + D.
Tensor marginal_variance(const LowRankGaussian& dist);

// Exact log-density in O(S*C*R^2) via the Woodbury identity and the matrix
// determinant lemma on the R x R capacitance matrix I + P^T D^-1 P.
double log_prob(const LowRankGaussian& dist, std::span<const double> logits);

// Dense P P^T + D. Throws SizeGuardError when S*C > kDenseLimit.
Tensor dense_covariance(const LowRankGaussian& dist);
// Log-density through a full Cholesky factorization of dense_covariance.
double dense_log_prob(const LowRankGaussian& dist, std::span<const double> logits);

}  // namespace ssn
