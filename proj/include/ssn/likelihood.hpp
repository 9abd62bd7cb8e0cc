#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ssn/label_map.hpp"
#include "ssn/lowrank_mvn.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

// sum_i log p(y_i | eta_i) over unmasked pixels. For C >= 2 the logits hold
// S*C values and each pixel uses a log-softmax; for C == 1 they hold S values
// and each pixel is Bernoulli with a log-sigmoid.
double label_log_likelihood(std::span<const double> logits, const LabelMap& labels);

struct CrossEntropy {
  double value = 0.0;
  // Set when the mask excludes every pixel and the loss is an empty sum.
  bool empty_mask = false;
};

// Deterministic baseline objective: -label_log_likelihood.
CrossEntropy cross_entropy_loss(std::span<const double> logits, const LabelMap& labels);

// d cross_entropy / d logits: (p - y) per unmasked pixel, zero elsewhere.
std::vector<double> cross_entropy_grad(std::span<const double> logits, const LabelMap& labels);

// Overflow-safe log(sum(exp(v))). Returns -inf only when every entry is -inf.
double logsumexp(std::span<const double> values);

struct LossValue {
  double value = 0.0;                    // nats per label map
  std::vector<double> per_sample_loglik;  // [M]
  std::vector<NoiseDraw> noise;           // [M]
};

// Monte-Carlo loss -logsumexp_m(loglik_m) + log(M) on M fresh samples.
// Throws OverflowError if any per-sample log-likelihood is non-finite.
LossValue ssn_mc_loss(const LowRankGaussian& dist, const LabelMap& labels, std::size_t samples,
                      std::uint64_t seed);

// Same estimator on recorded noise.
LossValue ssn_mc_loss(const LowRankGaussian& dist, const LabelMap& labels,
                      std::vector<NoiseDraw> noise);

struct ParamGrad {
  Tensor mean;      // [S*C]
  Tensor factor;    // [S*C, R]
  Tensor diag_raw;  // [S*C]
};

// Exact gradient of the fixed-noise Monte-Carlo loss with respect to mean,
// factor and diag_raw (reparameterization).
ParamGrad grad_ssn_mc_loss(const LowRankGaussian& dist, const LabelMap& labels,
                           std::span<const NoiseDraw> noise);

// Loss and gradient from one pass over the noise.
std::pair<LossValue, ParamGrad> ssn_mc_loss_and_grad(const LowRankGaussian& dist,
                                                     const LabelMap& labels,
                                                     std::vector<NoiseDraw> noise);

// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> params, double h = 1e-5);

// Concatenation mean | factor | diag_raw, the parameter order used by the
// finite-difference checks.
std::vector<double> flatten_params(const LowRankGaussian& dist);
LowRankGaussian unflatten_params(const LowRankGaussian& like, std::span<const double> params);
std::vector<double> flatten_grad(const ParamGrad& grad);

struct GradCheckReport {
  std::size_t trials = 0;
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  // Largest |analytic - numeric| / |numeric| over coordinates with
  // |numeric| above the absolute floor.
  double worst_relative_error = 0.0;
  double worst_absolute_error = 0.0;
  bool passed() const { return failures == 0; }
};

// Compares grad_ssn_mc_loss with central differences on random instances
// (S <= 8, C in {1, 3}, R <= 3, M <= 5, every third instance masked). A
// coordinate passes if its absolute error is <= abs_floor or its relative
// error is <= rel_tol.
GradCheckReport gradient_check(std::size_t trials, std::uint64_t seed, double rel_tol = 1e-4,
                               double abs_floor = 1e-7);

}  // namespace ssn
