#include "ssn/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ssn/errors.hpp"
#include "ssn/rng.hpp"

namespace ssn {

namespace {

void check_logits(std::span<const double> logits, const LabelMap& labels) {
  const std::size_t classes = static_cast<std::size_t>(labels.num_classes());
  if (logits.size() != labels.pixels() * classes) {
    throw DimensionError("expected " + std::to_string(labels.pixels() * classes) +
                         " logits, got " + std::to_string(logits.size()));
  }
}

void check_pair(const LowRankGaussian& dist, const LabelMap& labels) {
  if (dist.pixels() != labels.pixels() ||
      dist.classes() != static_cast<std::size_t>(labels.num_classes())) {
    throw DimensionError("distribution is S=" + std::to_string(dist.pixels()) +
                         ", C=" + std::to_string(dist.classes()) + " but labels are S=" +
                         std::to_string(labels.pixels()) +
                         ", C=" + std::to_string(labels.num_classes()));
  }
}

// log p(y_i | eta_i) for one pixel; when grad is non-empty it receives
// d/d eta_i of that log-probability.
double pixel_loglik(std::span<const double> eta, int label, std::span<double> grad) {
  if (eta.size() == 1) {
    const double x = eta[0];
    const double ll = label == 1 ? -softplus(-x) : -softplus(x);
    if (!grad.empty()) grad[0] = static_cast<double>(label) - sigmoid(x);
    return ll;
  }
  const double lse = logsumexp(eta);
  if (!grad.empty()) {
    for (std::size_t c = 0; c < eta.size(); ++c) {
      grad[c] = (static_cast<int>(c) == label ? 1.0 : 0.0) - std::exp(eta[c] - lse);
    }
  }
  return eta[static_cast<std::size_t>(label)] - lse;
}

double map_loglik(std::span<const double> logits, const LabelMap& labels,
                  std::span<double> grad) {
  const std::size_t c = static_cast<std::size_t>(labels.num_classes());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.pixels(); ++i) {
    std::span<double> g = grad.empty() ? grad : grad.subspan(i * c, c);
    if (!labels.counts(i)) {
      std::fill(g.begin(), g.end(), 0.0);
      continue;
    }
    total += pixel_loglik(logits.subspan(i * c, c), labels[i], g);
  }
  return total;
}

LossValue reduce(std::vector<double> loglik, std::vector<NoiseDraw> noise) {
  for (std::size_t m = 0; m < loglik.size(); ++m) {
    if (!std::isfinite(loglik[m])) {
      throw OverflowError("non-finite log-likelihood for Monte-Carlo sample " + std::to_string(m));
    }
  }
  LossValue out;
  out.value = -logsumexp(loglik) + std::log(static_cast<double>(loglik.size()));
  out.per_sample_loglik = std::move(loglik);
  out.noise = std::move(noise);
  return out;
}

}  // namespace

double logsumexp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

double label_log_likelihood(std::span<const double> logits, const LabelMap& labels) {
  check_logits(logits, labels);
  return map_loglik(logits, labels, {});
}

CrossEntropy cross_entropy_loss(std::span<const double> logits, const LabelMap& labels) {
  CrossEntropy out;
  out.value = -label_log_likelihood(logits, labels);
  out.empty_mask = labels.counted_pixels() == 0;
  return out;
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, const LabelMap& labels) {
  check_logits(logits, labels);
  std::vector<double> grad(logits.size());
  map_loglik(logits, labels, grad);
  for (double& g : grad) g = -g;
  return grad;
}

LossValue ssn_mc_loss(const LowRankGaussian& dist, const LabelMap& labels, std::size_t samples,
                      std::uint64_t seed) {
  check_pair(dist, labels);
  SampleBatch batch = sample(dist, samples, seed);
  const std::size_t d = dist.dim();
  std::vector<double> loglik(samples);
  for (std::size_t m = 0; m < samples; ++m) {
    loglik[m] = map_loglik(batch.values.data().subspan(m * d, d), labels, {});
  }
  return reduce(std::move(loglik), std::move(batch.noise));
}

LossValue ssn_mc_loss(const LowRankGaussian& dist, const LabelMap& labels,
                      std::vector<NoiseDraw> noise) {
  check_pair(dist, labels);
  if (noise.empty()) throw ValidationError("at least one noise draw is required");
  std::vector<double> eta(dist.dim());
  std::vector<double> loglik(noise.size());
  for (std::size_t m = 0; m < noise.size(); ++m) {
    realize(dist, noise[m], eta);
    loglik[m] = map_loglik(eta, labels, {});
  }
  return reduce(std::move(loglik), std::move(noise));
}

std::pair<LossValue, ParamGrad> ssn_mc_loss_and_grad(const LowRankGaussian& dist,
                                                     const LabelMap& labels,
                                                     std::vector<NoiseDraw> noise) {
  check_pair(dist, labels);
  if (noise.empty()) throw ValidationError("at least one noise draw is required");
  const std::size_t d = dist.dim();
  const std::size_t r = dist.rank();
  const std::size_t samples = noise.size();

  // Per-sample d loglik / d eta, kept until the softmax weights are known.
  std::vector<double> dlog(samples * d);
  std::vector<double> eta(d);
  std::vector<double> loglik(samples);
  for (std::size_t m = 0; m < samples; ++m) {
    realize(dist, noise[m], eta);
    loglik[m] = map_loglik(eta, labels, std::span<double>(dlog).subspan(m * d, d));
  }
  LossValue loss = reduce(std::move(loglik), std::move(noise));

  const double lse = logsumexp(loss.per_sample_loglik);
  ParamGrad grad{Tensor({d}), Tensor({d, r}), Tensor({d})};
  std::vector<double> diag_scale(d);
  for (std::size_t i = 0; i < d; ++i) {
    // d sqrt(D) / d raw = softplus'(raw) / (2 sqrt(D))
    diag_scale[i] = 0.5 * sigmoid(dist.diag_raw()[i]) / std::sqrt(dist.diag(i));
  }
  for (std::size_t m = 0; m < samples; ++m) {
    const double w = std::exp(loss.per_sample_loglik[m] - lse);
    const NoiseDraw& draw = loss.noise[m];
    for (std::size_t i = 0; i < d; ++i) {
      // d loss / d eta_i = w_m (p - y)_i
      const double g = -w * dlog[m * d + i];
      if (g == 0.0) continue;
      grad.mean[i] += g;
      for (std::size_t k = 0; k < r; ++k) grad.factor(i, k) += g * draw.eps_factor[k];
      grad.diag_raw[i] += g * draw.eps_diag[i] * diag_scale[i];
    }
  }
  return {std::move(loss), std::move(grad)};
}

ParamGrad grad_ssn_mc_loss(const LowRankGaussian& dist, const LabelMap& labels,
                           std::span<const NoiseDraw> noise) {
  for (const auto& draw : noise) {
    if (draw.eps_factor.size() != dist.rank() || draw.eps_diag.size() != dist.dim()) {
      throw ValidationError("noise draw does not match the distribution's rank or dimension");
    }
  }
  return ssn_mc_loss_and_grad(dist, labels, std::vector<NoiseDraw>(noise.begin(), noise.end()))
      .second;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> params, double h) {
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = fn(x);
    x[k] = saved - h;
    const double down = fn(x);
    x[k] = saved;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::vector<double> flatten_params(const LowRankGaussian& dist) {
  std::vector<double> out;
  out.reserve(dist.dim() * (dist.rank() + 2));
  for (const Tensor* t : {&dist.mean(), &dist.factor(), &dist.diag_raw()}) {
    out.insert(out.end(), t->data().begin(), t->data().end());
  }
  return out;
}

LowRankGaussian unflatten_params(const LowRankGaussian& like, std::span<const double> params) {
  const std::size_t d = like.dim();
  const std::size_t r = like.rank();
  if (params.size() != d * (r + 2)) throw DimensionError("parameter vector has wrong length");
  auto take = [&](std::size_t offset, std::size_t count) {
    return std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(offset),
                               params.begin() + static_cast<std::ptrdiff_t>(offset + count));
  };
  return LowRankGaussian(Tensor({d}, take(0, d)), Tensor({d, r}, take(d, d * r)),
                         Tensor({d}, take(d + d * r, d)), like.pixels(), like.classes(), r);
}

std::vector<double> flatten_grad(const ParamGrad& grad) {
  std::vector<double> out;
  for (const Tensor* t : {&grad.mean, &grad.factor, &grad.diag_raw}) {
    out.insert(out.end(), t->data().begin(), t->data().end());
  }
  return out;
}

GradCheckReport gradient_check(std::size_t trials, std::uint64_t seed, double rel_tol,
                               double abs_floor) {
  GradCheckReport report;
  report.trials = trials;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(mix_seed(seed, trial));
    const std::size_t s = 1 + rng.below(8);
    const std::size_t r = 1 + rng.below(3);
    const std::size_t m = 1 + rng.below(5);
    const std::size_t c = rng.below(2) ? 3 : 1;
    const std::size_t d = s * c;
    Tensor mean({d}), factor({d, r}), raw({d});
    for (double& v : mean.data()) v = rng.normal();
    for (double& v : factor.data()) v = 0.7 * rng.normal();
    for (double& v : raw.data()) v = -2.0 + 3.5 * rng.uniform();
    const LowRankGaussian dist(std::move(mean), std::move(factor), std::move(raw), s, c, r);

    const int values = c == 1 ? 2 : static_cast<int>(c);
    std::vector<int> labels(s);
    for (int& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(values)));
    std::optional<std::vector<std::uint8_t>> mask;
    if (trial % 3 == 0) {
      mask.emplace(s);
      for (auto& v : *mask) v = rng.uniform() < 0.7;
    }
    const LabelMap y(std::move(labels), static_cast<int>(c), std::move(mask));

    const auto noise = draw_noise(dist, m, rng.next_u64());
    const auto analytic = flatten_grad(grad_ssn_mc_loss(dist, y, noise));
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> p) { return ssn_mc_loss(unflatten_params(dist, p), y, noise).value; },
        flatten_params(dist));
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      ++report.coordinates;
      const double err = std::abs(analytic[k] - numeric[k]);
      const double rel = err / std::abs(numeric[k]);
      report.worst_absolute_error = std::max(report.worst_absolute_error, err);
      if (std::abs(numeric[k]) > abs_floor) {
        report.worst_relative_error = std::max(report.worst_relative_error, rel);
      }
      if (!(err <= abs_floor || rel <= rel_tol)) ++report.failures;
    }
  }
  return report;
}

}  // namespace ssn
