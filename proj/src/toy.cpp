#include "ssn/toy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include "ssn/errors.hpp"
#include "ssn/likelihood.hpp"
#include "ssn/rng.hpp"

namespace ssn::toy {

namespace {

// Stream tags for mix_seed so that the generators used by one run never
// share a sequence.
enum : std::uint64_t {
  kInitStream = 1,
  kMapStream = 2,
  kNoiseStream = 3,
  kEvalStream = 4,
  kSampleStream = 11,
  kLikStream = 20,
};

bool within_bounds(const LowRankGaussian& m, double threshold) {
  for (const Tensor* t : {&m.mean(), &m.factor(), &m.diag_raw()}) {
    for (double v : t->data()) {
      if (!std::isfinite(v) || std::abs(v) > threshold) return false;
    }
  }
  return true;
}

void check_toy_model(const LowRankGaussian& model) {
  if (model.pixels() != kPixels || model.classes() != 1) {
    throw DimensionError("toy models are S=21, C=1");
  }
}

}  // namespace

std::string to_string(StopReason reason) {
  return reason == StopReason::completed ? "completed" : "overflow_early_stop";
}

std::string to_string(CovarianceMode mode) {
  return mode == CovarianceMode::diagonal ? "diagonal" : "lowrank";
}

ToyDataset make_toy_dataset() {
  std::vector<int> off(kPixels, 0), on(kPixels, 0);
  for (std::size_t i = 0; i < kThird; ++i) off[i] = on[i] = 1;
  for (std::size_t i = kThird; i < 2 * kThird; ++i) on[i] = 1;
  return ToyDataset{{LabelMap(std::move(off), 1), LabelMap(std::move(on), 1)}, {0.5, 0.5}};
}

LowRankGaussian initial_model(const TrainConfig& config, CovarianceMode mode) {
  if (config.rank == 0) throw ValidationError("rank must be at least 1");
  Tensor factor({kPixels, config.rank});
  if (mode == CovarianceMode::lowrank) {
    Rng rng(mix_seed(config.seed, kInitStream));
    for (double& v : factor.data()) v = 0.01 * rng.normal();
  }
  Tensor diag_raw({kPixels});
  std::fill(diag_raw.data().begin(), diag_raw.data().end(), softplus_inverse(1.0));
  return LowRankGaussian(Tensor({kPixels}), std::move(factor), std::move(diag_raw), kPixels, 1,
                         config.rank);
}

TrainReport train_toy(const TrainConfig& config, CovarianceMode mode) {
  if (config.mc_samples == 0) throw ValidationError("mc_samples must be at least 1");
  if (!(config.learning_rate > 0.0) || !(config.pretrain_learning_rate > 0.0)) {
    throw ValidationError("learning rates must be positive");
  }
  const ToyDataset data = make_toy_dataset();
  LowRankGaussian model = initial_model(config, mode);
  std::vector<double> trace;
  trace.reserve(config.pretrain_iterations + config.iterations);

  // Phase 1: mean only, full batch.
  Tensor mean = model.mean();
  for (std::size_t it = 0; it < config.pretrain_iterations; ++it) {
    double loss = 0.0;
    std::vector<double> grad(kPixels, 0.0);
    for (const auto& y : data.maps) {
      loss += 0.5 * cross_entropy_loss(mean.data(), y).value;
      const auto g = cross_entropy_grad(mean.data(), y);
      for (std::size_t i = 0; i < kPixels; ++i) grad[i] += 0.5 * g[i];
    }
    for (std::size_t i = 0; i < kPixels; ++i) mean[i] -= config.pretrain_learning_rate * grad[i];
    if (!std::isfinite(loss) || !mean.all_finite()) {
      throw DivergenceError("mean pre-training diverged at iteration " + std::to_string(it));
    }
    trace.push_back(loss);
  }
  model = LowRankGaussian(std::move(mean), model.factor(), model.diag_raw(), kPixels, 1,
                          config.rank);
  const std::size_t boundary = trace.size();

  // Phase 2: joint, one map per iteration, fresh noise.
  Rng map_rng(mix_seed(config.seed, kMapStream));
  const std::uint64_t noise_base = mix_seed(config.seed, kNoiseStream);
  StopReason stop = StopReason::completed;
  std::string detail;
  std::size_t run = 0;
  const double lr = config.learning_rate;
  for (; run < config.iterations; ++run) {
    const LabelMap& y = data.maps[map_rng.below(2)];
    auto noise = draw_noise(model, config.mc_samples, mix_seed(noise_base, run));
    std::pair<LossValue, ParamGrad> step;
    try {
      step = ssn_mc_loss_and_grad(model, y, std::move(noise));
    } catch (const OverflowError& e) {
      stop = StopReason::overflow_early_stop;
      detail = e.what();
      break;
    }
    const auto& [loss, grad] = step;
    if (!std::isfinite(loss.value) || std::abs(loss.value) > config.overflow_threshold) {
      stop = StopReason::overflow_early_stop;
      detail = "loss " + std::to_string(loss.value) + " at iteration " + std::to_string(run);
      break;
    }

    Tensor next_mean = model.mean();
    Tensor next_factor = model.factor();
    Tensor next_raw = model.diag_raw();
    for (std::size_t i = 0; i < kPixels; ++i) {
      next_mean[i] -= lr * grad.mean[i];
      next_raw[i] -= lr * grad.diag_raw[i];
    }
    if (mode == CovarianceMode::lowrank) {
      for (std::size_t k = 0; k < next_factor.size(); ++k) next_factor[k] -= lr * grad.factor[k];
    }
    if (!next_mean.all_finite() || !next_factor.all_finite() || !next_raw.all_finite()) {
      stop = StopReason::overflow_early_stop;
      detail = "non-finite parameter after iteration " + std::to_string(run);
      break;
    }
    LowRankGaussian next(std::move(next_mean), std::move(next_factor), std::move(next_raw),
                         kPixels, 1, config.rank);
    if (!within_bounds(next, config.overflow_threshold)) {
      stop = StopReason::overflow_early_stop;
      detail = "parameter magnitude above threshold after iteration " + std::to_string(run);
      break;
    }
    trace.push_back(loss.value);
    model = std::move(next);
  }

  const double nll =
      nll_per_map(model, config.eval_lik_samples, mix_seed(config.seed, kEvalStream));
  return TrainReport{std::move(trace), boundary, stop, std::move(detail), run, std::move(model),
                     nll};
}

double nll_per_map(const LowRankGaussian& model, std::size_t n_lik_samples, std::uint64_t seed) {
  check_toy_model(model);
  const ToyDataset data = make_toy_dataset();
  double total = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    total += ssn_mc_loss(model, data.maps[k], n_lik_samples, mix_seed(seed, kLikStream + k)).value;
  }
  return 0.5 * total;
}

std::vector<LabelMap> threshold_samples(const Tensor& samples, std::size_t pixels) {
  const std::size_t n = samples.size() / pixels;
  std::vector<LabelMap> maps;
  maps.reserve(n);
  for (std::size_t m = 0; m < n; ++m) {
    std::vector<int> labels(pixels);
    for (std::size_t i = 0; i < pixels; ++i) labels[i] = samples[m * pixels + i] > 0.0 ? 1 : 0;
    maps.emplace_back(std::move(labels), 1);
  }
  return maps;
}

ToyEvaluation evaluate_toy(const LowRankGaussian& model, std::size_t n_samples,
                           std::size_t n_lik_samples, std::uint64_t seed) {
  check_toy_model(model);
  const ToyDataset data = make_toy_dataset();
  ToyEvaluation out;

  for (std::size_t k = 0; k < 2; ++k) {
    out.nll_by_map[k] =
        ssn_mc_loss(model, data.maps[k], n_lik_samples, mix_seed(seed, kLikStream + k)).value;
  }
  out.nll_per_map = 0.5 * (out.nll_by_map[0] + out.nll_by_map[1]);

  const SampleBatch batch = sample(model, n_samples, mix_seed(seed, kSampleStream));
  std::vector<LabelMap> maps = threshold_samples(batch.values, kPixels);
  out.samples = maps.size();

  std::map<std::string, std::size_t> counts;
  for (const auto& m : maps) {
    std::string pattern(kPixels, '0');
    for (std::size_t i = 0; i < kPixels; ++i) pattern[i] = m[i] ? '1' : '0';
    ++counts[pattern];
    for (std::size_t k = 0; k < 2; ++k) out.map_counts[k] += m == data.maps[k];
  }
  for (const auto& [pattern, count] : counts) out.histogram.push_back({pattern, count});
  std::stable_sort(out.histogram.begin(), out.histogram.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });

  const SampleSet pred(std::move(maps), SampleSource::model);
  const SampleSet truth({data.maps[0], data.maps[1]}, SampleSource::ground_truth);
  out.ged = ged_squared(truth, pred);
  out.diversity = out.ged.diversity;
  out.covariance = dense_covariance(model);
  return out;
}

Stat mean_and_standard_error(std::span<const double> values) {
  Stat s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return s;
}

SweepResult rank_sweep(std::span<const std::size_t> ranks, std::span<const std::uint64_t> seeds,
                       const TrainConfig& base, const SweepOptions& options) {
  if (ranks.empty() || seeds.empty()) throw ValidationError("rank sweep needs ranks and seeds");
  SweepResult result;
  result.rows.resize(ranks.size() * seeds.size());

  auto run_cell = [&](std::size_t index) {
    SweepRow& row = result.rows[index];
    row.rank = ranks[index / seeds.size()];
    row.seed = seeds[index % seeds.size()];
    try {
      TrainConfig config = base;
      config.rank = row.rank;
      config.seed = mix_seed(row.rank, row.seed);
      const TrainReport report = train_toy(config, CovarianceMode::lowrank);
      const ToyEvaluation eval = evaluate_toy(report.checkpoint, options.eval_samples,
                                              options.eval_lik_samples, config.seed);
      row.nll = eval.nll_per_map;
      row.diversity = eval.diversity;
      row.ged2 = eval.ged.ged_squared;
      row.stop_reason = report.stop_reason;
    } catch (const std::exception& e) {
      row.status = e.what();
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, result.rows.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < result.rows.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < result.rows.size(); i = next++) run_cell(i);
      });
    }
    for (auto& t : workers) t.join();
  }

  for (std::size_t r = 0; r < ranks.size(); ++r) {
    SweepSummary s;
    s.rank = ranks[r];
    std::vector<double> nll, div, ged;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const SweepRow& row = result.rows[r * seeds.size() + k];
      ++s.runs;
      if (row.status != "ok") continue;
      ++s.succeeded;
      nll.push_back(row.nll);
      div.push_back(row.diversity);
      ged.push_back(row.ged2);
    }
    s.nll = mean_and_standard_error(nll);
    s.diversity = mean_and_standard_error(div);
    s.ged2 = mean_and_standard_error(ged);
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace ssn::toy
