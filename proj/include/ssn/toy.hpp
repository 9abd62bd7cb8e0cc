#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssn/label_map.hpp"
#include "ssn/lowrank_mvn.hpp"
#include "ssn/metrics.hpp"
#include "ssn/tensor.hpp"

namespace ssn::toy {

inline constexpr std::size_t kPixels = 21;
inline constexpr std::size_t kThird = kPixels / 3;

// Two equiprobable binary maps on a 21-pixel line: the first third is on and
// the last third off in both; the middle third is off in map 0 and on in
// map 1.
struct ToyDataset {
  std::array<LabelMap, 2> maps;
  std::array<double, 2> probabilities;
};

ToyDataset make_toy_dataset();

enum class CovarianceMode { diagonal, lowrank };

struct TrainConfig {
  std::size_t rank = 2;
  std::size_t mc_samples = 200;
  std::size_t iterations = 10000;  // joint-training iterations
  std::size_t pretrain_iterations = 2000;
  double pretrain_learning_rate = 0.05;
  double learning_rate = 0.2;
  std::uint64_t seed = 0;
  double overflow_threshold = 1e4;
  // Monte-Carlo samples for the final per-map NLL estimate.
  std::size_t eval_lik_samples = 10000;
};

enum class StopReason { completed, overflow_early_stop };

std::string to_string(StopReason reason);
std::string to_string(CovarianceMode mode);

struct TrainReport {
  std::vector<double> loss_trace;  // pre-training losses, then joint losses
  std::size_t phase_boundary = 0;  // index in loss_trace where joint training starts
  StopReason stop_reason = StopReason::completed;
  std::string stop_detail;
  std::size_t joint_iterations_run = 0;
  LowRankGaussian checkpoint;  // last model with all-finite, in-bound parameters
  double final_nll_per_map = 0.0;
};

// Phase 1 fits the mean alone by full-batch gradient descent on the
// cross-entropy averaged over both maps. Phase 2 updates mean, factor and
// diag_raw on the Monte-Carlo loss of one uniformly drawn map per iteration
// with fresh noise, and stops early (returning the previous model) at the
// first non-finite quantity or parameter magnitude above overflow_threshold.
// Diagonal mode keeps the factor at zero. Throws DivergenceError if Phase 1
// goes non-finite.
TrainReport train_toy(const TrainConfig& config, CovarianceMode mode);

// Initial parameters used by train_toy before pre-training.
LowRankGaussian initial_model(const TrainConfig& config, CovarianceMode mode);

struct HistogramEntry {
  std::string pattern;  // thresholded sample, one '0'/'1' per pixel
  std::size_t count = 0;
};

struct ToyEvaluation {
  double nll_per_map = 0.0;           // mean of nll_by_map
  std::array<double, 2> nll_by_map{};  // Monte-Carlo estimator per ground-truth map
  std::size_t samples = 0;
  std::array<std::size_t, 2> map_counts{};  // thresholded samples equal to each map
  std::vector<HistogramEntry> histogram;    // descending count, ties by pattern
  double diversity = 0.0;
  MetricReport ged;  // against the true two-map distribution
  Tensor covariance;  // dense [21, 21]
};

// Thresholds logit samples at zero to binary maps.
std::vector<LabelMap> threshold_samples(const Tensor& samples, std::size_t pixels);

ToyEvaluation evaluate_toy(const LowRankGaussian& model, std::size_t n_samples = 10000,
                           std::size_t n_lik_samples = 10000, std::uint64_t seed = 0);

// Mean over both maps of the Monte-Carlo NLL estimate.
double nll_per_map(const LowRankGaussian& model, std::size_t n_lik_samples, std::uint64_t seed);

struct SweepRow {
  std::size_t rank = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or the failure message
  double nll = 0.0;
  double diversity = 0.0;
  double ged2 = 0.0;
  StopReason stop_reason = StopReason::completed;
};

struct Stat {
  double mean = 0.0;
  double standard_error = 0.0;
};

struct SweepSummary {
  std::size_t rank = 0;
  std::size_t runs = 0;
  std::size_t succeeded = 0;
  Stat nll;
  Stat diversity;
  Stat ged2;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // rank-major, then seed
  std::vector<SweepSummary> summary;
};

struct SweepOptions {
  std::size_t eval_samples = 10000;
  std::size_t eval_lik_samples = 10000;
  std::size_t jobs = 1;
};

// Trains and evaluates a low-rank model for every (rank, seed) cell. Each cell
// runs with seed mix_seed(rank, seed); failures are recorded per row.
SweepResult rank_sweep(std::span<const std::size_t> ranks, std::span<const std::uint64_t> seeds,
                       const TrainConfig& base, const SweepOptions& options = {});

Stat mean_and_standard_error(std::span<const double> values);

}  // namespace ssn::toy
