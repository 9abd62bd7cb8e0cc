#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssn/label_map.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

enum class SampleSource { ground_truth, model };

// Empirical distribution over label maps: a nonempty list sharing S and C.
class SampleSet {
 public:
  SampleSet(std::vector<LabelMap> samples, SampleSource source);

  std::size_t size() const { return samples_.size(); }
  const LabelMap& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<LabelMap>& samples() const { return samples_; }
  SampleSource source() const { return source_; }

 private:
  std::vector<LabelMap> samples_;
  SampleSource source_;
};

// Generalized energy distance and its three expectations. All expectations
// run over ordered pairs with replacement, so self-pairs are included.
struct MetricReport {
  double ged_squared = 0.0;  // 2 cross - gt_self - diversity; not clamped
  double diversity = 0.0;    // E d(pred, pred')
  double cross_term = 0.0;   // E d(gt, pred)
  double gt_self_term = 0.0; // E d(gt, gt')
};

// 1 - IoU averaged over the non-background classes present in either map.
// Class 0 is background; both maps empty gives 0.
double iou_distance(const LabelMap& a, const LabelMap& b);

MetricReport ged_squared(const SampleSet& gt, const SampleSet& pred);

struct Diversity {
  double value = 0.0;
  // Set when only one sample was supplied (value is then 0).
  bool single_sample = false;
};

Diversity sample_diversity(const SampleSet& pred);

// Dice coefficient for one class; nullopt when the class is absent from both.
std::optional<double> dsc(const LabelMap& pred, const LabelMap& gt, int cls);

struct DscAverage {
  std::optional<double> mean;  // nullopt when every entry was undefined
  std::size_t used = 0;
  std::size_t skipped = 0;
};

DscAverage average_dsc(std::span<const std::optional<double>> values);

// Mean foreground DSC of pred against the ground truths whose foreground is
// nonempty; nullopt when all of them are empty.
std::optional<double> dsc_nod(const LabelMap& pred, const SampleSet& gts);

// Per-pixel entropy (log base C, base 2 for binary) of the sample-averaged
// class probabilities. Each tensor is [S, C]; for C == 1 the single column is
// p(foreground). Throws ValidationError when a row is not a distribution.
Tensor marginal_entropy(std::span<const Tensor> prob_samples);

}  // namespace ssn
