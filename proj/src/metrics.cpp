#include "ssn/metrics.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "ssn/errors.hpp"

namespace ssn {

namespace {

void check_compatible(const LabelMap& a, const LabelMap& b) {
  if (a.pixels() != b.pixels() || a.num_classes() != b.num_classes()) {
    throw ValidationError("label maps differ in pixel count or class count");
  }
}

bool both_count(const LabelMap& a, const LabelMap& b, std::size_t i) {
  return a.counts(i) && b.counts(i);
}

bool is_foreground(int label) { return label != 0; }

// Distinct maps with multiplicities, in canonical (sorted) order so equal
// multisets produce identical atom lists and hence bit-identical sums.
using Atoms = std::vector<std::pair<const LabelMap*, double>>;

Atoms collapse(const SampleSet& set) {
  std::map<std::pair<std::vector<int>, std::vector<std::uint8_t>>, std::pair<const LabelMap*, double>>
      index;
  for (const auto& s : set.samples()) {
    auto key = std::make_pair(s.labels(), s.mask().value_or(std::vector<std::uint8_t>{}));
    auto [it, inserted] = index.try_emplace(std::move(key), &s, 0.0);
    it->second.second += 1.0;
  }
  Atoms atoms;
  atoms.reserve(index.size());
  for (const auto& [key, atom] : index) atoms.push_back(atom);
  return atoms;
}

double expected_distance(const Atoms& a, double na, const Atoms& b, double nb) {
  double total = 0.0;
  for (const auto& [ma, wa] : a) {
    double row = 0.0;
    for (const auto& [mb, wb] : b) row += wb * iou_distance(*ma, *mb);
    total += wa * row;
  }
  return total / (na * nb);
}

}  // namespace

SampleSet::SampleSet(std::vector<LabelMap> samples, SampleSource source)
    : samples_(std::move(samples)), source_(source) {
  if (samples_.empty()) throw ValidationError("sample set is empty");
  for (const auto& s : samples_) check_compatible(samples_.front(), s);
}

double iou_distance(const LabelMap& a, const LabelMap& b) {
  check_compatible(a, b);
  const int values = a.label_values();
  std::vector<std::size_t> inter(static_cast<std::size_t>(values), 0);
  std::vector<std::size_t> uni(static_cast<std::size_t>(values), 0);
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    if (!both_count(a, b, i)) continue;
    const int la = a[i];
    const int lb = b[i];
    if (la == lb) {
      ++inter[static_cast<std::size_t>(la)];
      ++uni[static_cast<std::size_t>(la)];
    } else {
      ++uni[static_cast<std::size_t>(la)];
      ++uni[static_cast<std::size_t>(lb)];
    }
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 1; c < values; ++c) {
    const auto u = uni[static_cast<std::size_t>(c)];
    if (u == 0) continue;
    sum += static_cast<double>(inter[static_cast<std::size_t>(c)]) / static_cast<double>(u);
    ++present;
  }
  if (present == 0) return 0.0;
  return 1.0 - sum / present;
}

MetricReport ged_squared(const SampleSet& gt, const SampleSet& pred) {
  check_compatible(gt[0], pred[0]);
  const Atoms g = collapse(gt);
  const Atoms p = collapse(pred);
  const double ng = static_cast<double>(gt.size());
  const double np = static_cast<double>(pred.size());
  MetricReport r;
  r.cross_term = expected_distance(g, ng, p, np);
  r.gt_self_term = expected_distance(g, ng, g, ng);
  r.diversity = expected_distance(p, np, p, np);
  r.ged_squared = 2.0 * r.cross_term - r.gt_self_term - r.diversity;
  return r;
}

Diversity sample_diversity(const SampleSet& pred) {
  if (pred.size() < 2) return {0.0, true};
  const Atoms p = collapse(pred);
  const double n = static_cast<double>(pred.size());
  return {expected_distance(p, n, p, n), false};
}

std::optional<double> dsc(const LabelMap& pred, const LabelMap& gt, int cls) {
  check_compatible(pred, gt);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    if (!both_count(pred, gt, i)) continue;
    const bool p = pred[i] == cls;
    const bool g = gt[i] == cls;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp + fp + fn == 0) return std::nullopt;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

DscAverage average_dsc(std::span<const std::optional<double>> values) {
  DscAverage out;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) {
      ++out.skipped;
      continue;
    }
    sum += *v;
    ++out.used;
  }
  if (out.used > 0) out.mean = sum / static_cast<double>(out.used);
  return out;
}

std::optional<double> dsc_nod(const LabelMap& pred, const SampleSet& gts) {
  // Foreground is every non-background class.
  auto binarize = [](const LabelMap& m) {
    std::vector<int> fg(m.pixels());
    for (std::size_t i = 0; i < m.pixels(); ++i) fg[i] = is_foreground(m[i]) ? 1 : 0;
    return LabelMap(std::move(fg), 1, m.mask(), m.shape());
  };
  const LabelMap p = binarize(pred);
  std::vector<std::optional<double>> scores;
  for (const auto& gt : gts.samples()) {
    const LabelMap g = binarize(gt);
    bool nonempty = false;
    for (std::size_t i = 0; i < g.pixels(); ++i) nonempty |= g.counts(i) && g[i] == 1;
    if (!nonempty) continue;
    scores.push_back(dsc(p, g, 1));
  }
  return average_dsc(scores).mean;
}

Tensor marginal_entropy(std::span<const Tensor> prob_samples) {
  if (prob_samples.empty()) throw ValidationError("marginal_entropy needs at least one sample");
  const auto& shape = prob_samples.front().shape();
  if (shape.size() != 2) throw DimensionError("probability tensors must be [S, C]");
  const std::size_t pixels = shape[0];
  const std::size_t classes = shape[1];
  const bool binary = classes == 1;
  const std::size_t values = binary ? 2 : classes;

  std::vector<double> mean(pixels * values, 0.0);
  for (const auto& t : prob_samples) {
    if (t.shape() != shape) throw DimensionError("probability tensors differ in shape");
    for (std::size_t i = 0; i < pixels; ++i) {
      if (binary) {
        const double p = t(i, 0);
        if (!(p >= 0.0 && p <= 1.0)) {
          throw ValidationError("foreground probability outside [0, 1] at pixel " +
                                std::to_string(i));
        }
        mean[i * 2] += 1.0 - p;
        mean[i * 2 + 1] += p;
        continue;
      }
      double row = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = t(i, c);
        if (!(p >= 0.0)) throw ValidationError("negative probability at pixel " + std::to_string(i));
        row += p;
        mean[i * classes + c] += p;
      }
      if (std::abs(row - 1.0) > 1e-6) {
        throw ValidationError("probabilities at pixel " + std::to_string(i) + " sum to " +
                              std::to_string(row));
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(prob_samples.size());
  const double log_base = std::log(static_cast<double>(values));
  Tensor out({pixels});
  for (std::size_t i = 0; i < pixels; ++i) {
    double h = 0.0;
    for (std::size_t c = 0; c < values; ++c) {
      const double p = mean[i * values + c] * inv_n;
      if (p > 0.0) h -= p * std::log(p);
    }
    out[i] = std::max(0.0, h / log_base);
  }
  return out;
}

}  // namespace ssn
