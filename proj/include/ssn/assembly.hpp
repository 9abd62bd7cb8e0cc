#pragma once

#include <cstddef>
#include <vector>

#include "ssn/label_map.hpp"
#include "ssn/lowrank_mvn.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

// Distribution parameters predicted for one rectangular patch. Pixels inside
// the patch are flattened row-major over `shape`, classes minor.
struct Patch {
  std::vector<std::size_t> offset;  // pixel coordinates of the patch origin
  std::vector<std::size_t> shape;   // pixel extents
  Tensor mean;                      // [P*C]
  Tensor factor;                    // [P*C, R]
  Tensor diag_raw;                  // [P*C]
};

// Patches that must tile full_shape exactly. Factor column r of every patch
// is the same global latent r, so one eps_factor drives the whole image and
// correlations carry across patch borders.
struct PatchedParams {
  std::vector<Patch> patches;
  std::vector<std::size_t> full_shape;
  std::size_t classes = 1;
  std::size_t rank = 1;
};

// Throws ValidationError naming the offending pixels on gaps, overlaps or
// out-of-bounds patches, and DimensionError on inconsistent patch tensors.
LowRankGaussian stitch(const PatchedParams& params);

// Copies the parameters of a sub-rectangle out of a whole-image distribution.
Patch crop(const LowRankGaussian& dist, const std::vector<std::size_t>& full_shape,
           const std::vector<std::size_t>& offset, const std::vector<std::size_t>& shape);

// Per-class deviation multipliers plus a global temperature. Samples of the
// scaled distribution are mu + T * s_c * (eta - mu); a negative s_c mirrors
// that class's deviations about the mean.
struct DeviationScale {
  std::vector<double> per_class;
  double temperature = 1.0;
};

// Factor rows of class c are multiplied by T * s_c and the effective diagonal
// by (T * s_c)^2 (then floored at kDiagFloor). Rows whose multiplier is +-1
// keep their diag_raw bit-for-bit.
LowRankGaussian apply_deviation_scale(const LowRankGaussian& dist, const DeviationScale& scale);

// Argmax of the mean per pixel (C >= 2, ties to the lowest class) or mean > 0
// (C == 1, zero maps to background).
LabelMap most_likely_prediction(const LowRankGaussian& dist);

}  // namespace ssn
