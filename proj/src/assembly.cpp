#include "ssn/assembly.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "ssn/errors.hpp"

namespace ssn {

namespace {

// Calls fn(local_index, global_index) for every pixel of a patch.
template <typename Fn>
void for_each_pixel(const std::vector<std::size_t>& full_shape,
                    const std::vector<std::size_t>& offset, const std::vector<std::size_t>& shape,
                    Fn&& fn) {
  const std::size_t dims = full_shape.size();
  const std::size_t count = shape_product(shape);
  std::vector<std::size_t> coord(dims, 0);
  for (std::size_t local = 0; local < count; ++local) {
    std::size_t global = 0;
    for (std::size_t a = 0; a < dims; ++a) global = global * full_shape[a] + offset[a] + coord[a];
    fn(local, global);
    for (std::size_t a = dims; a-- > 0;) {
      if (++coord[a] < shape[a]) break;
      coord[a] = 0;
    }
  }
}

void check_box(const std::vector<std::size_t>& full_shape, const std::vector<std::size_t>& offset,
               const std::vector<std::size_t>& shape, std::size_t index) {
  if (offset.size() != full_shape.size() || shape.size() != full_shape.size()) {
    throw DimensionError("patch " + std::to_string(index) + " has wrong dimensionality");
  }
  for (std::size_t a = 0; a < full_shape.size(); ++a) {
    if (shape[a] == 0 || offset[a] + shape[a] > full_shape[a]) {
      throw ValidationError("patch " + std::to_string(index) + " extends outside the image on axis " +
                            std::to_string(a));
    }
  }
}

std::string list_pixels(const std::vector<std::size_t>& pixels) {
  std::ostringstream out;
  const std::size_t shown = std::min<std::size_t>(pixels.size(), 16);
  for (std::size_t i = 0; i < shown; ++i) out << (i ? ", " : "") << pixels[i];
  if (pixels.size() > shown) out << ", ... (" << pixels.size() << " total)";
  return out.str();
}

}  // namespace

LowRankGaussian stitch(const PatchedParams& params) {
  const std::size_t c = params.classes;
  const std::size_t r = params.rank;
  if (params.full_shape.empty()) throw ValidationError("full_shape is empty");
  if (params.patches.empty()) throw ValidationError("no patches to stitch");
  const std::size_t pixels = shape_product(params.full_shape);
  const std::size_t d = pixels * c;

  std::vector<int> coverage(pixels, 0);
  for (std::size_t p = 0; p < params.patches.size(); ++p) {
    const Patch& patch = params.patches[p];
    check_box(params.full_shape, patch.offset, patch.shape, p);
    const std::size_t pd = shape_product(patch.shape) * c;
    if (patch.mean.shape() != std::vector<std::size_t>{pd} ||
        patch.diag_raw.shape() != std::vector<std::size_t>{pd} ||
        patch.factor.shape() != std::vector<std::size_t>{pd, r}) {
      throw DimensionError("patch " + std::to_string(p) + " tensors do not match its extent, C=" +
                           std::to_string(c) + ", R=" + std::to_string(r));
    }
    for_each_pixel(params.full_shape, patch.offset, patch.shape,
                   [&](std::size_t, std::size_t g) { ++coverage[g]; });
  }
  std::vector<std::size_t> gaps, overlaps;
  for (std::size_t g = 0; g < pixels; ++g) {
    if (coverage[g] == 0) gaps.push_back(g);
    if (coverage[g] > 1) overlaps.push_back(g);
  }
  if (!gaps.empty() || !overlaps.empty()) {
    std::string msg = "patches do not tile the image";
    if (!overlaps.empty()) msg += "; overlapping pixels: " + list_pixels(overlaps);
    if (!gaps.empty()) msg += "; uncovered pixels: " + list_pixels(gaps);
    throw ValidationError(msg);
  }

  Tensor mean({d}), factor({d, r}), diag_raw({d});
  for (const Patch& patch : params.patches) {
    for_each_pixel(params.full_shape, patch.offset, patch.shape,
                   [&](std::size_t local, std::size_t global) {
                     for (std::size_t k = 0; k < c; ++k) {
                       const std::size_t src = local * c + k;
                       const std::size_t dst = global * c + k;
                       mean[dst] = patch.mean[src];
                       diag_raw[dst] = patch.diag_raw[src];
                       for (std::size_t j = 0; j < r; ++j) factor(dst, j) = patch.factor(src, j);
                     }
                   });
  }
  return LowRankGaussian(std::move(mean), std::move(factor), std::move(diag_raw), pixels, c, r);
}

Patch crop(const LowRankGaussian& dist, const std::vector<std::size_t>& full_shape,
           const std::vector<std::size_t>& offset, const std::vector<std::size_t>& shape) {
  if (shape_product(full_shape) != dist.pixels()) {
    throw DimensionError("full_shape does not match the distribution's pixel count");
  }
  check_box(full_shape, offset, shape, 0);
  const std::size_t c = dist.classes();
  const std::size_t r = dist.rank();
  const std::size_t pd = shape_product(shape) * c;
  Patch patch{offset, shape, Tensor({pd}), Tensor({pd, r}), Tensor({pd})};
  for_each_pixel(full_shape, offset, shape, [&](std::size_t local, std::size_t global) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t dst = local * c + k;
      const std::size_t src = global * c + k;
      patch.mean[dst] = dist.mean()[src];
      patch.diag_raw[dst] = dist.diag_raw()[src];
      for (std::size_t j = 0; j < r; ++j) patch.factor(dst, j) = dist.factor()(src, j);
    }
  });
  return patch;
}

LowRankGaussian apply_deviation_scale(const LowRankGaussian& dist, const DeviationScale& scale) {
  const std::size_t c = dist.classes();
  if (scale.per_class.size() != c) {
    throw ValidationError("per_class has " + std::to_string(scale.per_class.size()) +
                          " entries, distribution has " + std::to_string(c) + " classes");
  }
  if (!(scale.temperature >= 0.0) || !std::isfinite(scale.temperature)) {
    throw ValidationError("temperature must be finite and non-negative");
  }
  for (double s : scale.per_class) {
    if (!std::isfinite(s)) throw ValidationError("per_class scales must be finite");
  }

  Tensor factor = dist.factor();
  Tensor diag_raw = dist.diag_raw();
  for (std::size_t i = 0; i < dist.dim(); ++i) {
    const double k = scale.temperature * scale.per_class[i % c];
    if (k == 1.0) continue;
    for (std::size_t j = 0; j < dist.rank(); ++j) factor(i, j) *= k;
    if (k == -1.0) continue;
    const double excess = k * k * dist.diag(i) - kDiagFloor;
    diag_raw[i] = excess > 0.0 ? softplus_inverse(excess) : kDiagRawAtFloor;
  }
  return LowRankGaussian(dist.mean(), std::move(factor), std::move(diag_raw), dist.pixels(), c,
                         dist.rank());
}

LabelMap most_likely_prediction(const LowRankGaussian& dist) {
  const std::size_t c = dist.classes();
  std::vector<int> labels(dist.pixels());
  for (std::size_t i = 0; i < dist.pixels(); ++i) {
    if (c == 1) {
      labels[i] = dist.mean()[i] > 0.0 ? 1 : 0;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (dist.mean()[i * c + k] > dist.mean()[i * c + best]) best = k;
    }
    labels[i] = static_cast<int>(best);
  }
  return LabelMap(std::move(labels), static_cast<int>(c));
}

}  // namespace ssn
