#include "ssn/label_map.hpp"

#include <string>

#include "ssn/errors.hpp"
#include "ssn/tensor.hpp"

namespace ssn {

LabelMap::LabelMap(std::vector<int> labels, int num_classes,
                   std::optional<std::vector<std::uint8_t>> mask, std::vector<std::size_t> shape)
    : labels_(std::move(labels)),
      num_classes_(num_classes),
      mask_(std::move(mask)),
      shape_(std::move(shape)) {
  if (num_classes_ < 1) throw ValidationError("num_classes must be at least 1");
  if (labels_.empty()) throw ValidationError("label map has no pixels");
  if (shape_.empty()) shape_ = {labels_.size()};
  if (shape_product(shape_) != labels_.size()) {
    throw DimensionError("label map shape does not match its pixel count");
  }
  if (mask_ && mask_->size() != labels_.size()) {
    throw DimensionError("mask length " + std::to_string(mask_->size()) +
                         " differs from label count " + std::to_string(labels_.size()));
  }
  const int limit = label_values();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!counts(i)) continue;
    if (labels_[i] < 0 || labels_[i] >= limit) {
      throw ValidationError("label " + std::to_string(labels_[i]) + " at pixel " +
                            std::to_string(i) + " outside [0, " + std::to_string(limit) + ")");
    }
  }
}

std::size_t LabelMap::counted_pixels() const {
  if (!mask_) return labels_.size();
  std::size_t n = 0;
  for (auto m : *mask_) n += m != 0;
  return n;
}

}  // namespace ssn
