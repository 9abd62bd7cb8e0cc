#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace ssn {

// Integer class per pixel, with an optional validity mask (true = pixel
// contributes). num_classes == 1 denotes a binary Bernoulli map whose labels
// are 0 (background) or 1 (foreground); metrics treat it as two classes.
class LabelMap {
 public:
  // Shape defaults to the flat extent {labels.size()}.
  LabelMap(std::vector<int> labels, int num_classes,
           std::optional<std::vector<std::uint8_t>> mask = std::nullopt,
           std::vector<std::size_t> shape = {});

  std::size_t pixels() const { return labels_.size(); }
  int num_classes() const { return num_classes_; }
  // Number of distinct label values: max(2, num_classes).
  int label_values() const { return num_classes_ == 1 ? 2 : num_classes_; }
  const std::vector<int>& labels() const { return labels_; }
  int operator[](std::size_t i) const { return labels_[i]; }
  const std::optional<std::vector<std::uint8_t>>& mask() const { return mask_; }
  const std::vector<std::size_t>& shape() const { return shape_; }

  bool counts(std::size_t i) const { return !mask_ || (*mask_)[i] != 0; }
  std::size_t counted_pixels() const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::vector<int> labels_;
  int num_classes_;
  std::optional<std::vector<std::uint8_t>> mask_;
  std::vector<std::size_t> shape_;
};

}  // namespace ssn
