#pragma once

#include <cstdint>
#include <vector>

#include "jcapa/tensor.hpp"

namespace jcapa {

/// Integer class-id map, row-major. Rank 2 (H×W) for one slice, rank 3 for
/// a batch (B×H×W) or a stacked scan volume (D×H×W).
struct LabelMap {
  Shape dims;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(Shape d, std::vector<std::uint8_t> values);
  static LabelMap zeros(Shape d);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  bool operator==(const LabelMap&) const = default;
};

/// One image/label pair: image is 1×H×W in [0,1], label is H×W.
struct LabeledSlice {
  Tensor image;
  LabelMap label;
};

/// Stacks H×W maps into an N×H×W map.
LabelMap stack_labels(const std::vector<LabelMap>& maps);

}  // namespace jcapa
