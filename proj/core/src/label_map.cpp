#include "jcapa/label_map.hpp"

#include <algorithm>

#include "jcapa/error.hpp"

namespace jcapa {

LabelMap::LabelMap(Shape d, std::vector<std::uint8_t> values)
    : dims(std::move(d)), data(std::move(values)) {
  if (dims.empty() || shape_numel(dims) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("label map of shape " + shape_str(dims) + " cannot hold " +
                     std::to_string(data.size()) + " values");
  }
}

LabelMap LabelMap::zeros(Shape d) {
  const auto n = static_cast<std::size_t>(shape_numel(d));
  return LabelMap(std::move(d), std::vector<std::uint8_t>(n, 0));
}

LabelMap stack_labels(const std::vector<LabelMap>& maps) {
  if (maps.empty()) throw ShapeError("stack_labels: no maps");
  const auto& first = maps.front().dims;
  if (first.size() != 2) throw ShapeError("stack_labels: expected H×W maps, got " + shape_str(first));
  std::vector<std::uint8_t> out;
  out.reserve(maps.size() * maps.front().data.size());
  for (const auto& m : maps) {
    if (m.dims != first) {
      throw ShapeError("stack_labels: " + shape_str(m.dims) + " differs from " + shape_str(first));
    }
    out.insert(out.end(), m.data.begin(), m.data.end());
  }
  return LabelMap({static_cast<std::int64_t>(maps.size()), first[0], first[1]}, std::move(out));
}

}  // namespace jcapa
