#include <algorithm>
#include <cmath>

#include "jcapa/ops.hpp"
#include "op_util.hpp"

namespace jcapa::ops {

using detail::grad_buffer;
using detail::make_output;
using detail::record;
using detail::require_rank;

namespace {

void check_labels(const Tensor& logits, const LabelMap& labels) {
  require_rank(logits, 4, "cross_entropy_with_softmax");
  const Shape expect{logits.dim(0), logits.dim(2), logits.dim(3)};
  if (labels.dims != expect) {
    throw ShapeError("labels " + shape_str(labels.dims) + " do not match logits " +
                     shape_str(logits.dims()));
  }
  const auto k = logits.dim(1);
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    if (labels.data[i] >= k) {
      throw ValidationError("label " + std::to_string(labels.data[i]) + " at flat index " +
                            std::to_string(i) + " is outside [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

Tensor cross_entropy_with_softmax(const Tensor& logits, const LabelMap& labels) {
  check_labels(logits, labels);
  const auto b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const float* px = logits.data().data();
  // Softmax probabilities are kept for the backward rule.
  std::vector<float> prob(static_cast<std::size_t>(logits.numel()));
  double total = 0.0;
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t i = 0; i < hw; ++i) {
      const float* base = px + bi * k * hw + i;
      float mx = base[0];
      for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, base[c * hw]);
      float z = 0.0f;
      for (std::int64_t c = 0; c < k; ++c) {
        const float e = std::exp(base[c * hw] - mx);
        prob[static_cast<std::size_t>(bi * k * hw + c * hw + i)] = e;
        z += e;
      }
      for (std::int64_t c = 0; c < k; ++c) prob[static_cast<std::size_t>(bi * k * hw + c * hw + i)] /= z;
      const auto label = labels.data[static_cast<std::size_t>(bi * hw + i)];
      total += static_cast<double>(std::log(z) + mx - base[label * hw]);
    }
  }
  const auto n = static_cast<double>(b * hw);
  Tensor y = make_output({1}, {static_cast<float>(total / n)});
  auto ix = logits.impl();
  record(y, {&logits},
         [ix, prob = std::move(prob), labels = labels.data, b, k, hw, n](std::span<const float> g) {
           float* gx = grad_buffer(ix);
           if (!gx) return;
           const auto share = static_cast<float>(g[0] / n);
           for (std::int64_t bi = 0; bi < b; ++bi) {
             for (std::int64_t c = 0; c < k; ++c) {
               for (std::int64_t i = 0; i < hw; ++i) {
                 const auto idx = static_cast<std::size_t>(bi * k * hw + c * hw + i);
                 const float target = labels[static_cast<std::size_t>(bi * hw + i)] == c ? 1.0f : 0.0f;
                 gx[idx] += share * (prob[idx] - target);
               }
             }
           }
         });
  return y;
}

Tensor one_hot(const LabelMap& labels, std::int64_t num_classes) {
  if (labels.dims.size() != 3) {
    throw ShapeError("one_hot: labels must be B×H×W, got " + shape_str(labels.dims));
  }
  const auto b = labels.dims[0], hw = labels.dims[1] * labels.dims[2];
  std::vector<float> out(static_cast<std::size_t>(b * num_classes * hw), 0.0f);
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t i = 0; i < hw; ++i) {
      const auto c = labels.data[static_cast<std::size_t>(bi * hw + i)];
      if (c >= num_classes) {
        throw ValidationError("label " + std::to_string(c) + " at flat index " +
                              std::to_string(bi * hw + i) + " is outside [0, " +
                              std::to_string(num_classes) + ")");
      }
      out[static_cast<std::size_t>((bi * num_classes + c) * hw + i)] = 1.0f;
    }
  }
  return Tensor({b, num_classes, labels.dims[1], labels.dims[2]}, std::move(out));
}

}  // namespace jcapa::ops
