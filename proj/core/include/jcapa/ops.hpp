#pragma once

#include <cstdint>
#include <vector>

#include "jcapa/label_map.hpp"
#include "jcapa/tensor.hpp"

// Differentiable primitives. Every op validates shapes (ShapeError), computes
// its forward in float32 and, when any input requires grad, records a
// backward rule on the current thread's tape.
namespace jcapa::ops {

// ---- linear algebra -------------------------------------------------------

/// m×k · k×n, or batched b×m×k · b×k×n.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor reshape(const Tensor& x, Shape dims);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);
Tensor add_scalar(const Tensor& x, float s);
/// x * s for a learnable single-element tensor s.
Tensor scale_by(const Tensor& x, const Tensor& s);
/// Adds a vector along the last axis (x: ...×n, bias: n).
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- normalization & softmax ----------------------------------------------

/// Softmax over the last axis, with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);
/// y[i,j] = max_k x[i,k] - x[i,j] over the last axis.
Tensor row_max_minus(const Tensor& x);
/// Normalizes over the last axis with learnable scale/shift (size = last dim).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// ---- feature maps (B×C×H×W) -------------------------------------------------

Tensor concat_channels(const std::vector<Tensor>& maps);
/// Cross-correlation. `bias` may be undefined. Output extent is
/// floor((H + 2·pad − kh) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad);
/// Bilinear resize, align_corners=false: src = (i + 0.5)·(in/out) − 0.5, clamped.
Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w);
/// Non-overlapping factor×factor mean pooling.
Tensor avg_pool2d(const Tensor& x, int factor);
/// Softmax across the channel axis of B×C×H×W.
Tensor softmax_channels(const Tensor& x);
/// Sums B×C×H×W over everything except channels, giving {C}.
Tensor channel_sum(const Tensor& x);

// ---- losses -----------------------------------------------------------------

/// Mean over pixels of −log softmax(logits)[label]. logits B×K×H×W, labels B×H×W.
Tensor cross_entropy_with_softmax(const Tensor& logits, const LabelMap& labels);
/// Constant one-hot encoding of labels as B×K×H×W.
Tensor one_hot(const LabelMap& labels, std::int64_t num_classes);

}  // namespace jcapa::ops
