#pragma once

#include <cstdint>
#include <random>

#include "jcapa/attention.hpp"
#include "jcapa/tensor.hpp"

namespace jcapa {

/// Pre-norm transformer encoder layer. Linear weights are stored in×out.
struct TransformerLayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
  std::int64_t heads = 1;

  static TransformerLayerParams init(std::int64_t dim, std::int64_t heads, std::int64_t mlp_ratio,
                                     std::mt19937_64& rng);
};

/// tokens: B×N×D. LN → multi-head self-attention → residual → LN → MLP → residual.
Tensor transformer_layer_forward(const Tensor& tokens, const TransformerLayerParams& p,
                                 AttentionTrace* trace = nullptr);

}  // namespace jcapa
