#include "jcapa/transformer.hpp"

#include <cmath>

#include "jcapa/error.hpp"
#include "jcapa/ops.hpp"

namespace jcapa {

TransformerLayerParams TransformerLayerParams::init(std::int64_t dim, std::int64_t heads,
                                                    std::int64_t mlp_ratio,
                                                    std::mt19937_64& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const auto hidden = dim * mlp_ratio;
  TransformerLayerParams p;
  p.heads = heads;
  p.ln1_gamma = Tensor::full({dim}, 1.0f, true);
  p.ln1_beta = Tensor::zeros({dim}, true);
  p.wq = init_uniform({dim, dim}, dim, rng);
  p.bq = Tensor::zeros({dim}, true);
  p.wk = init_uniform({dim, dim}, dim, rng);
  p.bk = Tensor::zeros({dim}, true);
  p.wv = init_uniform({dim, dim}, dim, rng);
  p.bv = Tensor::zeros({dim}, true);
  p.wo = init_uniform({dim, dim}, dim, rng);
  p.bo = Tensor::zeros({dim}, true);
  p.ln2_gamma = Tensor::full({dim}, 1.0f, true);
  p.ln2_beta = Tensor::zeros({dim}, true);
  p.fc1_w = init_uniform({dim, hidden}, dim, rng);
  p.fc1_b = Tensor::zeros({hidden}, true);
  p.fc2_w = init_uniform({hidden, dim}, hidden, rng);
  p.fc2_b = Tensor::zeros({dim}, true);
  return p;
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_bias(ops::matmul(x, w), b);
}

// (B·N)×D → (B·heads)×N×dh
Tensor split_heads(const Tensor& x, std::int64_t b, std::int64_t n, std::int64_t heads,
                   std::int64_t dh) {
  Tensor t = ops::permute(ops::reshape(x, {b, n, heads, dh}), {0, 2, 1, 3});
  return ops::reshape(t, {b * heads, n, dh});
}

}  // namespace

Tensor transformer_layer_forward(const Tensor& tokens, const TransformerLayerParams& p,
                                 AttentionTrace* trace) {
  if (tokens.rank() != 3) {
    throw ShapeError("transformer layer expects B×N×D tokens, got " + shape_str(tokens.dims()));
  }
  const auto b = tokens.dim(0), n = tokens.dim(1), d = tokens.dim(2);
  if (p.wq.dim(0) != d) {
    throw ShapeError("transformer layer built for width " + std::to_string(p.wq.dim(0)) +
                     ", tokens have " + std::to_string(d));
  }
  const auto heads = p.heads;
  const auto dh = d / heads;

  Tensor flat = ops::reshape(tokens, {b * n, d});
  Tensor normed = ops::layer_norm(flat, p.ln1_gamma, p.ln1_beta);
  Tensor q = split_heads(linear(normed, p.wq, p.bq), b, n, heads, dh);
  Tensor k = split_heads(linear(normed, p.wk, p.bk), b, n, heads, dh);
  Tensor v = split_heads(linear(normed, p.wv, p.bv), b, n, heads, dh);

  Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k)),
                             1.0f / std::sqrt(static_cast<float>(dh)));
  Tensor attention = ops::softmax_rows(scores);
  if (trace) trace->self_attention.push_back(attention.detach());

  Tensor context = ops::reshape(ops::matmul(attention, v), {b, heads, n, dh});
  context = ops::reshape(ops::permute(context, {0, 2, 1, 3}), {b * n, d});
  Tensor residual = ops::add(flat, linear(context, p.wo, p.bo));

  Tensor hidden = ops::relu(linear(ops::layer_norm(residual, p.ln2_gamma, p.ln2_beta), p.fc1_w,
                                   p.fc1_b));
  Tensor out = ops::add(residual, linear(hidden, p.fc2_w, p.fc2_b));
  return ops::reshape(out, {b, n, d});
}

}  // namespace jcapa
