#include "jcapa/attention.hpp"

#include <cmath>
#include <string>

#include "jcapa/error.hpp"
#include "jcapa/ops.hpp"

namespace jcapa {

Tensor init_uniform(Shape dims, std::int64_t fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(dims), true);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

CamParams CamParams::init(std::int64_t channels, std::mt19937_64& rng) {
  CamParams p;
  p.wq = init_uniform({channels, channels, 1, 1}, channels, rng);
  p.wk = init_uniform({channels, channels, 1, 1}, channels, rng);
  p.gamma = Tensor::scalar(0.0f, true);
  return p;
}

PamParams PamParams::init(std::int64_t channels, std::mt19937_64& rng, std::vector<double> scales) {
  if (channels % 8 != 0) {
    throw ConfigError("pyramid attention needs channels divisible by 8, got " +
                      std::to_string(channels));
  }
  PamParams p;
  const auto reduced = channels / 8;
  p.wq = init_uniform({reduced, channels, 1, 1}, channels, rng);
  p.wk = init_uniform({reduced, channels, 1, 1}, channels, rng);
  p.wv = init_uniform({channels, channels, 1, 1}, channels, rng);
  p.gamma = Tensor::scalar(0.0f, true);
  p.scales = std::move(scales);
  p.pool_factors();
  return p;
}

std::vector<int> PamParams::pool_factors() const {
  if (scales.empty()) throw ConfigError("pyramid attention needs at least one scale");
  std::vector<int> factors;
  for (double s : scales) {
    if (!(s > 0.0) || s > 1.0) throw ConfigError("scale " + std::to_string(s) + " outside (0, 1]");
    const double inv = 1.0 / s;
    const auto f = static_cast<int>(std::lround(inv));
    if (std::abs(inv - f) > 1e-9) {
      throw ConfigError("scale " + std::to_string(s) + " is not the reciprocal of an integer");
    }
    factors.push_back(f);
  }
  return factors;
}

JointBlockParams JointBlockParams::init(std::int64_t channels, std::mt19937_64& rng,
                                        std::vector<double> scales) {
  JointBlockParams p;
  p.cam = CamParams::init(channels, rng);
  p.pam = PamParams::init(channels, rng, std::move(scales));
  p.refine_w = init_uniform({channels, channels, 3, 3}, channels * 9, rng);
  p.refine_b = Tensor::zeros({channels}, true);
  return p;
}

namespace {

void check_feature_map(const Tensor& x, std::int64_t channels, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected B×C×H×W input, got " + shape_str(x.dims()));
  }
  if (x.dim(1) != channels) {
    throw ShapeError(std::string(op) + ": parameters are for " + std::to_string(channels) +
                     " channels, input has " + std::to_string(x.dim(1)));
  }
}

}  // namespace

Tensor cam_forward(const Tensor& x, const CamParams& p, AttentionTrace* trace) {
  check_feature_map(x, p.channels(), "cam_forward");
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto n = h * w;

  const Tensor none;
  Tensor query = ops::reshape(ops::conv2d(x, p.wq, none, 1, 0), {b, c, n});
  Tensor key = ops::reshape(ops::conv2d(x, p.wk, none, 1, 0), {b, c, n});
  Tensor energy = ops::matmul(query, ops::transpose(key));
  Tensor attention = ops::softmax_rows(ops::row_max_minus(energy));
  if (trace) trace->channel.push_back(attention.detach());

  Tensor value = ops::reshape(x, {b, c, n});
  Tensor out = ops::reshape(ops::matmul(attention, value), {b, c, h, w});
  return ops::add(ops::scale_by(out, p.gamma), x);
}

Tensor pam_forward(const Tensor& x, const PamParams& p, AttentionTrace* trace) {
  check_feature_map(x, p.channels(), "pam_forward");
  if (p.channels() % 8 != 0) {
    throw ShapeError("pam_forward: channels " + std::to_string(p.channels()) +
                     " not divisible by 8");
  }
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto reduced = p.wq.dim(0);
  const auto factors = p.pool_factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (h % factors[i] != 0 || w % factors[i] != 0) {
      throw ShapeError("pam_forward: scale " + std::to_string(p.scales[i]) + " (factor " +
                       std::to_string(factors[i]) + ") does not divide the " +
                       std::to_string(h) + "x" + std::to_string(w) + " map");
    }
  }

  const Tensor none;
  Tensor combined;
  for (int factor : factors) {
    Tensor xs = factor == 1 ? x : ops::avg_pool2d(x, factor);
    const auto hs = h / factor, ws = w / factor, ns = hs * ws;
    Tensor query = ops::reshape(ops::conv2d(xs, p.wq, none, 1, 0), {b, reduced, ns});
    Tensor key = ops::reshape(ops::conv2d(xs, p.wk, none, 1, 0), {b, reduced, ns});
    Tensor value = ops::reshape(ops::conv2d(xs, p.wv, none, 1, 0), {b, c, ns});

    // Rows index query positions.
    Tensor attention = ops::softmax_rows(ops::matmul(ops::transpose(query), key));
    if (trace) trace->pyramid.push_back(attention.detach());

    Tensor out = ops::reshape(ops::matmul(value, ops::transpose(attention)), {b, c, hs, ws});
    out = ops::bilinear_resize(out, h, w);
    combined = combined.defined() ? ops::add(combined, out) : out;
  }
  combined = ops::scale(combined, 1.0f / static_cast<float>(factors.size()));
  return ops::add(ops::scale_by(combined, p.gamma), x);
}

Tensor attention_block_forward(const Tensor& x, const CamParams* cam, const PamParams* pam,
                               const Tensor& refine_w, const Tensor& refine_b,
                               AttentionTrace* trace) {
  if (!cam && !pam) throw ContractError("attention block needs CAM, PAM or both");
  Tensor fused;
  if (pam) fused = pam_forward(x, *pam, trace);
  if (cam) {
    Tensor channel = cam_forward(x, *cam, trace);
    fused = fused.defined() ? ops::add(fused, channel) : channel;
  }
  return ops::relu(ops::conv2d(fused, refine_w, refine_b, 1, 1));
}

Tensor joint_forward(const Tensor& x, const JointBlockParams& p, AttentionTrace* trace) {
  return attention_block_forward(x, &p.cam, &p.pam, p.refine_w, p.refine_b, trace);
}

}  // namespace jcapa
