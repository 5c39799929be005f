#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "jcapa/tensor.hpp"

namespace jcapa {

/// Channel attention parameters. Query and key are 1×1 projections; the
/// value path is the raw input.
struct CamParams {
  Tensor wq;     // C×C×1×1
  Tensor wk;     // C×C×1×1
  Tensor gamma;  // {1}, initialized to exactly 0

  static CamParams init(std::int64_t channels, std::mt19937_64& rng);
  std::int64_t channels() const { return wq.dim(0); }
};

/// Pyramid attention parameters. One set of projections is shared by
/// every scale.
struct PamParams {
  Tensor wq;     // (C/8)×C×1×1
  Tensor wk;     // (C/8)×C×1×1
  Tensor wv;     // C×C×1×1
  Tensor gamma;  // {1}, initialized to exactly 0
  // Each scale is the reciprocal of an integer pooling factor.
  std::vector<double> scales{1.0, 0.5, 0.25};

  static PamParams init(std::int64_t channels, std::mt19937_64& rng,
                        std::vector<double> scales = {1.0, 0.5, 0.25});
  std::int64_t channels() const { return wv.dim(0); }
  /// Pooling factors (1/s) in scale order; throws ConfigError for scales
  /// that are not reciprocals of positive integers.
  std::vector<int> pool_factors() const;
};

/// CAM and PAM in parallel, summed, then a 3×3 channel-preserving refine conv.
struct JointBlockParams {
  CamParams cam;
  PamParams pam;
  Tensor refine_w;  // C×C×3×3
  Tensor refine_b;  // C

  static JointBlockParams init(std::int64_t channels, std::mt19937_64& rng,
                               std::vector<double> scales = {1.0, 0.5, 0.25});
};

/// Optional sink for attention matrices produced during a forward pass.
struct AttentionTrace {
  std::vector<Tensor> channel;          // B×C×C per CAM call
  std::vector<Tensor> pyramid;          // B×Ns×Ns per PAM scale
  std::vector<Tensor> self_attention;   // (B·heads)×N×N per transformer layer
};

/// Uniform in ±sqrt(1/fan_in).
Tensor init_uniform(Shape dims, std::int64_t fan_in, std::mt19937_64& rng);

Tensor cam_forward(const Tensor& x, const CamParams& p, AttentionTrace* trace = nullptr);
Tensor pam_forward(const Tensor& x, const PamParams& p, AttentionTrace* trace = nullptr);
Tensor joint_forward(const Tensor& x, const JointBlockParams& p, AttentionTrace* trace = nullptr);

/// relu(conv3×3(Σ enabled attention outputs)). Either module may be null,
/// which gives the single-attention ablation blocks; with both set this is
/// joint_forward.
Tensor attention_block_forward(const Tensor& x, const CamParams* cam, const PamParams* pam,
                               const Tensor& refine_w, const Tensor& refine_b,
                               AttentionTrace* trace = nullptr);

}  // namespace jcapa
