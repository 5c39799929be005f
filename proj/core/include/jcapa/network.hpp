#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "jcapa/attention.hpp"
#include "jcapa/label_map.hpp"
#include "jcapa/tensor.hpp"
#include "jcapa/transformer.hpp"

namespace jcapa {

/// Ablation variants, in reporting order.
enum class Variant { kBaseline, kCam, kPam, kJoint, kCutMix, kFull };

inline constexpr Variant kAllVariants[] = {Variant::kBaseline, Variant::kCam,    Variant::kPam,
                                           Variant::kJoint,    Variant::kCutMix, Variant::kFull};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
bool variant_uses_cam(Variant v);
bool variant_uses_pam(Variant v);
bool variant_uses_cutmix(Variant v);

struct TransformerConfig {
  std::int64_t embed_dim = 64;
  std::int64_t heads = 2;
  std::int64_t mlp_ratio = 2;
  std::int64_t layers = 1;
  bool operator==(const TransformerConfig&) const = default;
};

struct NetworkConfig {
  std::int64_t in_channels = 1;
  std::int64_t num_classes = 9;
  std::int64_t base_channels = 16;
  std::int64_t image_size = 64;
  TransformerConfig transformer;
  std::vector<double> scales{1.0, 0.5, 0.25};

  /// Throws ConfigError. The bottleneck width 4·base_channels must equal
  /// transformer.embed_dim.
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// Pyramid scales usable on an h×w map: a factor is kept when it divides
/// both sides and leaves at least 4 pixels per side (factor 1 always fits).
std::vector<double> clip_scales(const std::vector<double>& scales, std::int64_t h, std::int64_t w);

/// Named parameters of one network instance. Names are dotted paths such
/// as "enc.stage1.conv1.w"; iteration order is lexicographic.
class ModelState {
 public:
  static ModelState create(const NetworkConfig& config, Variant variant, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  Variant variant() const { return variant_; }

  const std::map<std::string, Tensor>& params() const { return params_; }
  const Tensor& param(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::vector<Tensor> parameter_list() const;
  std::int64_t parameter_count() const;
  void zero_grad();

 private:
  ModelState(NetworkConfig config, Variant variant)
      : config_(std::move(config)), variant_(variant) {}
  void add(const std::string& name, Tensor t);

  NetworkConfig config_;
  Variant variant_;
  std::map<std::string, Tensor> params_;
};

struct EncoderOutput {
  std::vector<Tensor> skips;  // F1 (B×c×H/2×W/2), F2 (B×2c×H/4×W/4)
  Tensor bottleneck;          // B×4c×H/8×W/8, after the transformer layers
};

EncoderOutput encode(const Tensor& x, const ModelState& m, AttentionTrace* trace = nullptr);
/// Refines bottleneck and skips with the variant's attention blocks, then
/// upsamples to full resolution. Returns logits B×K×H×W.
Tensor decode(const Tensor& bottleneck, const std::vector<Tensor>& skips, const ModelState& m,
              AttentionTrace* trace = nullptr);
Tensor forward(const Tensor& x, const ModelState& m, AttentionTrace* trace = nullptr);

/// 0.5·cross-entropy + 0.5·(1 − mean soft Dice over all K classes).
Tensor segmentation_loss(const Tensor& logits, const LabelMap& labels, float smooth = 1e-5f);

/// Per-pixel argmax over channels, B×H×W. Ties resolve to the lowest class.
LabelMap argmax_labels(const Tensor& logits);

}  // namespace jcapa
