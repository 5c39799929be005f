#include "jcapa/network.hpp"

#include <cmath>
#include <random>

#include "jcapa/error.hpp"
#include "jcapa/ops.hpp"

namespace jcapa {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kCam: return "cam";
    case Variant::kPam: return "pam";
    case Variant::kJoint: return "joint";
    case Variant::kCutMix: return "cutmix";
    case Variant::kFull: return "full";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected baseline, cam, pam, joint, cutmix or full)");
}

bool variant_uses_cam(Variant v) {
  return v == Variant::kCam || v == Variant::kJoint || v == Variant::kFull;
}

bool variant_uses_pam(Variant v) {
  return v == Variant::kPam || v == Variant::kJoint || v == Variant::kFull;
}

bool variant_uses_cutmix(Variant v) { return v == Variant::kCutMix || v == Variant::kFull; }

void NetworkConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (num_classes < 2 || num_classes > 255) throw ConfigError("num_classes must be in [2, 255]");
  if (base_channels < 8 || base_channels % 8 != 0) {
    throw ConfigError("base_channels must be a positive multiple of 8, got " +
                      std::to_string(base_channels));
  }
  if (image_size < 8 || image_size % 8 != 0) {
    throw ConfigError("image_size must be a positive multiple of 8, got " +
                      std::to_string(image_size));
  }
  if (transformer.embed_dim != 4 * base_channels) {
    throw ConfigError("transformer.embed_dim (" + std::to_string(transformer.embed_dim) +
                      ") must equal 4·base_channels (" + std::to_string(4 * base_channels) + ")");
  }
  if (transformer.heads < 1 || transformer.embed_dim % transformer.heads != 0) {
    throw ConfigError("transformer.heads must divide embed_dim");
  }
  if (transformer.mlp_ratio < 1) throw ConfigError("transformer.mlp_ratio must be >= 1");
  if (transformer.layers < 0) throw ConfigError("transformer.layers must be >= 0");
  PamParams probe;
  probe.scales = scales;
  probe.pool_factors();
}

std::vector<double> clip_scales(const std::vector<double>& scales, std::int64_t h, std::int64_t w) {
  PamParams probe;
  probe.scales = scales;
  const auto factors = probe.pool_factors();
  std::vector<double> kept;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto f = factors[i];
    if (f == 1 || (h % f == 0 && w % f == 0 && std::min(h, w) / f >= 4)) kept.push_back(scales[i]);
  }
  if (kept.empty()) kept.push_back(1.0);
  return kept;
}

// ---- parameters --------------------------------------------------------------

namespace {

constexpr int kSites = 3;

std::int64_t site_channels(const NetworkConfig& c, int site) {
  return c.base_channels << (site - 1);
}

std::string site_prefix(int site) { return "attn" + std::to_string(site) + "."; }

// He-uniform for convs feeding a ReLU.
Tensor conv_weight(std::int64_t out, std::int64_t in, std::int64_t k, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(in * k * k));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Tensor t = Tensor::zeros({out, in, k, k}, true);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

}  // namespace

void ModelState::add(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  if (!params_.emplace(name, std::move(t)).second) {
    throw ContractError("duplicate parameter name " + name);
  }
}

ModelState ModelState::create(const NetworkConfig& config, Variant variant, std::uint64_t seed) {
  config.validate();
  ModelState m(config, variant);
  std::mt19937_64 rng(seed);
  const auto c = config.base_channels;

  std::int64_t in = config.in_channels;
  for (int s = 1; s <= kSites; ++s) {
    const auto out = c << (s - 1);
    const std::string p = "enc.stage" + std::to_string(s) + ".";
    m.add(p + "conv1.w", conv_weight(out, in, 3, rng));
    m.add(p + "conv1.b", Tensor::zeros({out}));
    m.add(p + "conv2.w", conv_weight(out, out, 3, rng));
    m.add(p + "conv2.b", Tensor::zeros({out}));
    in = out;
  }

  const auto& tc = config.transformer;
  for (std::int64_t l = 0; l < tc.layers; ++l) {
    auto t = TransformerLayerParams::init(tc.embed_dim, tc.heads, tc.mlp_ratio, rng);
    const std::string p = "enc.transformer" + std::to_string(l) + ".";
    m.add(p + "ln1.g", t.ln1_gamma);
    m.add(p + "ln1.b", t.ln1_beta);
    m.add(p + "attn.wq", t.wq);
    m.add(p + "attn.bq", t.bq);
    m.add(p + "attn.wk", t.wk);
    m.add(p + "attn.bk", t.bk);
    m.add(p + "attn.wv", t.wv);
    m.add(p + "attn.bv", t.bv);
    m.add(p + "attn.wo", t.wo);
    m.add(p + "attn.bo", t.bo);
    m.add(p + "ln2.g", t.ln2_gamma);
    m.add(p + "ln2.b", t.ln2_beta);
    m.add(p + "mlp.fc1.w", t.fc1_w);
    m.add(p + "mlp.fc1.b", t.fc1_b);
    m.add(p + "mlp.fc2.w", t.fc2_w);
    m.add(p + "mlp.fc2.b", t.fc2_b);
  }

  const bool cam = variant_uses_cam(variant);
  const bool pam = variant_uses_pam(variant);
  if (cam || pam) {
    for (int s = 1; s <= kSites; ++s) {
      const auto ch = site_channels(config, s);
      const auto p = site_prefix(s);
      if (cam) {
        auto cp = CamParams::init(ch, rng);
        m.add(p + "cam.wq", cp.wq);
        m.add(p + "cam.wk", cp.wk);
        m.add(p + "cam.gamma", cp.gamma);
      }
      if (pam) {
        auto pp = PamParams::init(ch, rng, {1.0});
        m.add(p + "pam.wq", pp.wq);
        m.add(p + "pam.wk", pp.wk);
        m.add(p + "pam.wv", pp.wv);
        m.add(p + "pam.gamma", pp.gamma);
      }
      m.add(p + "refine.w", init_uniform({ch, ch, 3, 3}, ch * 9, rng));
      m.add(p + "refine.b", Tensor::zeros({ch}));
    }
  }

  // Decoder: two upsample+skip stages, then a full-resolution head.
  m.add("dec.up1.conv.w", conv_weight(2 * c, 4 * c + 2 * c, 3, rng));
  m.add("dec.up1.conv.b", Tensor::zeros({2 * c}));
  m.add("dec.up2.conv.w", conv_weight(c, 2 * c + c, 3, rng));
  m.add("dec.up2.conv.b", Tensor::zeros({c}));
  m.add("dec.head.conv.w", conv_weight(c, c, 3, rng));
  m.add("dec.head.conv.b", Tensor::zeros({c}));
  m.add("dec.head.out.w", init_uniform({config.num_classes, c, 1, 1}, c, rng));
  m.add("dec.head.out.b", Tensor::zeros({config.num_classes}));
  return m;
}

const Tensor& ModelState::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("no parameter named " + name);
  return it->second;
}

std::vector<Tensor> ModelState::parameter_list() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

std::int64_t ModelState::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ModelState::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

// ---- forward -------------------------------------------------------------------

namespace {

TransformerLayerParams transformer_params(const ModelState& m, std::int64_t layer) {
  const std::string p = "enc.transformer" + std::to_string(layer) + ".";
  TransformerLayerParams t;
  t.heads = m.config().transformer.heads;
  t.ln1_gamma = m.param(p + "ln1.g");
  t.ln1_beta = m.param(p + "ln1.b");
  t.wq = m.param(p + "attn.wq");
  t.bq = m.param(p + "attn.bq");
  t.wk = m.param(p + "attn.wk");
  t.bk = m.param(p + "attn.bk");
  t.wv = m.param(p + "attn.wv");
  t.bv = m.param(p + "attn.bv");
  t.wo = m.param(p + "attn.wo");
  t.bo = m.param(p + "attn.bo");
  t.ln2_gamma = m.param(p + "ln2.g");
  t.ln2_beta = m.param(p + "ln2.b");
  t.fc1_w = m.param(p + "mlp.fc1.w");
  t.fc1_b = m.param(p + "mlp.fc1.b");
  t.fc2_w = m.param(p + "mlp.fc2.w");
  t.fc2_b = m.param(p + "mlp.fc2.b");
  return t;
}

Tensor conv_relu(const Tensor& x, const ModelState& m, const std::string& prefix, int stride) {
  return ops::relu(ops::conv2d(x, m.param(prefix + ".w"), m.param(prefix + ".b"), stride, 1));
}

Tensor refine_site(const Tensor& x, const ModelState& m, int site, AttentionTrace* trace) {
  const Variant v = m.variant();
  const bool cam = variant_uses_cam(v);
  const bool pam = variant_uses_pam(v);
  if (!cam && !pam) return x;

  const auto p = site_prefix(site);
  CamParams cp;
  PamParams pp;
  if (cam) {
    cp.wq = m.param(p + "cam.wq");
    cp.wk = m.param(p + "cam.wk");
    cp.gamma = m.param(p + "cam.gamma");
  }
  if (pam) {
    pp.wq = m.param(p + "pam.wq");
    pp.wk = m.param(p + "pam.wk");
    pp.wv = m.param(p + "pam.wv");
    pp.gamma = m.param(p + "pam.gamma");
    pp.scales = clip_scales(m.config().scales, x.dim(2), x.dim(3));
  }
  return attention_block_forward(x, cam ? &cp : nullptr, pam ? &pp : nullptr,
                                 m.param(p + "refine.w"), m.param(p + "refine.b"), trace);
}

}  // namespace

EncoderOutput encode(const Tensor& x, const ModelState& m, AttentionTrace* trace) {
  const auto& cfg = m.config();
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.image_size ||
      x.dim(3) != cfg.image_size) {
    throw ShapeError("encode: expected B×" + std::to_string(cfg.in_channels) + "×" +
                     std::to_string(cfg.image_size) + "×" + std::to_string(cfg.image_size) +
                     " input, got " + shape_str(x.dims()));
  }
  EncoderOutput out;
  Tensor h = x;
  for (int s = 1; s <= kSites; ++s) {
    const std::string p = "enc.stage" + std::to_string(s);
    h = conv_relu(h, m, p + ".conv1", 1);
    h = conv_relu(h, m, p + ".conv2", 2);
    if (s < kSites) out.skips.push_back(h);
  }

  const auto b = h.dim(0), d = h.dim(1), hh = h.dim(2), ww = h.dim(3);
  Tensor tokens = ops::permute(ops::reshape(h, {b, d, hh * ww}), {0, 2, 1});
  for (std::int64_t l = 0; l < cfg.transformer.layers; ++l) {
    tokens = transformer_layer_forward(tokens, transformer_params(m, l), trace);
  }
  out.bottleneck = ops::reshape(ops::permute(tokens, {0, 2, 1}), {b, d, hh, ww});
  return out;
}

Tensor decode(const Tensor& bottleneck, const std::vector<Tensor>& skips, const ModelState& m,
              AttentionTrace* trace) {
  if (skips.size() != 2) throw ShapeError("decode: expected two skip maps");
  const auto& cfg = m.config();

  Tensor deep = refine_site(bottleneck, m, 3, trace);
  Tensor mid = refine_site(skips[1], m, 2, trace);
  Tensor shallow = refine_site(skips[0], m, 1, trace);

  Tensor h = ops::bilinear_resize(deep, mid.dim(2), mid.dim(3));
  h = conv_relu(ops::concat_channels({h, mid}), m, "dec.up1.conv", 1);
  h = ops::bilinear_resize(h, shallow.dim(2), shallow.dim(3));
  h = conv_relu(ops::concat_channels({h, shallow}), m, "dec.up2.conv", 1);
  h = ops::bilinear_resize(h, cfg.image_size, cfg.image_size);
  h = conv_relu(h, m, "dec.head.conv", 1);
  return ops::conv2d(h, m.param("dec.head.out.w"), m.param("dec.head.out.b"), 1, 0);
}

Tensor forward(const Tensor& x, const ModelState& m, AttentionTrace* trace) {
  auto enc = encode(x, m, trace);
  return decode(enc.bottleneck, enc.skips, m, trace);
}

Tensor segmentation_loss(const Tensor& logits, const LabelMap& labels, float smooth) {
  Tensor ce = ops::cross_entropy_with_softmax(logits, labels);
  Tensor probs = ops::softmax_channels(logits);
  Tensor target = ops::one_hot(labels, logits.dim(1));
  Tensor inter = ops::channel_sum(ops::mul(probs, target));
  Tensor denom = ops::add(ops::channel_sum(probs), ops::channel_sum(target));
  Tensor dice = ops::div(ops::add_scalar(ops::scale(inter, 2.0f), smooth),
                         ops::add_scalar(denom, smooth));
  Tensor dice_loss = ops::add_scalar(ops::scale(ops::mean(dice), -1.0f), 1.0f);
  return ops::add(ops::scale(ce, 0.5f), ops::scale(dice_loss, 0.5f));
}

LabelMap argmax_labels(const Tensor& logits) {
  if (logits.rank() != 4) throw ShapeError("argmax_labels: expected B×K×H×W logits");
  const auto b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  LabelMap out = LabelMap::zeros({b, logits.dim(2), logits.dim(3)});
  const float* p = logits.data().data();
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t i = 0; i < hw; ++i) {
      const float* base = p + bi * k * hw + i;
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < k; ++c) {
        if (base[c * hw] > base[best * hw]) best = c;
      }
      out.data[static_cast<std::size_t>(bi * hw + i)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

}  // namespace jcapa
