#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jcapa/error.hpp"
#include "jcapa/gradcheck.hpp"
#include "jcapa/network.hpp"
#include "jcapa/ops.hpp"
#include "jcapa/optimizer.hpp"
#include "jcapa/transformer.hpp"
#include "oracles.hpp"

using namespace jcapa;
using oracle::random_tensor;

namespace {

NetworkConfig small_config(std::int64_t base = 8, std::int64_t size = 16, std::int64_t k = 3) {
  NetworkConfig c;
  c.base_channels = base;
  c.image_size = size;
  c.num_classes = k;
  c.transformer.embed_dim = 4 * base;
  return c;
}

LabelMap random_labels(const Shape& dims, int k, std::mt19937_64& rng) {
  LabelMap m = LabelMap::zeros(dims);
  std::uniform_int_distribution<int> d(0, k - 1);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(d(rng));
  return m;
}

// 0.5·CE + 0.5·(1 − mean_k soft Dice_k), all in double.
double loss_reference(const Tensor& logits, const LabelMap& labels, double smooth = 1e-5) {
  const auto b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  double ce = 0;
  std::vector<double> inter(k, 0), psum(k, 0), tsum(k, 0);
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t i = 0; i < hw; ++i) {
      double mx = -1e300;
      for (std::int64_t c = 0; c < k; ++c) mx = std::max<double>(mx, logits.data()[(n * k + c) * hw + i]);
      double z = 0;
      for (std::int64_t c = 0; c < k; ++c) z += std::exp(logits.data()[(n * k + c) * hw + i] - mx);
      const int y = labels.data[n * hw + i];
      ce -= logits.data()[(n * k + y) * hw + i] - mx - std::log(z);
      for (std::int64_t c = 0; c < k; ++c) {
        const double p = std::exp(logits.data()[(n * k + c) * hw + i] - mx) / z;
        psum[c] += p;
        tsum[c] += (c == y);
        inter[c] += (c == y) * p;
      }
    }
  }
  ce /= double(b * hw);
  double dice = 0;
  for (std::int64_t c = 0; c < k; ++c) dice += (2 * inter[c] + smooth) / (psum[c] + tsum[c] + smooth);
  return 0.5 * ce + 0.5 * (1.0 - dice / double(k));
}

}  // namespace

TEST(Network, EncoderShapesForDefaultConfig) {
  const ModelState m = ModelState::create(NetworkConfig{}, Variant::kFull, 1);
  NoGradGuard g;
  const auto enc = encode(Tensor::zeros({1, 1, 64, 64}), m);
  ASSERT_EQ(enc.skips.size(), 2u);
  EXPECT_EQ(enc.skips[0].dims(), (Shape{1, 16, 32, 32}));
  EXPECT_EQ(enc.skips[1].dims(), (Shape{1, 32, 16, 16}));
  EXPECT_EQ(enc.bottleneck.dims(), (Shape{1, 64, 8, 8}));
  for (float v : enc.bottleneck.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Network, DecoderOutputIsFiniteLogitMap) {
  std::mt19937_64 rng(1);
  const ModelState m = ModelState::create(NetworkConfig{}, Variant::kFull, 2);
  NoGradGuard g;
  const Tensor logits = forward(random_tensor({1, 1, 64, 64}, rng, 0, 1), m);
  EXPECT_EQ(logits.dims(), (Shape{1, 9, 64, 64}));
  for (float v : logits.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Network, OutputShapeAcrossConfigs) {
  std::mt19937_64 rng(2);
  for (Variant v : kAllVariants) {
    for (auto [base, size, k] : {std::tuple{8, 16, 3}, std::tuple{8, 32, 5}, std::tuple{16, 24, 2}}) {
      const ModelState m = ModelState::create(small_config(base, size, k), v, 3);
      NoGradGuard g;
      const Tensor y = forward(random_tensor({2, 1, size, size}, rng, 0, 1), m);
      EXPECT_EQ(y.dims(), (Shape{2, k, size, size})) << variant_name(v);
    }
  }
}

TEST(Network, BottleneckSelfAttentionRowsAreStochastic) {
  std::mt19937_64 rng(3);
  const ModelState m = ModelState::create(NetworkConfig{}, Variant::kFull, 4);
  NoGradGuard g;
  AttentionTrace trace;
  forward(random_tensor({2, 1, 64, 64}, rng, 0, 1), m, &trace);
  ASSERT_EQ(trace.self_attention.size(), 1u);
  EXPECT_EQ(trace.self_attention[0].dims(), (Shape{4, 64, 64}));
  EXPECT_LE(oracle::worst_row_sum_error(trace.self_attention[0]), 1e-5);
  EXPECT_EQ(trace.channel.size(), 3u);
  for (const auto& a : trace.channel) EXPECT_LE(oracle::worst_row_sum_error(a), 1e-5);
  for (const auto& a : trace.pyramid) EXPECT_LE(oracle::worst_row_sum_error(a), 1e-5);
}

TEST(Network, ForwardIsDeterministic) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({2, 1, 32, 32}, rng, 0, 1);
  const ModelState a = ModelState::create(small_config(8, 32, 4), Variant::kFull, 9);
  const ModelState b = ModelState::create(small_config(8, 32, 4), Variant::kFull, 9);
  NoGradGuard g;
  EXPECT_TRUE(oracle::bitwise_equal(forward(x, a), forward(x, a)));
  EXPECT_TRUE(oracle::bitwise_equal(forward(x, a), forward(x, b)));
}

TEST(Network, VariantsCarryTheirAttentionParameters) {
  auto count = [](const ModelState& m, const std::string& part) {
    int n = 0;
    for (const auto& [name, t] : m.params()) n += name.find(part) != std::string::npos;
    return n;
  };
  const auto cfg = small_config();
  const auto baseline = ModelState::create(cfg, Variant::kBaseline, 0);
  auto sites = [](const ModelState& m) {
    int n = 0;
    for (const auto& [name, t] : m.params()) n += name.starts_with("attn");
    return n;
  };
  EXPECT_EQ(sites(baseline), 0);
  EXPECT_EQ(sites(ModelState::create(cfg, Variant::kCutMix, 0)), 0);
  const auto cam = ModelState::create(cfg, Variant::kCam, 0);
  EXPECT_EQ(count(cam, ".cam."), 9);
  EXPECT_EQ(count(cam, ".pam."), 0);
  const auto pam = ModelState::create(cfg, Variant::kPam, 0);
  EXPECT_EQ(count(pam, ".cam."), 0);
  EXPECT_EQ(count(pam, ".pam."), 12);
  const auto full = ModelState::create(cfg, Variant::kFull, 0);
  EXPECT_EQ(count(full, ".cam."), 9);
  EXPECT_EQ(count(full, ".pam."), 12);
  EXPECT_EQ(count(full, ".refine."), 6);
  for (int s = 1; s <= 3; ++s) {
    EXPECT_EQ(full.param("attn" + std::to_string(s) + ".cam.gamma").item(), 0.0f);
    EXPECT_EQ(full.param("attn" + std::to_string(s) + ".pam.gamma").item(), 0.0f);
  }
}

TEST(Network, EveryParameterReceivesFiniteGradient) {
  std::mt19937_64 rng(5);
  const auto cfg = small_config(8, 16, 4);
  ModelState m = ModelState::create(cfg, Variant::kFull, 6);
  const Tensor x = random_tensor({2, 1, 16, 16}, rng, 0, 1);
  backward(segmentation_loss(forward(x, m), random_labels({2, 16, 16}, 4, rng)));
  for (const auto& [name, t] : m.params()) {
    ASSERT_TRUE(t.has_grad()) << name;
    for (float g : t.grad()) ASSERT_TRUE(std::isfinite(g)) << name;
  }
}

TEST(Network, ConfigValidation) {
  NetworkConfig c = small_config();
  c.image_size = 20;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.base_channels = 12;
  c.transformer.embed_dim = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.transformer.embed_dim = 64;
  EXPECT_THROW(c.validate(), ConfigError);
  const ModelState m = ModelState::create(small_config(), Variant::kFull, 0);
  EXPECT_THROW(forward(Tensor::zeros({1, 1, 32, 32}), m), ShapeError);
}

TEST(Network, ClipScalesKeepsFactorsWithFourPixelsPerSide) {
  const std::vector<double> all{1.0, 0.5, 0.25};
  EXPECT_EQ(clip_scales(all, 32, 32), all);
  EXPECT_EQ(clip_scales(all, 16, 16), all);
  EXPECT_EQ(clip_scales(all, 8, 8), (std::vector<double>{1.0, 0.5}));
  EXPECT_EQ(clip_scales(all, 4, 4), std::vector<double>{1.0});
  EXPECT_EQ(clip_scales(all, 6, 6), std::vector<double>{1.0});
}

TEST(Network, VariantNamesRoundTrip) {
  for (Variant v : kAllVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("nope"), ConfigError);
}

TEST(Network, EndToEndGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  ModelState m = ModelState::create(small_config(8, 16, 3), Variant::kFull, 8);
  for (const auto& [name, t] : m.params()) {
    if (name.ends_with("gamma")) Tensor(t).mutable_data()[0] = 0.5f;
  }
  const Tensor x = random_tensor({1, 1, 16, 16}, rng, 0, 1);
  const Tensor w = random_tensor({1, 3, 16, 16}, rng, -0.1f, 0.1f);
  const auto r = check_gradients(
      "network", [&] { return ops::sum(ops::mul(forward(x, m), w)); },
      {m.param("attn3.cam.gamma"), m.param("attn2.pam.gamma"), m.param("attn1.refine.b"),
       m.param("dec.head.out.b"), m.param("enc.transformer0.ln1.g")});
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Loss, MatchesDoubleReference) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = random_tensor({2, 4, 3, 5}, rng, -3, 3);
    const LabelMap labels = random_labels({2, 3, 5}, 4, rng);
    EXPECT_NEAR(segmentation_loss(logits, labels).item(), loss_reference(logits, labels), 1e-5);
  }
}

TEST(Loss, PeakedCorrectLogitsGiveTinyLoss) {
  std::mt19937_64 rng(10);
  const LabelMap labels = random_labels({2, 8, 8}, 9, rng);
  Tensor logits = Tensor::zeros({2, 9, 8, 8});
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t i = 0; i < 64; ++i) logits.mutable_data()[(n * 9 + labels.data[n * 64 + i]) * 64 + i] = 30.0f;
  EXPECT_LT(segmentation_loss(logits, labels).item(), 0.01f);
}

TEST(Loss, UniformLogitsGiveLogKCrossEntropy) {
  const LabelMap labels = LabelMap::zeros({1, 4, 4});
  const Tensor logits = Tensor::zeros({1, 9, 4, 4});
  EXPECT_NEAR(ops::cross_entropy_with_softmax(logits, labels).item(), std::log(9.0), 1e-6);
  EXPECT_NEAR(segmentation_loss(logits, labels).item(), loss_reference(logits, labels), 1e-6);
}

TEST(Loss, OutOfRangeLabelNamesIndex) {
  LabelMap labels = LabelMap::zeros({1, 2, 2});
  labels.data[2] = 7;
  try {
    segmentation_loss(Tensor::zeros({1, 3, 2, 2}), labels);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos) << e.what();
  }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor logits = random_tensor({1, 3, 4, 4}, rng);
  const LabelMap labels = random_labels({1, 4, 4}, 3, rng);
  const auto r = check_gradients("loss", [&] { return segmentation_loss(logits, labels); }, {logits});
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Transformer, LayerGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto p = TransformerLayerParams::init(4, 2, 2, rng);
  Tensor tokens = random_tensor({1, 8, 4}, rng);
  // Outputs near 2 carry ~2e-7 rounding each while the query-weight gradients
  // are ~5e-3; at a 1e-3 step that noise reaches the 1e-4 floor.
  const auto rep = oracle::fd_check([&] { return transformer_layer_forward(tokens, p); },
                                    {tokens, p.wq, p.wv, p.ln1_gamma, p.fc2_b}, rng, 3e-3);
  EXPECT_TRUE(rep.ok) << rep.where;
}

TEST(Optimizer, SgdMomentumAndWeightDecay) {
  Tensor w = Tensor({1}, {2.0f}, true);
  Sgd opt({w}, {0.9, 0.1});
  backward(ops::scale(w, 3.0f));
  opt.step(0.5);
  // v = 3 + 0.1·2 = 3.2; w = 2 − 0.5·3.2 = 0.4
  EXPECT_NEAR(w.item(), 0.4f, 1e-6);
  opt.zero_grad();
  backward(ops::scale(w, 3.0f));
  opt.step(0.5);
  // v = 0.9·3.2 + 3 + 0.1·0.4 = 5.92; w = 0.4 − 2.96
  EXPECT_NEAR(w.item(), -2.56f, 1e-5);
}

TEST(Optimizer, PolySchedule) {
  EXPECT_DOUBLE_EQ(poly_lr(0.01, 0, 100), 0.01);
  EXPECT_NEAR(poly_lr(0.01, 50, 100), 0.01 * std::pow(0.5, 0.9), 1e-15);
  EXPECT_DOUBLE_EQ(poly_lr(0.01, 100, 100), 0.0);
}

TEST(Optimizer, SmallStepDecreasesLoss) {
  std::mt19937_64 rng(13);
  const auto cfg = small_config(8, 16, 3);
  const Tensor x = random_tensor({2, 1, 16, 16}, rng, 0, 1);
  const LabelMap labels = random_labels({2, 16, 16}, 3, rng);
  for (double lr : {1e-2, 1e-3, 1e-4}) {
    ModelState m = ModelState::create(cfg, Variant::kFull, 14);
    Sgd opt(m.parameter_list());
    const Tensor before = segmentation_loss(forward(x, m), labels);
    backward(before);
    opt.step(lr);
    NoGradGuard g;
    EXPECT_LT(segmentation_loss(forward(x, m), labels).item(), before.item()) << "lr " << lr;
  }
}
