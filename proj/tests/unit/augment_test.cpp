#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "jcapa/augment.hpp"
#include "jcapa/error.hpp"
#include "oracles.hpp"

using namespace jcapa;

namespace {

// Slices whose pixel values encode (batch index, position) so provenance
// can be read back from any output pixel.
std::vector<LabeledSlice> tagged_batch(std::size_t b, std::int64_t h, std::int64_t w,
                                       std::mt19937_64& rng) {
  std::vector<LabeledSlice> out;
  std::uniform_int_distribution<int> cls(0, 8);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<float> img(static_cast<std::size_t>(h * w));
    for (std::int64_t p = 0; p < h * w; ++p) img[p] = static_cast<float>(i * 100000 + p);
    LabelMap lbl = LabelMap::zeros({h, w});
    for (auto& v : lbl.data) v = static_cast<std::uint8_t>(cls(rng));
    out.push_back({Tensor({1, h, w}, std::move(img)), std::move(lbl)});
  }
  return out;
}

std::array<std::int64_t, 256> histogram(const LabelMap& m) {
  std::array<std::int64_t, 256> h{};
  for (auto v : m.data) ++h[v];
  return h;
}

}  // namespace

TEST(CutMix, ZeroFractionIsIdentity) {
  std::mt19937_64 rng(1);
  const auto batch = tagged_batch(4, 8, 8, rng);
  AugConfig cfg;
  cfg.cutmix_fraction = 0.0;
  const auto r = cutmix_batch(batch, cfg, rng);
  EXPECT_TRUE(r.records.empty());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_TRUE(oracle::bitwise_equal(r.batch[i].image, batch[i].image));
    EXPECT_EQ(r.batch[i].label, batch[i].label);
  }
}

TEST(CutMix, TargetCountIsFloorOfFraction) {
  std::mt19937_64 rng(2);
  AugConfig cfg;
  for (std::size_t b : {2u, 3u, 4u, 7u, 8u, 16u}) {
    const auto r = cutmix_batch(tagged_batch(b, 16, 16, rng), cfg, rng);
    EXPECT_EQ(r.records.size(), static_cast<std::size_t>(std::floor(0.33 * b))) << b;
  }
  EXPECT_EQ(cutmix_batch(tagged_batch(8, 16, 16, rng), cfg, rng).records.size(), 2u);
  cfg.cutmix_fraction = 1.0;
  EXPECT_EQ(cutmix_batch(tagged_batch(5, 16, 16, rng), cfg, rng).records.size(), 5u);
}

TEST(CutMix, TooSmallBatchIsConfigError) {
  std::mt19937_64 rng(3);
  AugConfig cfg;
  cfg.cutmix_fraction = 1.0;
  EXPECT_THROW(cutmix_batch(tagged_batch(1, 8, 8, rng), cfg, rng), ConfigError);
  cfg.cutmix_fraction = 0.5;
  cfg.area_min = 0.7;
  EXPECT_THROW(cutmix_batch(tagged_batch(4, 8, 8, rng), cfg, rng), ConfigError);
}

TEST(CutMix, AreaStatisticsOverTenThousandRecords) {
  std::mt19937_64 rng(4);
  AugConfig cfg;
  std::vector<LabeledSlice> batch;
  for (int i = 0; i < 8; ++i) batch.push_back({Tensor::zeros({1, 64, 64}), LabelMap::zeros({64, 64})});
  double sum = 0;
  std::size_t n = 0;
  while (n < 10000) {
    for (const auto& rec : cutmix_batch(batch, cfg, rng).records) {
      ASSERT_GE(rec.area_fraction, 0.18);
      ASSERT_LE(rec.area_fraction, 0.62);
      ASSERT_GE(rec.x0, 0);
      ASSERT_GE(rec.y0, 0);
      ASSERT_LE(rec.x0 + rec.width, 64);
      ASSERT_LE(rec.y0 + rec.height, 64);
      ASSERT_NE(rec.target_index, rec.donor_index);
      EXPECT_NEAR(rec.area_fraction, double(rec.width * rec.height) / 4096.0, 1e-15);
      sum += rec.area_fraction;
      ++n;
    }
  }
  const double mean = sum / double(n);
  EXPECT_GE(mean, 0.37);
  EXPECT_LE(mean, 0.43);
}

TEST(CutMix, PixelProvenanceMatchesRecords) {
  std::mt19937_64 rng(5);
  AugConfig cfg;
  cfg.cutmix_fraction = 0.5;
  for (int trial = 0; trial < 50; ++trial) {
    const auto batch = tagged_batch(6, 12, 10, rng);
    const auto r = cutmix_batch(batch, cfg, rng);
    std::vector<int> hits(batch.size(), 0);
    for (const auto& rec : r.records) ++hits[rec.target_index];
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ASSERT_LE(hits[i], 1);
      const CutMixRecord* rec = nullptr;
      for (const auto& x : r.records) if (x.target_index == i) rec = &x;
      for (std::int64_t y = 0; y < 12; ++y) {
        for (std::int64_t x = 0; x < 10; ++x) {
          const auto p = static_cast<std::size_t>(y * 10 + x);
          const bool inside = rec && x >= rec->x0 && x < rec->x0 + rec->width && y >= rec->y0 &&
                              y < rec->y0 + rec->height;
          const std::size_t src = inside ? rec->donor_index : i;
          ASSERT_EQ(r.batch[i].image.data()[p], batch[src].image.data()[p]);
          ASSERT_EQ(r.batch[i].label.data[p], batch[src].label.data[p]);
        }
      }
    }
  }
}

TEST(CutMix, DeterministicForSeed) {
  std::mt19937_64 data_rng(6);
  const auto batch = tagged_batch(8, 16, 16, data_rng);
  AugConfig cfg;
  std::mt19937_64 a(42), b(42);
  const auto ra = cutmix_batch(batch, cfg, a);
  const auto rb = cutmix_batch(batch, cfg, b);
  ASSERT_EQ(ra.records.size(), rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    EXPECT_EQ(ra.records[i].target_index, rb.records[i].target_index);
    EXPECT_EQ(ra.records[i].x0, rb.records[i].x0);
    EXPECT_EQ(ra.records[i].width, rb.records[i].width);
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_TRUE(oracle::bitwise_equal(ra.batch[i].image, rb.batch[i].image));
  }
}

TEST(FlipRotate, FlipsAreInvolutionsAndRotationsCompose) {
  std::mt19937_64 rng(7);
  const auto s = tagged_batch(1, 6, 6, rng)[0];
  for (Transform t : {Transform::kFlipHorizontal, Transform::kFlipVertical, Transform::kRot180}) {
    const auto twice = apply_transform(apply_transform(s, t), t);
    EXPECT_TRUE(oracle::bitwise_equal(twice.image, s.image));
    EXPECT_EQ(twice.label, s.label);
  }
  auto r = s;
  for (int i = 0; i < 4; ++i) r = apply_transform(r, Transform::kRot90);
  EXPECT_TRUE(oracle::bitwise_equal(r.image, s.image));
  EXPECT_EQ(apply_transform(apply_transform(s, Transform::kRot90), Transform::kRot270).label, s.label);
  EXPECT_EQ(apply_transform(apply_transform(s, Transform::kRot90), Transform::kRot90).label,
            apply_transform(s, Transform::kRot180).label);
}

TEST(FlipRotate, Rot90IsCounterClockwise) {
  // [[0,1],[2,3]] turned a quarter counter-clockwise is [[1,3],[0,2]].
  const LabeledSlice s{Tensor({1, 2, 2}, {0, 1, 2, 3}), LabelMap({2, 2}, {0, 1, 2, 3})};
  const auto r = apply_transform(s, Transform::kRot90);
  EXPECT_EQ(r.label.data, (std::vector<std::uint8_t>{1, 3, 0, 2}));
  EXPECT_EQ(r.image.data()[0], 1.0f);
}

TEST(FlipRotate, PreservesClassHistogramAndPairsImageWithLabel) {
  std::mt19937_64 rng(8);
  std::array<int, 6> seen{};
  for (int trial = 0; trial < 600; ++trial) {
    auto s = tagged_batch(1, 8, 8, rng)[0];
    // Label equals the low bits of the pixel tag, so pairing survives any remap.
    for (std::size_t p = 0; p < 64; ++p) s.label.data[p] = static_cast<std::uint8_t>(p);
    Transform t;
    const auto out = flip_rotate(s, rng, &t);
    ++seen[static_cast<int>(t)];
    EXPECT_EQ(histogram(out.label), histogram(s.label));
    for (std::size_t p = 0; p < 64; ++p) ASSERT_EQ(out.image.data()[p], float(out.label.data[p]));
  }
  for (int c : seen) EXPECT_GT(c, 60);
}

TEST(FlipRotate, NonSquareAvoidsQuarterTurns) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const Transform t = draw_transform(4, 6, rng);
    EXPECT_NE(t, Transform::kRot90);
    EXPECT_NE(t, Transform::kRot270);
  }
  const LabeledSlice s{Tensor::zeros({1, 4, 6}), LabelMap::zeros({4, 6})};
  EXPECT_THROW(apply_transform(s, Transform::kRot90), ShapeError);
  EXPECT_EQ(flip_rotate(s, rng).label.dims, (Shape{4, 6}));
}

TEST(AugmentBatch, CutMixTargetsSkipFlipRotate) {
  std::mt19937_64 rng(10);
  AugConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const auto batch = tagged_batch(8, 8, 8, rng);
    const auto r = augment_batch(batch, cfg, true, rng);
    ASSERT_EQ(r.records.size(), 2u);
    for (const auto& rec : r.records) {
      // Outside the pasted rectangle a mixed target is untouched.
      const auto& img = r.batch[rec.target_index].image.data();
      for (std::int64_t p = 0; p < 64; ++p) {
        const auto y = p / 8, x = p % 8;
        const bool inside = x >= rec.x0 && x < rec.x0 + rec.width && y >= rec.y0 &&
                            y < rec.y0 + rec.height;
        if (!inside) ASSERT_EQ(img[p], batch[rec.target_index].image.data()[p]);
      }
    }
  }
  const auto plain = augment_batch(tagged_batch(3, 8, 8, rng), cfg, false, rng);
  EXPECT_TRUE(plain.records.empty());
}
