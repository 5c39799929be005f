#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "jcapa/label_map.hpp"

namespace jcapa {

struct AugConfig {
  double cutmix_fraction = 0.33;
  double area_min = 0.20;
  double area_max = 0.60;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const AugConfig&) const = default;
};

/// One CutMix paste: the rectangle of `donor_index` is copied (pixels and
/// labels) onto the same location of `target_index`.
struct CutMixRecord {
  std::size_t target_index = 0;
  std::size_t donor_index = 0;
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
  double area_fraction = 0.0;
  double aspect = 1.0;  // sampled aspect ratio, kept for auditing
};

struct CutMixResult {
  std::vector<LabeledSlice> batch;
  std::vector<CutMixRecord> records;
};

/// Picks floor(cutmix_fraction·B) targets without replacement and pastes a
/// rectangle from a uniformly chosen other batch member into each. Donor
/// pixels always come from the unmodified input batch. Throws ConfigError
/// when B < 2 and the fraction is positive.
CutMixResult cutmix_batch(const std::vector<LabeledSlice>& batch, const AugConfig& cfg,
                          std::mt19937_64& rng);

enum class Transform { kIdentity, kFlipHorizontal, kFlipVertical, kRot90, kRot180, kRot270 };

/// Uniform over all six transforms on square slices; non-square slices
/// draw from {identity, flips, rot180}.
Transform draw_transform(std::int64_t height, std::int64_t width, std::mt19937_64& rng);
LabeledSlice apply_transform(const LabeledSlice& slice, Transform t);
LabeledSlice flip_rotate(const LabeledSlice& slice, std::mt19937_64& rng,
                         Transform* drawn = nullptr);

/// Training-time batch policy: CutMix on the selected subset (when enabled)
/// and flip/rotate on every other image.
CutMixResult augment_batch(const std::vector<LabeledSlice>& batch, const AugConfig& cfg,
                           bool enable_cutmix, std::mt19937_64& rng);

}  // namespace jcapa
