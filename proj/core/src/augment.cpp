#include "jcapa/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jcapa/error.hpp"

namespace jcapa {

void AugConfig::validate() const {
  if (!(cutmix_fraction >= 0.0 && cutmix_fraction <= 1.0)) {
    throw ConfigError("aug.cutmix_fraction must lie in [0, 1]");
  }
  if (!(area_min > 0.0 && area_min <= area_max && area_max < 1.0)) {
    throw ConfigError("aug area bounds must satisfy 0 < area_min <= area_max < 1");
  }
}

namespace {

struct SliceGeometry {
  std::int64_t channels, height, width;
};

SliceGeometry geometry(const LabeledSlice& s) {
  if (s.image.rank() != 3 || s.label.dims.size() != 2 || s.image.dim(1) != s.label.dims[0] ||
      s.image.dim(2) != s.label.dims[1]) {
    throw ShapeError("slice image " + shape_str(s.image.dims()) + " and label " +
                     shape_str(s.label.dims) + " are not a C×H×W / H×W pair");
  }
  return {s.image.dim(0), s.image.dim(1), s.image.dim(2)};
}

LabeledSlice copy_slice(const LabeledSlice& s) { return {s.image.detach(), s.label}; }

}  // namespace

CutMixResult cutmix_batch(const std::vector<LabeledSlice>& batch, const AugConfig& cfg,
                          std::mt19937_64& rng) {
  cfg.validate();
  CutMixResult result;
  result.batch.reserve(batch.size());
  for (const auto& s : batch) result.batch.push_back(copy_slice(s));

  const auto count = static_cast<std::size_t>(
      std::floor(cfg.cutmix_fraction * static_cast<double>(batch.size()) + 1e-9));
  if (count == 0) return result;
  if (batch.size() < 2) {
    throw ConfigError("CutMix needs a batch of at least 2 images, got " +
                      std::to_string(batch.size()));
  }
  const auto geo = geometry(batch.front());
  for (const auto& s : batch) {
    const auto g = geometry(s);
    if (g.channels != geo.channels || g.height != geo.height || g.width != geo.width) {
      throw ShapeError("CutMix batch members differ in shape");
    }
  }

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);

  std::uniform_real_distribution<double> area_dist(cfg.area_min, cfg.area_max);
  std::uniform_real_distribution<double> aspect_dist(0.5, 2.0);
  std::uniform_int_distribution<std::size_t> donor_dist(0, batch.size() - 2);
  const auto h_total = geo.height, w_total = geo.width;

  for (std::size_t target : order) {
    std::size_t donor = donor_dist(rng);
    if (donor >= target) ++donor;

    const double lambda = area_dist(rng);
    const double aspect = aspect_dist(rng);
    const auto w = std::clamp<std::int64_t>(
        std::llround(static_cast<double>(w_total) * std::sqrt(lambda * aspect)), 1, w_total);
    const auto h = std::clamp<std::int64_t>(
        std::llround(static_cast<double>(h_total) * std::sqrt(lambda / aspect)), 1, h_total);
    const auto x0 = std::uniform_int_distribution<std::int64_t>(0, w_total - w)(rng);
    const auto y0 = std::uniform_int_distribution<std::int64_t>(0, h_total - h)(rng);

    auto dst_img = result.batch[target].image.mutable_data();
    auto& dst_lbl = result.batch[target].label.data;
    const auto src_img = batch[donor].image.data();
    const auto& src_lbl = batch[donor].label.data;
    for (std::int64_t c = 0; c < geo.channels; ++c) {
      for (std::int64_t y = y0; y < y0 + h; ++y) {
        const auto row = (c * h_total + y) * w_total;
        std::copy_n(src_img.begin() + row + x0, w, dst_img.begin() + row + x0);
      }
    }
    for (std::int64_t y = y0; y < y0 + h; ++y) {
      const auto row = y * w_total;
      std::copy_n(src_lbl.begin() + row + x0, w, dst_lbl.begin() + row + x0);
    }

    CutMixRecord rec;
    rec.target_index = target;
    rec.donor_index = donor;
    rec.x0 = x0;
    rec.y0 = y0;
    rec.width = w;
    rec.height = h;
    rec.area_fraction = static_cast<double>(w * h) / static_cast<double>(w_total * h_total);
    rec.aspect = aspect;
    result.records.push_back(rec);
  }
  return result;
}

Transform draw_transform(std::int64_t height, std::int64_t width, std::mt19937_64& rng) {
  if (height == width) {
    return static_cast<Transform>(std::uniform_int_distribution<int>(0, 5)(rng));
  }
  static constexpr Transform kRect[] = {Transform::kIdentity, Transform::kFlipHorizontal,
                                        Transform::kFlipVertical, Transform::kRot180};
  return kRect[std::uniform_int_distribution<int>(0, 3)(rng)];
}

namespace {

// Source (y, x) for destination (i, j) of an h×w plane; rot90 is
// counter-clockwise. Output extents are swapped for quarter turns.
template <typename T>
std::vector<T> remap(const T* src, std::int64_t planes, std::int64_t h, std::int64_t w,
                     Transform t) {
  const bool quarter = t == Transform::kRot90 || t == Transform::kRot270;
  const auto oh = quarter ? w : h;
  const auto ow = quarter ? h : w;
  std::vector<T> out(static_cast<std::size_t>(planes * h * w));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* s = src + p * h * w;
    T* d = out.data() + p * h * w;
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        std::int64_t y = i, x = j;
        switch (t) {
          case Transform::kIdentity: break;
          case Transform::kFlipHorizontal: x = w - 1 - j; break;
          case Transform::kFlipVertical: y = h - 1 - i; break;
          case Transform::kRot90: y = j; x = w - 1 - i; break;
          case Transform::kRot180: y = h - 1 - i; x = w - 1 - j; break;
          case Transform::kRot270: y = h - 1 - j; x = i; break;
        }
        d[i * ow + j] = s[y * w + x];
      }
    }
  }
  return out;
}

}  // namespace

LabeledSlice apply_transform(const LabeledSlice& slice, Transform t) {
  const auto g = geometry(slice);
  const bool quarter = t == Transform::kRot90 || t == Transform::kRot270;
  if (quarter && g.height != g.width) {
    throw ShapeError("quarter-turn rotation needs a square slice");
  }
  LabeledSlice out;
  out.image = Tensor(slice.image.dims(),
                     remap(slice.image.data().data(), g.channels, g.height, g.width, t));
  out.label = LabelMap(slice.label.dims, remap(slice.label.data.data(), 1, g.height, g.width, t));
  return out;
}

LabeledSlice flip_rotate(const LabeledSlice& slice, std::mt19937_64& rng, Transform* drawn) {
  const auto g = geometry(slice);
  const Transform t = draw_transform(g.height, g.width, rng);
  if (drawn) *drawn = t;
  return apply_transform(slice, t);
}

CutMixResult augment_batch(const std::vector<LabeledSlice>& batch, const AugConfig& cfg,
                           bool enable_cutmix, std::mt19937_64& rng) {
  CutMixResult result;
  if (enable_cutmix) {
    result = cutmix_batch(batch, cfg, rng);
  } else {
    for (const auto& s : batch) result.batch.push_back(copy_slice(s));
  }
  std::vector<bool> mixed(batch.size(), false);
  for (const auto& r : result.records) mixed[r.target_index] = true;
  for (std::size_t i = 0; i < result.batch.size(); ++i) {
    if (!mixed[i]) result.batch[i] = flip_rotate(result.batch[i], rng);
  }
  return result;
}

}  // namespace jcapa
