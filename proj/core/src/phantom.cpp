#include "jcapa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "jcapa/error.hpp"

namespace jcapa {
namespace {

// Geometry in units of the image side: centre (y, x), semi-axes (ry, rx),
// orientation in radians.
struct OrganPrior {
  double cy, cx, ry, rx, angle;
};

// Loosely abdominal layout for the first eight organs: a large organ on the
// left, a smaller one on the right, paired bean shapes low, a small round
// vessel near the middle.
constexpr OrganPrior kPriors[] = {
    {0.38, 0.30, 0.20, 0.14, 0.3},   // 1
    {0.36, 0.72, 0.11, 0.09, -0.4},  // 2
    {0.66, 0.30, 0.09, 0.06, 0.2},   // 3
    {0.66, 0.70, 0.09, 0.06, -0.2},  // 4
    {0.50, 0.50, 0.06, 0.06, 0.0},   // 5
    {0.30, 0.52, 0.09, 0.13, 0.1},   // 6
    {0.52, 0.28, 0.06, 0.05, 0.6},   // 7
    {0.56, 0.62, 0.05, 0.12, -0.3},  // 8
};
constexpr std::size_t kNumTablePriors = sizeof(kPriors) / sizeof(kPriors[0]);

OrganPrior prior_for(int cls) {
  if (static_cast<std::size_t>(cls) <= kNumTablePriors) return kPriors[cls - 1];
  // Extra classes go on a ring around the centre.
  const double t = 2.0 * std::numbers::pi * static_cast<double>(cls) * 0.618033988749895;
  return {0.5 + 0.3 * std::sin(t), 0.5 + 0.3 * std::cos(t), 0.06, 0.05, t};
}

struct Ellipse {
  double cy, cx, ry, rx, cos_a, sin_a;

  bool contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double u = dx * cos_a + dy * sin_a;
    const double v = -dx * sin_a + dy * cos_a;
    return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
  }
};

constexpr int kMaxAttempts = 100;

}  // namespace

void PhantomConfig::validate() const {
  if (scans < 1) throw ConfigError("phantoms: scans must be >= 1");
  if (slices_per_scan < 1) throw ConfigError("phantoms: slices_per_scan must be >= 1");
  if (num_classes < 2 || num_classes > 256) {
    throw ConfigError("phantoms: num_classes must be in [2,256], got " + std::to_string(num_classes));
  }
  // The smallest prior semi-axis (0.05 of the side, shrunk by jitter and
  // slice position) must still cover a pixel.
  if (std::min(height, width) < 32) {
    throw ConfigError("phantoms: organ priors need H and W >= 32, got " + std::to_string(height) +
                      "x" + std::to_string(width));
  }
}

double phantom_base_intensity(int cls) { return 0.1 + 0.08 * cls; }

PhantomScan generate_phantom_scan(std::uint64_t seed, std::int64_t scan_id,
                                  const PhantomConfig& config) {
  config.validate();
  const auto H = config.height;
  const auto W = config.width;
  const auto S = config.slices_per_scan;
  const int K = static_cast<int>(config.num_classes);
  const double side = static_cast<double>(std::min(H, W));

  std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(scan_id));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<Ellipse> organs;
    for (int c = 1; c < K; ++c) {
      const OrganPrior p = prior_for(c);
      const double scale = 1.0 + 0.15 * unit(rng);
      const double angle = p.angle + 0.3 * unit(rng);
      organs.push_back({(p.cy + 0.04 * unit(rng)) * static_cast<double>(H),
                        (p.cx + 0.04 * unit(rng)) * static_cast<double>(W), p.ry * scale * side,
                        p.rx * scale * side, std::cos(angle), std::sin(angle)});
    }

    PhantomScan scan;
    scan.scan_id = scan_id;
    std::vector<bool> seen(static_cast<std::size_t>(K), false);
    for (std::int64_t k = 0; k < S; ++k) {
      // Organ cross-sections swell towards the middle slices.
      const double z = (static_cast<double>(k) + 0.5) / static_cast<double>(S);
      const double shrink = 0.75 + 0.25 * std::sin(std::numbers::pi * z);

      LabelMap label = LabelMap::zeros({H, W});
      for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
          std::uint8_t cls = 0;
          for (int c = K - 1; c >= 1; --c) {
            Ellipse e = organs[static_cast<std::size_t>(c - 1)];
            e.ry *= shrink;
            e.rx *= shrink;
            if (e.contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) {
              cls = static_cast<std::uint8_t>(c);
              break;
            }
          }
          label.data[static_cast<std::size_t>(y * W + x)] = cls;
          seen[cls] = true;
        }
      }

      std::vector<float> pixels(static_cast<std::size_t>(H * W));
      for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = phantom_base_intensity(label.data[i]) + noise(rng);
        pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      scan.slices.push_back({Tensor({1, H, W}, std::move(pixels)), std::move(label)});
    }
    if (std::all_of(seen.begin() + 1, seen.end(), [](bool b) { return b; })) return scan;
  }
  throw ConfigError("phantoms: could not place all " + std::to_string(K - 1) + " organs on a " +
                    std::to_string(H) + "x" + std::to_string(W) + " grid");
}

std::vector<PhantomScan> generate_phantoms(std::uint64_t seed, const PhantomConfig& config) {
  config.validate();
  std::vector<PhantomScan> scans;
  scans.reserve(static_cast<std::size_t>(config.scans));
  for (std::int64_t id = 0; id < config.scans; ++id) {
    scans.push_back(generate_phantom_scan(seed, id, config));
  }
  return scans;
}

}  // namespace jcapa
