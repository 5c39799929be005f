#pragma once

#include <cstdint>
#include <vector>

#include "jcapa/label_map.hpp"

namespace jcapa {

struct PhantomConfig {
  std::int64_t scans = 30;
  std::int64_t slices_per_scan = 8;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t num_classes = 9;

  void validate() const;
};

struct PhantomScan {
  std::int64_t scan_id = 0;
  std::vector<LabeledSlice> slices;
};

/// Mean image intensity of class `cls` before noise.
double phantom_base_intensity(int cls);

/// One scan. Organs are filled ellipses whose centre, radii and orientation
/// come from a fixed per-class prior plus per-scan jitter; higher class ids
/// win overlaps. Scans missing any class are redrawn. Uses the RNG stream
/// seeded with seed ^ scan_id.
PhantomScan generate_phantom_scan(std::uint64_t seed, std::int64_t scan_id,
                                  const PhantomConfig& config);

/// Scans 0..scans-1.
std::vector<PhantomScan> generate_phantoms(std::uint64_t seed, const PhantomConfig& config);

}  // namespace jcapa
