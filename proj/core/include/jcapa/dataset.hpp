#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "jcapa/phantom.hpp"

namespace jcapa {

struct DatasetSplit {
  std::vector<std::int64_t> train_ids;  // ascending
  std::vector<std::int64_t> test_ids;   // ascending
};

/// Seeded shuffle, then the first round(n·18/30) ids train. Needs n >= 2.
DatasetSplit split_dataset(const std::vector<std::int64_t>& scan_ids, std::uint64_t seed);

/// Layout: scans/scan_<id>/slice_<k>.img.jcpt, slice_<k>.lbl.jcpt, and
/// split.json holding {"train": [...], "test": [...]}.
void write_dataset(const std::filesystem::path& dir, const std::vector<PhantomScan>& scans,
                   const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& dir);
PhantomScan read_scan(const std::filesystem::path& dir, std::int64_t scan_id);

}  // namespace jcapa
