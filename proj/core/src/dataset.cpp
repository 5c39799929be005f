#include "jcapa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include "config_json.hpp"
#include "jcapa/error.hpp"
#include "jcapa/io.hpp"

namespace jcapa {
namespace {

std::filesystem::path scan_dir(const std::filesystem::path& dir, std::int64_t id) {
  return dir / "scans" / ("scan_" + std::to_string(id));
}

std::string slice_stem(std::size_t k) { return "slice_" + std::to_string(k); }

}  // namespace

DatasetSplit split_dataset(const std::vector<std::int64_t>& scan_ids, std::uint64_t seed) {
  const auto n = scan_ids.size();
  if (n < 2) throw ConfigError("need at least 2 scans to split, got " + std::to_string(n));
  if (std::set<std::int64_t>(scan_ids.begin(), scan_ids.end()).size() != n) {
    throw ValidationError("duplicate scan ids");
  }
  std::vector<std::int64_t> order = scan_ids;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 18.0 / 30.0));
  DatasetSplit split;
  split.train_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<PhantomScan>& scans,
                   const DatasetSplit& split) {
  for (const auto& scan : scans) {
    const auto sdir = scan_dir(dir, scan.scan_id);
    for (std::size_t k = 0; k < scan.slices.size(); ++k) {
      io::write_tensor(sdir / (slice_stem(k) + ".img.jcpt"), scan.slices[k].image);
      io::write_label_map(sdir / (slice_stem(k) + ".lbl.jcpt"), scan.slices[k].label);
    }
  }
  detail::Json j;
  j["train"] = split.train_ids;
  j["test"] = split.test_ids;
  const std::string text = j.dump(2) + "\n";
  io::write_file(dir / "split.json",
                 std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetSplit read_split(const std::filesystem::path& dir) {
  const auto path = dir / "split.json";
  const auto bytes = io::read_file(path);
  DatasetSplit split;
  try {
    auto j = detail::Json::parse(bytes.begin(), bytes.end());
    detail::reject_unknown_keys(j, {"train", "test"}, path.string());
    split.train_ids = j.at("train").get<std::vector<std::int64_t>>();
    split.test_ids = j.at("test").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
  std::set<std::int64_t> train(split.train_ids.begin(), split.train_ids.end());
  for (auto id : split.test_ids) {
    if (train.count(id)) {
      throw ValidationError(path.string() + ": scan " + std::to_string(id) +
                            " is in both train and test");
    }
  }
  return split;
}

PhantomScan read_scan(const std::filesystem::path& dir, std::int64_t scan_id) {
  const auto sdir = scan_dir(dir, scan_id);
  if (!std::filesystem::is_directory(sdir)) throw IoError("missing scan directory " + sdir.string());
  PhantomScan scan;
  scan.scan_id = scan_id;
  for (std::size_t k = 0;; ++k) {
    const auto img = sdir / (slice_stem(k) + ".img.jcpt");
    if (!std::filesystem::exists(img)) break;
    LabeledSlice s{io::read_tensor(img), io::read_label_map(sdir / (slice_stem(k) + ".lbl.jcpt"))};
    if (s.image.rank() != 3 || s.image.dim(0) != 1 || s.label.dims.size() != 2 ||
        s.label.dims[0] != s.image.dim(1) || s.label.dims[1] != s.image.dim(2)) {
      throw ValidationError(img.string() + ": image " + shape_str(s.image.dims()) +
                            " does not match label " + shape_str(s.label.dims));
    }
    if (!scan.slices.empty() && s.image.dims() != scan.slices.front().image.dims()) {
      throw ValidationError(img.string() + ": slice dims differ within scan");
    }
    scan.slices.push_back(std::move(s));
  }
  if (scan.slices.empty()) throw IoError("scan directory " + sdir.string() + " has no slices");
  return scan;
}

}  // namespace jcapa
