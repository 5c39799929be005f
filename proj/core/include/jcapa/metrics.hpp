#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jcapa/label_map.hpp"

namespace jcapa {

/// Physical voxel size. Synthetic data uses unit spacing, so HD95 is in
/// pixels unless a caller supplies real spacing.
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;
};

/// 2|P∩G| / (|P|+|G|) for class `cls`; 1.0 when both masks are empty.
double dice(const LabelMap& pred, const LabelMap& gt, int cls);

/// Length of the map's main diagonal, returned by hd95 when exactly one of
/// the two masks is empty.
double diagonal_length(const Shape& dims, const Spacing& spacing = {});

/// 95th percentile (linear interpolation) of the pooled directed
/// boundary-to-boundary Euclidean distances, P→G and G→P. Boundary voxels
/// are class voxels with a 4-neighbour (6-neighbour in 3-D) of another
/// class, or on the map border. Works on H×W and D×H×W maps.
double hd95(const LabelMap& pred, const LabelMap& gt, int cls, const Spacing& spacing = {});

/// Boundary mask of class `cls` (1 = boundary voxel).
std::vector<std::uint8_t> boundary_mask(const LabelMap& map, int cls);

/// Linear-interpolation percentile (q in [0,100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

struct ClassMetrics {
  double dice = 0.0;
  double hd95 = 0.0;
};

struct MetricReport {
  std::map<int, ClassMetrics> per_class;  // foreground classes 1..K−1
  double mean_dice = 0.0;
  double mean_hd95 = 0.0;
  int cases = 0;
  // Number of (scan, class) pairs where hd95 fell back to the diagonal.
  int sentinel_hits = 0;

  /// "class,dice,hd95" rows per class, then a "mean" row.
  std::string to_csv() const;
};

/// One scan's slices, stacked into a volume for evaluation.
struct ScanLabels {
  std::vector<LabelMap> pred;
  std::vector<LabelMap> gt;
};

/// Metrics for a single scan.
MetricReport evaluate_volume(const std::vector<LabelMap>& pred_slices,
                             const std::vector<LabelMap>& gt_slices, int num_classes,
                             const Spacing& spacing = {});

/// Per-class values are means over scans (a class absent from both pred and
/// gt of a scan contributes dice 1, hd95 0). The summary means average the
/// per-class values over foreground classes present in some ground truth.
MetricReport evaluate_scans(const std::vector<ScanLabels>& scans, int num_classes,
                            const Spacing& spacing = {});

}  // namespace jcapa
