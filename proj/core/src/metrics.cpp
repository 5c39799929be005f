#include "jcapa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "jcapa/error.hpp"

namespace jcapa {
namespace {

struct Grid {
  std::int64_t d, h, w;
  bool volumetric;
};

Grid grid_of(const LabelMap& m) {
  if (m.dims.size() == 2) return {1, m.dims[0], m.dims[1], false};
  if (m.dims.size() == 3) return {m.dims[0], m.dims[1], m.dims[2], true};
  throw ShapeError("metrics expect H×W or D×H×W maps, got " + shape_str(m.dims));
}

void require_same(const LabelMap& a, const LabelMap& b) {
  if (a.dims != b.dims) {
    throw ShapeError("prediction " + shape_str(a.dims) + " and ground truth " + shape_str(b.dims) +
                     " differ in shape");
  }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact 1-D squared distance transform (lower envelope of parabolas).
// f: input costs (0 at sites, inf elsewhere or partial results); step: spacing.
void edt_1d(const double* f, double* out, std::int64_t n, double step, std::vector<std::int64_t>& v,
            std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n + 1));
  const double s2 = step * step;
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const auto p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + s2 * static_cast<double>(q * q)) - (f[p] + s2 * static_cast<double>(p * p))) /
          (2.0 * s2 * static_cast<double>(q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        if (--k < 0) break;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -kInf : s;
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j + 1)] < static_cast<double>(q)) ++j;
    const auto p = v[static_cast<std::size_t>(j)];
    const double dq = static_cast<double>(q - p) * step;
    out[q] = dq * dq + f[p];
  }
}

// Squared Euclidean distance from every voxel to the nearest site.
std::vector<double> squared_distance_field(const std::vector<std::uint8_t>& sites, const Grid& g,
                                           const Spacing& sp) {
  const auto n = g.d * g.h * g.w;
  std::vector<double> field(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) field[static_cast<std::size_t>(i)] = sites[static_cast<std::size_t>(i)] ? 0.0 : kInf;

  std::vector<std::int64_t> v;
  std::vector<double> z;
  std::vector<double> line, out;
  auto pass = [&](std::int64_t len, std::int64_t stride, std::int64_t count,
                  auto&& start_of, double step) {
    line.resize(static_cast<std::size_t>(len));
    out.resize(static_cast<std::size_t>(len));
    for (std::int64_t c = 0; c < count; ++c) {
      const std::int64_t start = start_of(c);
      for (std::int64_t i = 0; i < len; ++i) line[static_cast<std::size_t>(i)] = field[static_cast<std::size_t>(start + i * stride)];
      edt_1d(line.data(), out.data(), len, step, v, z);
      for (std::int64_t i = 0; i < len; ++i) field[static_cast<std::size_t>(start + i * stride)] = out[static_cast<std::size_t>(i)];
    }
  };
  // x lines
  pass(g.w, 1, g.d * g.h, [&](std::int64_t c) { return c * g.w; }, sp.x);
  // y lines
  pass(g.h, g.w, g.d * g.w,
       [&](std::int64_t c) { return (c / g.w) * g.h * g.w + (c % g.w); }, sp.y);
  // z lines
  if (g.volumetric && g.d > 1) {
    pass(g.d, g.h * g.w, g.h * g.w, [&](std::int64_t c) { return c; }, sp.z);
  }
  return field;
}

}  // namespace

double dice(const LabelMap& pred, const LabelMap& gt, int cls) {
  require_same(pred, gt);
  std::int64_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] == cls;
    const bool b = gt.data[i] == cls;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double diagonal_length(const Shape& dims, const Spacing& spacing) {
  double sq = 0.0;
  const double steps[3] = {spacing.z, spacing.y, spacing.x};
  const std::size_t offset = 3 - dims.size();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const double len = static_cast<double>(dims[i] - 1) * steps[offset + i];
    sq += len * len;
  }
  return std::sqrt(sq);
}

std::vector<std::uint8_t> boundary_mask(const LabelMap& map, int cls) {
  const Grid g = grid_of(map);
  std::vector<std::uint8_t> out(map.data.size(), 0);
  auto at = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    return map.data[static_cast<std::size_t>((z * g.h + y) * g.w + x)];
  };
  for (std::int64_t z = 0; z < g.d; ++z) {
    for (std::int64_t y = 0; y < g.h; ++y) {
      for (std::int64_t x = 0; x < g.w; ++x) {
        if (at(z, y, x) != cls) continue;
        bool edge = y == 0 || y == g.h - 1 || x == 0 || x == g.w - 1;
        if (g.volumetric) edge = edge || z == 0 || z == g.d - 1;
        if (!edge) {
          edge = at(z, y - 1, x) != cls || at(z, y + 1, x) != cls || at(z, y, x - 1) != cls ||
                 at(z, y, x + 1) != cls;
          if (g.volumetric) edge = edge || at(z - 1, y, x) != cls || at(z + 1, y, x) != cls;
        }
        out[static_cast<std::size_t>((z * g.h + y) * g.w + x)] = edge;
      }
    }
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("percentile of an empty sample");
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + frac * (b - a);
}

double hd95(const LabelMap& pred, const LabelMap& gt, int cls, const Spacing& spacing) {
  require_same(pred, gt);
  const Grid g = grid_of(pred);
  const auto bp = boundary_mask(pred, cls);
  const auto bg = boundary_mask(gt, cls);
  const bool has_p = std::find(bp.begin(), bp.end(), 1) != bp.end();
  const bool has_g = std::find(bg.begin(), bg.end(), 1) != bg.end();
  if (!has_p && !has_g) return 0.0;
  if (has_p != has_g) return diagonal_length(pred.dims, spacing);

  const auto to_g = squared_distance_field(bg, g, spacing);
  const auto to_p = squared_distance_field(bp, g, spacing);
  std::vector<double> pooled;
  for (std::size_t i = 0; i < bp.size(); ++i) {
    if (bp[i]) pooled.push_back(std::sqrt(to_g[i]));
    if (bg[i]) pooled.push_back(std::sqrt(to_p[i]));
  }
  return percentile(std::move(pooled), 95.0);
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  char buf[96];
  os << "class,dice,hd95\n";
  for (const auto& [cls, m] : per_class) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", cls, m.dice, m.hd95);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f\n", mean_dice, mean_hd95);
  os << buf;
  return os.str();
}

MetricReport evaluate_scans(const std::vector<ScanLabels>& scans, int num_classes,
                            const Spacing& spacing) {
  if (num_classes < 2) throw ConfigError("evaluation needs at least two classes");
  MetricReport report;
  report.cases = static_cast<int>(scans.size());
  if (scans.empty()) return report;

  std::map<int, ClassMetrics> sums;
  std::vector<bool> present(static_cast<std::size_t>(num_classes), false);
  for (const auto& scan : scans) {
    if (scan.pred.size() != scan.gt.size() || scan.pred.empty()) {
      throw ShapeError("scan has " + std::to_string(scan.pred.size()) + " predicted and " +
                       std::to_string(scan.gt.size()) + " ground-truth slices");
    }
    const LabelMap pred = stack_labels(scan.pred);
    const LabelMap gt = stack_labels(scan.gt);
    require_same(pred, gt);
    for (int c = 1; c < num_classes; ++c) {
      const bool in_gt = std::find(gt.data.begin(), gt.data.end(), c) != gt.data.end();
      const bool in_pred = std::find(pred.data.begin(), pred.data.end(), c) != pred.data.end();
      present[static_cast<std::size_t>(c)] = present[static_cast<std::size_t>(c)] || in_gt;
      ClassMetrics m{1.0, 0.0};
      if (in_gt || in_pred) {
        m.dice = dice(pred, gt, c);
        m.hd95 = hd95(pred, gt, c, spacing);
        if (in_gt != in_pred) ++report.sentinel_hits;
      }
      sums[c].dice += m.dice;
      sums[c].hd95 += m.hd95;
    }
  }

  const auto n = static_cast<double>(scans.size());
  int counted = 0;
  bool any_present = false;
  for (int c = 1; c < num_classes; ++c) any_present = any_present || present[static_cast<std::size_t>(c)];
  for (int c = 1; c < num_classes; ++c) {
    ClassMetrics m{sums[c].dice / n, sums[c].hd95 / n};
    report.per_class[c] = m;
    if (!any_present || present[static_cast<std::size_t>(c)]) {
      report.mean_dice += m.dice;
      report.mean_hd95 += m.hd95;
      ++counted;
    }
  }
  report.mean_dice /= counted;
  report.mean_hd95 /= counted;
  return report;
}

MetricReport evaluate_volume(const std::vector<LabelMap>& pred_slices,
                             const std::vector<LabelMap>& gt_slices, int num_classes,
                             const Spacing& spacing) {
  return evaluate_scans({ScanLabels{pred_slices, gt_slices}}, num_classes, spacing);
}

}  // namespace jcapa
