#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library code under test beyond the
// plain data types.

#include <algorithm>
#include <bit>
#include <climits>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "jcapa/gradcheck.hpp"
#include "jcapa/label_map.hpp"
#include "jcapa/ops.hpp"
#include "jcapa/tensor.hpp"

namespace jcapa::oracle {

inline Tensor random_tensor(const Shape& dims, std::mt19937_64& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(dims)));
  for (auto& x : v) x = dist(rng);
  return Tensor(dims, std::move(v));
}

inline double brute_dice(const LabelMap& p, const LabelMap& g, int cls) {
  double a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    a += p.data[i] == cls;
    b += g.data[i] == cls;
    both += p.data[i] == cls && g.data[i] == cls;
  }
  return a + b == 0 ? 1.0 : 2.0 * both / (a + b);
}

struct Voxel {
  std::int64_t z, y, x;
};

// Boundary voxels of class `cls` on an H×W or D×H×W map.
inline std::vector<Voxel> brute_boundary(const LabelMap& m, int cls) {
  const bool vol = m.dims.size() == 3;
  const std::int64_t d = vol ? m.dims[0] : 1;
  const std::int64_t h = m.dims[vol ? 1 : 0];
  const std::int64_t w = m.dims[vol ? 2 : 1];
  auto is = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    if (z < 0 || z >= d || y < 0 || y >= h || x < 0 || x >= w) return false;
    return m.data[static_cast<std::size_t>((z * h + y) * w + x)] == cls;
  };
  std::vector<Voxel> out;
  for (std::int64_t z = 0; z < d; ++z) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        if (!is(z, y, x)) continue;
        // Out-of-range neighbours count as "different", which covers the border rule.
        bool edge = !is(z, y - 1, x) || !is(z, y + 1, x) || !is(z, y, x - 1) || !is(z, y, x + 1);
        if (vol) edge = edge || !is(z - 1, y, x) || !is(z + 1, y, x);
        if (edge) out.push_back({z, y, x});
      }
    }
  }
  return out;
}

// All-pairs HD95: pooled directed distances, 95th percentile with linear
// interpolation between closest ranks.
inline double brute_hd95(const LabelMap& p, const LabelMap& g, int cls) {
  const auto bp = brute_boundary(p, cls);
  const auto bg = brute_boundary(g, cls);
  if (bp.empty() && bg.empty()) return 0.0;
  if (bp.empty() || bg.empty()) {
    double sq = 0;
    for (auto n : p.dims) sq += static_cast<double>((n - 1) * (n - 1));
    return std::sqrt(sq);
  }
  auto nearest = [](const Voxel& a, const std::vector<Voxel>& set) {
    std::int64_t best = INT64_MAX;
    for (const auto& b : set) {
      const auto dz = a.z - b.z, dy = a.y - b.y, dx = a.x - b.x;
      best = std::min(best, dz * dz + dy * dy + dx * dx);
    }
    return std::sqrt(static_cast<double>(best));
  };
  std::vector<double> all;
  for (const auto& a : bp) all.push_back(nearest(a, bg));
  for (const auto& b : bg) all.push_back(nearest(b, bp));
  std::sort(all.begin(), all.end());
  const double pos = 0.95 * static_cast<double>(all.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= all.size()) return all[lo];
  return all[lo] + frac * (all[lo + 1] - all[lo]);
}

// Random blob map: a few filled discs of random classes on background.
inline LabelMap random_blobs(std::int64_t h, std::int64_t w, int classes, std::mt19937_64& rng) {
  LabelMap m = LabelMap::zeros({h, w});
  std::uniform_int_distribution<int> count(0, 3);
  std::uniform_int_distribution<int> cls(1, classes - 1);
  std::uniform_real_distribution<double> cy(0, static_cast<double>(h - 1));
  std::uniform_real_distribution<double> cx(0, static_cast<double>(w - 1));
  std::uniform_real_distribution<double> rad(0.5, static_cast<double>(std::min(h, w)) / 3.0);
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    const int c = cls(rng);
    const double y0 = cy(rng), x0 = cx(rng), r = rad(rng);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - y0, dx = static_cast<double>(x) - x0;
        if (dy * dy + dx * dx <= r * r) m.data[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint8_t>(c);
      }
    }
  }
  return m;
}

// Row sums of the last axis; returns the largest |sum − 1|.
inline double worst_row_sum_error(const Tensor& t) {
  const auto cols = t.dims().back();
  const auto d = t.data();
  double worst = 0.0;
  for (std::size_t r = 0; r * static_cast<std::size_t>(cols) < d.size(); ++r) {
    double s = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) s += d[r * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) return false;
  const auto x = a.data(), y = b.data();
  return std::equal(x.begin(), x.end(), y.begin(), [](float u, float v) {
    return std::bit_cast<std::uint32_t>(u) == std::bit_cast<std::uint32_t>(v);
  });
}

struct FdReport {
  bool ok = true;
  double worst_rel = 0.0;
  std::string where;
};

// Central differences of L = Σ w·f(inputs), with the projection evaluated in
// double and matrix products accumulated in double, against the tape
// gradient of sum(mul(f(inputs), w)). Every entry of every input is probed. Tolerance: |a − n| ≤ max(rel·max(|a|,|n|), floor).
inline FdReport fd_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                         std::mt19937_64& rng, double step = 1e-3, double rel = 1e-2,
                         double floor = 1e-4) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor out = f();
  const Tensor w = random_tensor(out.dims(), rng, -1.0f, 1.0f);
  backward(ops::sum(ops::mul(out, w)));

  auto project = [&] {
    NoGradGuard g;
    ReferencePrecisionGuard precision;
    const Tensor y = f();
    double s = 0.0;
    for (std::size_t i = 0; i < y.data().size(); ++i) {
      s += static_cast<double>(y.data()[i]) * static_cast<double>(w.data()[i]);
    }
    return s;
  };
  FdReport rep;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto vals = inputs[t].mutable_data();
    const auto grad = inputs[t].grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const float orig = vals[i];
      vals[i] = orig + static_cast<float>(step);
      const double hi = vals[i];
      const double up = project();
      vals[i] = orig - static_cast<float>(step);
      const double lo = vals[i];
      const double down = project();
      vals[i] = orig;
      // Divide by the step actually realized in float32.
      const double numeric = (up - down) / (hi - lo);
      const double analytic = grad.empty() ? 0.0 : grad[i];
      const double err = std::abs(analytic - numeric);
      const double scale = std::max(std::abs(analytic), std::abs(numeric));
      if (scale > 0) rep.worst_rel = std::max(rep.worst_rel, err / scale);
      if (err > std::max(rel * scale, floor) && rep.ok) {
        rep.ok = false;
        rep.where = "input " + std::to_string(t) + " entry " + std::to_string(i) +
                    ": analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return rep;
}

}  // namespace jcapa::oracle
