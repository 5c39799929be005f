#include <numeric>

#include "gemm.hpp"
#include "jcapa/ops.hpp"
#include "op_util.hpp"

namespace jcapa::ops {

using detail::grad_buffer;
using detail::make_output;
using detail::record;

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto ra = a.rank();
  const auto rb = b.rank();
  if (!((ra == 2 && rb == 2) || (ra == 3 && rb == 3))) {
    throw ShapeError("matmul: expected two rank-2 or two rank-3 operands, got " +
                     shape_str(a.dims()) + " and " + shape_str(b.dims()));
  }
  const bool batched = ra == 3;
  const std::int64_t batch = batched ? a.dim(0) : 1;
  if (batched && b.dim(0) != batch) {
    throw ShapeError("matmul: batch mismatch " + std::to_string(batch) + " vs " +
                     std::to_string(b.dim(0)));
  }
  const std::int64_t m = a.dim(ra - 2);
  const std::int64_t k = a.dim(ra - 1);
  const std::int64_t kb = b.dim(rb - 2);
  const std::int64_t n = b.dim(rb - 1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(k) + " vs " +
                     std::to_string(kb) + ") for " + shape_str(a.dims()) + " · " +
                     shape_str(b.dims()));
  }

  std::vector<float> out(static_cast<std::size_t>(batch * m * n));
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (std::int64_t i = 0; i < batch; ++i) {
    detail::gemm(false, false, m, n, k, pa + i * m * k, pb + i * k * n, out.data() + i * m * n,
                 false);
  }
  Shape dims = batched ? Shape{batch, m, n} : Shape{m, n};
  Tensor y = make_output(std::move(dims), std::move(out));

  auto ia = a.impl();
  auto ib = b.impl();
  record(y, {&a, &b}, [ia, ib, batch, m, n, k](std::span<const float> g) {
    if (float* ga = grad_buffer(ia)) {
      for (std::int64_t i = 0; i < batch; ++i) {
        detail::gemm(false, true, m, k, n, g.data() + i * m * n, ib->data.data() + i * k * n,
                     ga + i * m * k, true);
      }
    }
    if (float* gb = grad_buffer(ib)) {
      for (std::int64_t i = 0; i < batch; ++i) {
        detail::gemm(true, false, k, n, m, ia->data.data() + i * m * k, g.data() + i * m * n,
                     gb + i * k * n, true);
      }
    }
  });
  return y;
}

namespace {

// Maps each flat output index to its flat input index.
std::vector<std::int64_t> permute_index(const Shape& in, const std::vector<int>& axes,
                                        Shape& out_dims) {
  const auto r = in.size();
  std::vector<std::int64_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
  out_dims.resize(r);
  for (std::size_t i = 0; i < r; ++i) out_dims[i] = in[static_cast<std::size_t>(axes[i])];

  const auto n = shape_numel(in);
  std::vector<std::int64_t> map(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(r, 0);
  for (std::int64_t flat = 0; flat < n; ++flat) {
    std::int64_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_stride[static_cast<std::size_t>(axes[i])];
    map[static_cast<std::size_t>(flat)] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_dims[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const auto r = x.rank();
  if (axes.size() != r) {
    throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for rank " +
                     std::to_string(r));
  }
  std::vector<int> seen(r, 0);
  for (int ax : axes) {
    if (ax < 0 || static_cast<std::size_t>(ax) >= r || seen[static_cast<std::size_t>(ax)]++) {
      throw ShapeError("permute: invalid axis list");
    }
  }
  Shape out_dims;
  auto map = permute_index(x.dims(), axes, out_dims);
  std::vector<float> out(map.size());
  const auto src = x.data();
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = src[static_cast<std::size_t>(map[i])];
  Tensor y = make_output(std::move(out_dims), std::move(out));

  auto ix = x.impl();
  record(y, {&x}, [ix, map = std::move(map)](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
    }
  });
  return y;
}

Tensor transpose(const Tensor& x) {
  const auto r = x.rank();
  if (r < 2) throw ShapeError("transpose: rank must be >= 2, got " + shape_str(x.dims()));
  std::vector<int> axes(r);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(x, axes);
}

Tensor reshape(const Tensor& x, Shape dims) {
  for (auto d : dims) {
    if (d <= 0) throw ShapeError("reshape: non-positive dim in " + shape_str(dims));
  }
  if (shape_numel(dims) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.dims()) + " as " + shape_str(dims));
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  Tensor y = make_output(std::move(dims), std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
  return y;
}

}  // namespace jcapa::ops
