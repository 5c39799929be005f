#include <algorithm>
#include <cmath>

#include "jcapa/ops.hpp"
#include "op_util.hpp"

namespace jcapa::ops {

using detail::grad_buffer;
using detail::make_output;
using detail::record;
using detail::require_same_shape;

namespace {

std::int64_t last_dim(const Tensor& x) { return x.dims().back(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto pa = a.data();
  const auto pb = b.data();
  std::vector<float> out(pa.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
  Tensor y = make_output(a.dims(), std::move(out));
  auto ia = a.impl();
  auto ib = b.impl();
  record(y, {&a, &b}, [ia, ib](std::span<const float> g) {
    if (float* ga = grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (float* gb = grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto pa = a.data();
  const auto pb = b.data();
  std::vector<float> out(pa.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
  Tensor y = make_output(a.dims(), std::move(out));
  auto ia = a.impl();
  auto ib = b.impl();
  record(y, {&a, &b}, [ia, ib](std::span<const float> g) {
    if (float* ga = grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (float* gb = grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto pa = a.data();
  const auto pb = b.data();
  std::vector<float> out(pa.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  Tensor y = make_output(a.dims(), std::move(out));
  auto ia = a.impl();
  auto ib = b.impl();
  record(y, {&a, &b}, [ia, ib](std::span<const float> g) {
    if (float* ga = grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ib->data[i];
    }
    if (float* gb = grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ia->data[i];
    }
  });
  return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const auto pa = a.data();
  const auto pb = b.data();
  std::vector<float> out(pa.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] / pb[i];
  Tensor y = make_output(a.dims(), std::move(out));
  auto ia = a.impl();
  auto ib = b.impl();
  record(y, {&a, &b}, [ia, ib](std::span<const float> g) {
    if (float* ga = grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / ib->data[i];
    }
    if (float* gb = grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const float d = ib->data[i];
        gb[i] -= g[i] * ia->data[i] / (d * d);
      }
    }
  });
  return y;
}

Tensor scale(const Tensor& x, float s) {
  const auto px = x.data();
  std::vector<float> out(px.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * s;
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix, s](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
    }
  });
  return y;
}

Tensor add_scalar(const Tensor& x, float s) {
  const auto px = x.data();
  std::vector<float> out(px.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] + s;
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
  return y;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ShapeError("scale_by: scale must have one element, got " + shape_str(s.dims()));
  }
  const float sv = s.item();
  const auto px = x.data();
  std::vector<float> out(px.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * px[i];
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  auto is = s.impl();
  record(y, {&x, &s}, [ix, is](std::span<const float> g) {
    const float sv = is->data[0];
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv;
    }
    if (float* gs = grad_buffer(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * ix->data[i];
      gs[0] += static_cast<float>(acc);
    }
  });
  return y;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const auto n = last_dim(x);
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.dims()) + " does not match last axis of " +
                     shape_str(x.dims()));
  }
  const auto px = x.data();
  const auto pb = bias.data();
  std::vector<float> out(px.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] + pb[i % static_cast<std::size_t>(n)];
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  auto ib = bias.impl();
  record(y, {&x, &bias}, [ix, ib, n](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (float* gb = grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % static_cast<std::size_t>(n)] += g[i];
    }
  });
  return y;
}

Tensor relu(const Tensor& x) {
  const auto px = x.data();
  std::vector<float> out(px.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] > 0.0f ? px[i] : 0.0f;
  if (auto* rec = detail::active_branch_recorder()) {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      word = (word << 1) | (px[i] > 0.0f ? 1u : 0u);
      if (i % 64 == 63 || i + 1 == out.size()) {
        rec->mix(word);
        word = 0;
      }
    }
  }
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (ix->data[i] > 0.0f) gx[i] += g[i];
      }
    }
  });
  return y;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor y = make_output({1}, {static_cast<float>(acc)});
  auto ix = x.impl();
  record(y, {&x}, [ix](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      for (std::size_t i = 0; i < ix->data.size(); ++i) gx[i] += g[0];
    }
  });
  return y;
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  const auto n = static_cast<double>(x.numel());
  Tensor y = make_output({1}, {static_cast<float>(acc / n)});
  auto ix = x.impl();
  record(y, {&x}, [ix, n](std::span<const float> g) {
    if (float* gx = grad_buffer(ix)) {
      const auto share = static_cast<float>(g[0] / n);
      for (std::size_t i = 0; i < ix->data.size(); ++i) gx[i] += share;
    }
  });
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  const auto cols = static_cast<std::size_t>(last_dim(x));
  const auto px = x.data();
  const std::size_t rows = px.size() / cols;
  std::vector<float> out(px.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = px.data() + r * cols;
    float* o = out.data() + r * cols;
    const float mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    const auto inv = static_cast<float>(1.0 / total);
    for (std::size_t c = 0; c < cols; ++c) o[c] *= inv;
  }
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  auto iy = y.impl();
  record(y, {&x}, [ix, iy, rows, cols](std::span<const float> g) {
    float* gx = grad_buffer(ix);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const float* yr = iy->data.data() + r * cols;
      const float* gr = g.data() + r * cols;
      float dot = 0.0f;
      for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += yr[c] * (gr[c] - dot);
    }
  });
  return y;
}

Tensor row_max_minus(const Tensor& x) {
  const auto cols = static_cast<std::size_t>(last_dim(x));
  const auto px = x.data();
  const std::size_t rows = px.size() / cols;
  std::vector<float> out(px.size());
  std::vector<std::size_t> argmax(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = px.data() + r * cols;
    const auto it = std::max_element(in, in + cols);
    argmax[r] = static_cast<std::size_t>(it - in);
    if (auto* rec = detail::active_branch_recorder()) rec->mix(argmax[r]);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = *it - in[c];
  }
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix, rows, cols, argmax = std::move(argmax)](std::span<const float> g) {
    float* gx = grad_buffer(ix);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      float total = 0.0f;
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] -= g[r * cols + c];
        total += g[r * cols + c];
      }
      gx[r * cols + argmax[r]] += total;
    }
  });
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const auto cols = static_cast<std::size_t>(last_dim(x));
  if (gamma.numel() != static_cast<std::int64_t>(cols) ||
      beta.numel() != static_cast<std::int64_t>(cols)) {
    throw ShapeError("layer_norm: scale/shift must have " + std::to_string(cols) +
                     " entries, got " + shape_str(gamma.dims()) + " and " +
                     shape_str(beta.dims()));
  }
  const auto px = x.data();
  const auto pg = gamma.data();
  const auto pb = beta.data();
  const std::size_t rows = px.size() / cols;
  std::vector<float> out(px.size());
  std::vector<float> xhat(px.size());
  std::vector<float> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = px.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<float>(is);
    for (std::size_t c = 0; c < cols; ++c) {
      const auto h = static_cast<float>((in[c] - mu) * is);
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * pg[c] + pb[c];
    }
  }
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  auto ig = gamma.impl();
  auto ib = beta.impl();
  record(y, {&x, &gamma, &beta},
         [ix, ig, ib, rows, cols, xhat = std::move(xhat),
          inv_std = std::move(inv_std)](std::span<const float> g) {
           float* gx = grad_buffer(ix);
           float* gg = grad_buffer(ig);
           float* gb = grad_buffer(ib);
           const auto n = static_cast<float>(cols);
           for (std::size_t r = 0; r < rows; ++r) {
             const float* gr = g.data() + r * cols;
             const float* hr = xhat.data() + r * cols;
             if (gg || gb) {
               for (std::size_t c = 0; c < cols; ++c) {
                 if (gg) gg[c] += gr[c] * hr[c];
                 if (gb) gb[c] += gr[c];
               }
             }
             if (!gx) continue;
             float mean_d = 0.0f;
             float mean_dh = 0.0f;
             for (std::size_t c = 0; c < cols; ++c) {
               const float d = gr[c] * ig->data[c];
               mean_d += d;
               mean_dh += d * hr[c];
             }
             mean_d /= n;
             mean_dh /= n;
             for (std::size_t c = 0; c < cols; ++c) {
               const float d = gr[c] * ig->data[c];
               gx[r * cols + c] += inv_std[r] * (d - mean_d - hr[c] * mean_dh);
             }
           }
         });
  return y;
}

}  // namespace jcapa::ops
