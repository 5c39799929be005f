#include <cmath>
#include <string>

#include "gemm.hpp"
#include "jcapa/ops.hpp"
#include "op_util.hpp"

namespace jcapa::ops {

using detail::grad_buffer;
using detail::make_output;
using detail::record;
using detail::require_rank;

Tensor concat_channels(const std::vector<Tensor>& maps) {
  if (maps.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& m : maps) require_rank(m, 4, "concat_channels");
  const auto b = maps[0].dim(0);
  const auto h = maps[0].dim(2);
  const auto w = maps[0].dim(3);
  std::int64_t channels = 0;
  for (const auto& m : maps) {
    if (m.dim(0) != b || m.dim(2) != h || m.dim(3) != w) {
      throw ShapeError("concat_channels: " + shape_str(m.dims()) + " incompatible with " +
                       shape_str(maps[0].dims()));
    }
    channels += m.dim(1);
  }
  const auto hw = h * w;
  std::vector<float> out(static_cast<std::size_t>(b * channels * hw));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& m : maps) {
    offsets.push_back(off);
    const auto c = m.dim(1);
    const auto src = m.data();
    for (std::int64_t bi = 0; bi < b; ++bi) {
      std::copy_n(src.data() + bi * c * hw, c * hw, out.data() + (bi * channels + off) * hw);
    }
    off += c;
  }
  Tensor y = make_output({b, channels, h, w}, std::move(out));

  bool any = false;
  for (const auto& m : maps) any = any || m.requires_grad();
  if (!any || !grad_enabled()) return y;
  std::vector<detail::ImplPtr> inputs;
  for (const auto& m : maps) inputs.push_back(m.impl());
  auto ins = inputs;
  Tape::current().record(std::move(inputs), y.impl(),
                         [ins, offsets, b, channels, hw](std::span<const float> g) {
                           for (std::size_t k = 0; k < ins.size(); ++k) {
                             float* gx = grad_buffer(ins[k]);
                             if (!gx) continue;
                             const auto c = ins[k]->dims[1];
                             for (std::int64_t bi = 0; bi < b; ++bi) {
                               const float* src = g.data() + (bi * channels + offsets[k]) * hw;
                               float* dst = gx + bi * c * hw;
                               for (std::int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                             }
                           }
                         });
  return y;
}

namespace {

struct ConvGeometry {
  std::int64_t batch, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::int64_t patch() const { return cin * kh * kw; }
  std::int64_t out_pixels() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeometry& g, const float* x, float* cols) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        float* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.out_pixels();
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ki;
          float* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, 0.0f);
            continue;
          }
          const float* src = x + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const float* cols, float* x) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const float* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.out_pixels();
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          float* dst = x + (c * g.h + iy) * g.w;
          const float* src = row + oy * g.ow;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  if (stride < 1 || pad < 0) {
    throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  }
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (weight.dim(1) != g.cin) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(g.cin));
  }
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.dims()) + " does not fit padded input " +
                     shape_str(x.dims()) + " with pad " + std::to_string(pad));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.dims()) + " for " +
                     std::to_string(g.cout) + " output channels");
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;

  const auto in_size = g.cin * g.h * g.w;
  const auto out_size = g.cout * g.out_pixels();
  std::vector<float> out(static_cast<std::size_t>(g.batch * out_size));
  std::vector<float> cols;
  if (!g.pointwise()) cols.resize(static_cast<std::size_t>(g.patch() * g.out_pixels()));
  const float* px = x.data().data();
  const float* pw = weight.data().data();
  for (std::int64_t bi = 0; bi < g.batch; ++bi) {
    const float* src = px + bi * in_size;
    if (!g.pointwise()) {
      im2col(g, src, cols.data());
      src = cols.data();
    }
    float* dst = out.data() + bi * out_size;
    detail::gemm(false, false, g.cout, g.out_pixels(), g.patch(), pw, src, dst, false);
    if (bias.defined()) {
      const auto pb = bias.data();
      for (std::int64_t c = 0; c < g.cout; ++c) {
        float* row = dst + c * g.out_pixels();
        for (std::int64_t i = 0; i < g.out_pixels(); ++i) row[i] += pb[static_cast<std::size_t>(c)];
      }
    }
  }
  Tensor y = make_output({g.batch, g.cout, g.oh, g.ow}, std::move(out));

  auto ix = x.impl();
  auto iw = weight.impl();
  detail::ImplPtr ib = bias.defined() ? bias.impl() : nullptr;
  record(y, {&x, &weight, &bias}, [ix, iw, ib, g, in_size, out_size](std::span<const float> grad) {
    float* gx = grad_buffer(ix);
    float* gw = grad_buffer(iw);
    float* gb = grad_buffer(ib);
    std::vector<float> cols;
    std::vector<float> dcols;
    if (!g.pointwise()) {
      cols.resize(static_cast<std::size_t>(g.patch() * g.out_pixels()));
      dcols.resize(cols.size());
    }
    for (std::int64_t bi = 0; bi < g.batch; ++bi) {
      const float* gy = grad.data() + bi * out_size;
      if (gb) {
        for (std::int64_t c = 0; c < g.cout; ++c) {
          float acc = 0.0f;
          for (std::int64_t i = 0; i < g.out_pixels(); ++i) acc += gy[c * g.out_pixels() + i];
          gb[c] += acc;
        }
      }
      if (gw) {
        const float* src = ix->data.data() + bi * in_size;
        if (!g.pointwise()) {
          im2col(g, src, cols.data());
          src = cols.data();
        }
        detail::gemm(false, true, g.cout, g.patch(), g.out_pixels(), gy, src, gw, true);
      }
      if (gx) {
        if (g.pointwise()) {
          detail::gemm(true, false, g.cin, g.out_pixels(), g.cout, iw->data.data(), gy,
                       gx + bi * in_size, true);
        } else {
          detail::gemm(true, false, g.patch(), g.out_pixels(), g.cout, iw->data.data(), gy,
                       dcols.data(), false);
          col2im_add(g, dcols.data(), gx + bi * in_size);
        }
      }
    }
  });
  return y;
}

namespace {

struct Lerp {
  std::int64_t i0, i1;
  float w0, w1;
};

std::vector<Lerp> lerp_table(std::int64_t in, std::int64_t out) {
  std::vector<Lerp> table(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > static_cast<double>(in - 1)) src = static_cast<double>(in - 1);
    const auto i0 = static_cast<std::int64_t>(std::floor(src));
    const auto i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    table[static_cast<std::size_t>(i)] = {i0, i1, static_cast<float>(1.0 - frac),
                                          static_cast<float>(frac)};
  }
  return table;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  require_rank(x, 4, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output size must be >= 1");
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto planes = b * c;

  if (out_h == h && out_w == w) {
    std::vector<float> out(x.data().begin(), x.data().end());
    Tensor y = make_output(x.dims(), std::move(out));
    auto ix = x.impl();
    record(y, {&x}, [ix](std::span<const float> g) {
      if (float* gx = grad_buffer(ix)) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    });
    return y;
  }

  auto rows = lerp_table(h, out_h);
  auto cols = lerp_table(w, out_w);
  std::vector<float> out(static_cast<std::size_t>(planes * out_h * out_w));
  const float* px = x.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = px + p * h * w;
    float* dst = out.data() + p * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      const float* top = src + r.i0 * w;
      const float* bot = src + r.i1 * w;
      for (std::int64_t j = 0; j < out_w; ++j) {
        const auto& q = cols[static_cast<std::size_t>(j)];
        const float upper = q.w0 * top[q.i0] + q.w1 * top[q.i1];
        const float lower = q.w0 * bot[q.i0] + q.w1 * bot[q.i1];
        dst[i * out_w + j] = r.w0 * upper + r.w1 * lower;
      }
    }
  }
  Tensor y = make_output({b, c, out_h, out_w}, std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix, rows = std::move(rows), cols = std::move(cols), planes, h, w, out_h,
                   out_w](std::span<const float> g) {
    float* gx = grad_buffer(ix);
    if (!gx) return;
    for (std::int64_t p = 0; p < planes; ++p) {
      const float* gy = g.data() + p * out_h * out_w;
      float* dst = gx + p * h * w;
      for (std::int64_t i = 0; i < out_h; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < out_w; ++j) {
          const auto& q = cols[static_cast<std::size_t>(j)];
          const float v = gy[i * out_w + j];
          dst[r.i0 * w + q.i0] += r.w0 * q.w0 * v;
          dst[r.i0 * w + q.i1] += r.w0 * q.w1 * v;
          dst[r.i1 * w + q.i0] += r.w1 * q.w0 * v;
          dst[r.i1 * w + q.i1] += r.w1 * q.w1 * v;
        }
      }
    }
  });
  return y;
}

Tensor avg_pool2d(const Tensor& x, int factor) {
  require_rank(x, 4, "avg_pool2d");
  if (factor < 1) throw ShapeError("avg_pool2d: factor must be >= 1");
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("avg_pool2d: " + std::to_string(h) + "x" + std::to_string(w) +
                     " map is not divisible by factor " + std::to_string(factor));
  }
  const auto oh = h / factor, ow = w / factor, planes = b * c;
  const float inv = 1.0f / static_cast<float>(factor * factor);
  std::vector<float> out(static_cast<std::size_t>(planes * oh * ow));
  const float* px = x.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::int64_t di = 0; di < factor; ++di) {
          for (std::int64_t dj = 0; dj < factor; ++dj) {
            acc += px[(p * h + i * factor + di) * w + j * factor + dj];
          }
        }
        out[static_cast<std::size_t>((p * oh + i) * ow + j)] = static_cast<float>(acc) * inv;
      }
    }
  }
  Tensor y = make_output({b, c, oh, ow}, std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix, planes, h, w, oh, ow, factor, inv](std::span<const float> g) {
    float* gx = grad_buffer(ix);
    if (!gx) return;
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::int64_t i = 0; i < h; ++i) {
        for (std::int64_t j = 0; j < w; ++j) {
          gx[(p * h + i) * w + j] += g[static_cast<std::size_t>((p * oh + i / factor) * ow + j / factor)] * inv;
        }
      }
    }
  });
  return y;
}

Tensor softmax_channels(const Tensor& x) {
  require_rank(x, 4, "softmax_channels");
  const auto b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const float* px = x.data().data();
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  std::vector<float> mx(static_cast<std::size_t>(hw));
  std::vector<double> total(static_cast<std::size_t>(hw));
  for (std::int64_t bi = 0; bi < b; ++bi) {
    const float* in = px + bi * c * hw;
    float* o = out.data() + bi * c * hw;
    std::copy_n(in, hw, mx.begin());
    for (std::int64_t k = 1; k < c; ++k) {
      for (std::int64_t i = 0; i < hw; ++i) mx[i] = std::max(mx[i], in[k * hw + i]);
    }
    std::fill(total.begin(), total.end(), 0.0);
    for (std::int64_t k = 0; k < c; ++k) {
      for (std::int64_t i = 0; i < hw; ++i) {
        o[k * hw + i] = std::exp(in[k * hw + i] - mx[i]);
        total[i] += o[k * hw + i];
      }
    }
    for (std::int64_t k = 0; k < c; ++k) {
      for (std::int64_t i = 0; i < hw; ++i) {
        o[k * hw + i] = static_cast<float>(o[k * hw + i] / total[i]);
      }
    }
  }
  Tensor y = make_output(x.dims(), std::move(out));
  auto ix = x.impl();
  auto iy = y.impl();
  record(y, {&x}, [ix, iy, b, c, hw](std::span<const float> g) {
    float* gx = grad_buffer(ix);
    if (!gx) return;
    std::vector<float> dot(static_cast<std::size_t>(hw));
    for (std::int64_t bi = 0; bi < b; ++bi) {
      const float* yb = iy->data.data() + bi * c * hw;
      const float* gb = g.data() + bi * c * hw;
      std::fill(dot.begin(), dot.end(), 0.0f);
      for (std::int64_t k = 0; k < c; ++k) {
        for (std::int64_t i = 0; i < hw; ++i) dot[i] += gb[k * hw + i] * yb[k * hw + i];
      }
      float* gxb = gx + bi * c * hw;
      for (std::int64_t k = 0; k < c; ++k) {
        for (std::int64_t i = 0; i < hw; ++i) {
          gxb[k * hw + i] += yb[k * hw + i] * (gb[k * hw + i] - dot[i]);
        }
      }
    }
  });
  return y;
}

Tensor channel_sum(const Tensor& x) {
  require_rank(x, 4, "channel_sum");
  const auto b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const float* px = x.data().data();
  std::vector<float> out(static_cast<std::size_t>(c));
  for (std::int64_t k = 0; k < c; ++k) {
    double acc = 0.0;
    for (std::int64_t bi = 0; bi < b; ++bi) {
      const float* plane = px + (bi * c + k) * hw;
      for (std::int64_t i = 0; i < hw; ++i) acc += plane[i];
    }
    out[static_cast<std::size_t>(k)] = static_cast<float>(acc);
  }
  Tensor y = make_output({c}, std::move(out));
  auto ix = x.impl();
  record(y, {&x}, [ix, b, c, hw](std::span<const float> g) {
    float* gx = grad_buffer(ix);
    if (!gx) return;
    for (std::int64_t bi = 0; bi < b; ++bi) {
      for (std::int64_t k = 0; k < c; ++k) {
        float* plane = gx + (bi * c + k) * hw;
        for (std::int64_t i = 0; i < hw; ++i) plane[i] += g[static_cast<std::size_t>(k)];
      }
    }
  });
  return y;
}

}  // namespace jcapa::ops
