#include "gemm.hpp"

#include <algorithm>
#include <vector>

namespace jcapa::detail {
namespace {

constexpr std::int64_t kColTile = 256;

void pack_transpose(const float* src, std::int64_t rows, std::int64_t cols,
                    std::vector<float>& dst) {
  dst.resize(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

// C += A·B with A m×k, B k×n.
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a, const float* b,
             float* c) {
  for (std::int64_t j0 = 0; j0 < n; j0 += kColTile) {
    const std::int64_t jn = std::min(kColTile, n - j0);
    std::int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
      float* c0 = c + (i + 0) * n + j0;
      float* c1 = c + (i + 1) * n + j0;
      float* c2 = c + (i + 2) * n + j0;
      float* c3 = c + (i + 3) * n + j0;
      for (std::int64_t p = 0; p < k; ++p) {
        const float a0 = a[(i + 0) * k + p];
        const float a1 = a[(i + 1) * k + p];
        const float a2 = a[(i + 2) * k + p];
        const float a3 = a[(i + 3) * k + p];
        const float* __restrict bp = b + p * n + j0;
        for (std::int64_t j = 0; j < jn; ++j) {
          const float bv = bp[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      float* __restrict ci = c + i * n + j0;
      for (std::int64_t p = 0; p < k; ++p) {
        const float av = a[i * k + p];
        const float* __restrict bp = b + p * n + j0;
        for (std::int64_t j = 0; j < jn; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

// Reference kernel for gemm_double_accumulation(); shapes are small there.
void gemm_nn_double(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
                    const float* b, float* c) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double s = c[i * n + j];
      for (std::int64_t p = 0; p < k; ++p) {
        s += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
      }
      c[i * n + j] = static_cast<float>(s);
    }
  }
}

}  // namespace

bool& gemm_double_accumulation() {
  thread_local bool enabled = false;
  return enabled;
}

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0f);
  if (m == 0 || n == 0 || k == 0) return;

  thread_local std::vector<float> pack_a;
  thread_local std::vector<float> pack_b;
  if (trans_a) {
    pack_transpose(a, k, m, pack_a);
    a = pack_a.data();
  }
  if (trans_b) {
    pack_transpose(b, n, k, pack_b);
    b = pack_b.data();
  }
  if (gemm_double_accumulation()) {
    gemm_nn_double(m, n, k, a, b, c);
  } else {
    gemm_nn(m, n, k, a, b, c);
  }
}

}  // namespace jcapa::detail
