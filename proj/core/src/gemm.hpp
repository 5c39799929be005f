#pragma once

#include <cstdint>

namespace jcapa::detail {

// C(m×n) (+)= op(A) · op(B), all row-major and contiguous.
// op(A) is m×k: A is stored m×k, or k×m when trans_a.
// op(B) is k×n: B is stored k×n, or n×k when trans_b.
// Each C entry sums over k in ascending order regardless of tiling, so
// results do not depend on the blocking parameters.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const float* a, const float* b, float* c, bool accumulate);

// When set, gemm sums each entry in double and rounds once. Finite-difference
// references use it; the regular float path is unaffected.
bool& gemm_double_accumulation();

}  // namespace jcapa::detail
