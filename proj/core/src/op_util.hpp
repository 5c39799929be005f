#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "jcapa/error.hpp"
#include "jcapa/tensor.hpp"

namespace jcapa::detail {

// Fingerprint of the branches (relu signs, row argmaxes) taken by the ops
// run while a recorder is installed. Gradient checks use it to spot finite
// difference probes that cross a kink.
struct BranchRecorder {
  std::uint64_t hash = 1469598103934665603ULL;
  void mix(std::uint64_t v) {
    hash ^= v;
    hash *= 1099511628211ULL;
  }
};

BranchRecorder*& active_branch_recorder();

inline bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

inline Tensor make_output(Shape dims, std::vector<float> data) {
  return Tensor(std::move(dims), std::move(data), false);
}

// Appends a node producing `out` if any input requires grad.
inline void record(Tensor& out, std::initializer_list<const Tensor*> inputs,
                   Tape::BackwardFn fn) {
  if (!should_record(inputs)) return;
  std::vector<ImplPtr> keep;
  keep.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t && t->defined()) keep.push_back(t->impl());
  }
  Tape::current().record(std::move(keep), out.impl(), std::move(fn));
}

// Gradient buffer of `impl`, allocated as zeros on first use, or nullptr
// when the tensor does not take gradients.
inline float* grad_buffer(const ImplPtr& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0f);
  return impl->grad.data();
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                     shape_str(b.dims()));
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.dims()));
  }
}

}  // namespace jcapa::detail
