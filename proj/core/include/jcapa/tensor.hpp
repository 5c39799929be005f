#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace jcapa {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& dims);
std::string shape_str(const Shape& dims);

namespace detail {

struct TensorImpl {
  Shape dims;
  std::vector<float> data;
  // Empty until a gradient flows into the tensor.
  std::vector<float> grad;
  bool requires_grad = false;
  // False for tensors produced by a recorded op.
  bool is_leaf = true;
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

/// Dense row-major float32 tensor with an optional gradient slot.
///
/// Tensors are shared handles: copying a Tensor aliases the same storage.
/// Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape dims, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape dims, bool requires_grad = false);
  static Tensor full(Shape dims, float value, bool requires_grad = false);
  /// Scalars are represented with dims {1}.
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& dims() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const;
  std::int64_t numel() const;

  std::span<const float> data() const;
  /// Direct writes bypass the tape (used by optimizers and initializers).
  std::span<float> mutable_data();
  float item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  Tensor clone() const;
  /// Same values, fresh storage, no gradient tracking.
  Tensor detach() const;

  const detail::ImplPtr& impl() const noexcept { return impl_; }
  static Tensor from_impl(detail::ImplPtr impl);

 private:
  detail::ImplPtr impl_;
};

/// Reverse-mode tape. Each thread records into its own tape; ops append
/// nodes in execution order so the node list is always topologically sorted.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const float> grad_out)>;

  static Tape& current();

  void record(std::vector<detail::ImplPtr> inputs, detail::ImplPtr output,
              BackwardFn backward);
  /// Runs the reverse sweep from `loss` and clears the tape. Throws
  /// ContractError for non-scalar losses and for losses not on the tape,
  /// which is also what a second backward over the same graph hits.
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::vector<detail::ImplPtr> inputs;
    detail::ImplPtr output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

void backward(const Tensor& loss);

bool grad_enabled();

/// Disables recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace jcapa
