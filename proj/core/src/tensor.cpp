#include "jcapa/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "jcapa/error.hpp"

namespace jcapa {

std::int64_t shape_numel(const Shape& dims) {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_dims(const Shape& dims) {
  if (dims.empty()) throw ShapeError("tensor must have rank >= 1");
  for (auto d : dims) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(dims));
  }
}

thread_local bool t_grad_enabled = true;

}  // namespace

Tensor::Tensor(Shape dims, std::vector<float> values, bool requires_grad) {
  validate_dims(dims);
  if (shape_numel(dims) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("tensor of shape " + shape_str(dims) + " needs " +
                     std::to_string(shape_numel(dims)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->dims = std::move(dims);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape dims, bool requires_grad) {
  return full(std::move(dims), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape dims, float value, bool requires_grad) {
  validate_dims(dims);
  const auto n = static_cast<std::size_t>(shape_numel(dims));
  return Tensor(std::move(dims), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from_impl(detail::ImplPtr impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::dims() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->dims;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& d = dims();
  if (axis >= d.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(d));
  }
  return d[axis];
}

std::size_t Tensor::rank() const { return dims().size(); }

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data().size()); }

std::span<const float> Tensor::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

float Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() needs a single-element tensor, got " + shape_str(dims()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of undefined tensor");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return !impl_ || impl_->is_leaf; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  Tensor t(dims(), impl_->data, impl_->requires_grad);
  t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const { return Tensor(dims(), impl_->data, false); }

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::vector<detail::ImplPtr> inputs, detail::ImplPtr output,
                  BackwardFn backward) {
  output->is_leaf = false;
  output->requires_grad = true;
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::clear() { nodes_.clear(); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.dims()));
  }
  const auto& target = loss.impl();
  std::size_t end = nodes_.size();
  while (end > 0 && nodes_[end - 1].output != target) --end;
  if (end == 0) {
    throw ContractError(
        "loss is not on the active tape (graph already consumed, or built under "
        "NoGradGuard); double backward is not supported");
  }

  target->grad.assign(1, 1.0f);
  for (std::size_t i = end; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.output->grad.empty()) continue;
    node.backward(node.output->grad);
  }
  // Intermediate gradients are sweep-local; only leaves keep theirs.
  for (auto& node : nodes_) {
    node.output->grad.clear();
    node.output->grad.shrink_to_fit();
  }
  nodes_.clear();
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace jcapa
