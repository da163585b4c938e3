#include "freezelab/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "freezelab/error.hpp"

namespace freezelab {

namespace detail {

struct TensorImpl {
  TensorId id;
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  // Index of the producing node on `tape`, or -1 for leaves.
  long node = -1;
  const Tape* tape = nullptr;
};

}  // namespace detail

namespace {

std::atomic<TensorId> next_id{1};

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<double> data,
                                              bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor of shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->id = next_id.fetch_add(1, std::memory_order_relaxed);
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

std::vector<double>& grad_buffer(detail::TensorImpl& t) {
  if (!t.grad) t.grad.emplace(t.data.size(), 0.0);
  return *t.grad;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  impl_ = make_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(make_impl(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return *impl_;
}

TensorId Tensor::id() const { return impl().id; }
const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }
std::span<const double> Tensor::values() const { return impl().data; }
std::span<double> Tensor::mutable_values() { return impl().data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " +
                                     shape_to_string(shape()));
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool on) { impl().requires_grad = on; }
bool Tensor::is_leaf() const { return impl().node < 0; }
bool Tensor::has_grad() const { return impl().grad.has_value(); }

std::span<const double> Tensor::grad() const {
  const auto& g = impl().grad;
  if (!g) throw Error("tensor " + std::to_string(id()) + " has no gradient");
  return *g;
}

Tensor Tensor::clone() const { return Tensor(shape(), impl().data, false); }

struct Tape::Node {
  std::string op;
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  std::shared_ptr<detail::TensorImpl> output;
  BackwardFn backward;
};

Tape::Tape() = default;
Tape::~Tape() { reset(); }

std::size_t Tape::size() const noexcept { return nodes_.size(); }

Tensor Tape::record(std::string_view op, Shape shape, std::vector<double> values,
                    std::vector<Tensor> inputs, BackwardFn backward) {
  bool track = false;
  if (recording_) {
    for (const Tensor& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  auto out = make_impl(std::move(shape), std::move(values), track);
  if (!track) return Tensor(out);

  if (backward_done_) throw Error("tape: record after backward without reset()");
  auto node = std::make_unique<Node>();
  node->op = std::string(op);
  node->backward = std::move(backward);
  node->inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    node->inputs.push_back(in.impl_);
    if (in.impl_ && in.impl_->node < 0 && in.impl_->requires_grad) leaves_.push_back(in.impl_);
  }
  out->node = static_cast<long>(nodes_.size());
  out->tape = this;
  node->output = out;
  nodes_.push_back(std::move(node));
  return Tensor(out);
}

GradMap Tape::backward(const Tensor& loss) {
  if (backward_done_) throw Error("tape: backward called twice without reset()");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  detail::TensorImpl& root = loss.impl();
  backward_done_ = true;
  GradMap result;
  if (!root.requires_grad) return result;
  // Leaves may still hold buffers from an earlier tape; start clean.
  for (auto& node : nodes_) {
    for (auto& in : node->inputs) {
      if (in) in->grad.reset();
    }
    node->output->grad.reset();
  }
  root.grad.reset();
  if (root.node < 0) {
    // A leaf loss is its own gradient.
    grad_buffer(root)[0] += 1.0;
    result.emplace(root.id, Tensor(root.shape, *root.grad));
    return result;
  }
  if (root.tape != this) throw Error("backward: loss was recorded on a different tape");
  grad_buffer(root)[0] += 1.0;

  for (long i = root.node; i >= 0; --i) {
    Node& node = *nodes_[static_cast<std::size_t>(i)];
    if (!node.output->grad) continue;  // not on a path to the loss
    NodeGrads grads;
    grads.output = *node.output->grad;
    grads.inputs.reserve(node.inputs.size());
    for (auto& in : node.inputs) {
      if (in && in->requires_grad) {
        grads.inputs.emplace_back(grad_buffer(*in));
      } else {
        grads.inputs.emplace_back();
      }
    }
    node.backward(grads);
  }

  std::unordered_set<TensorId> seen;
  for (auto& leaf : leaves_) {
    if (!leaf->grad || !seen.insert(leaf->id).second) continue;
    result.emplace(leaf->id, Tensor(leaf->shape, *leaf->grad));
  }
  return result;
}

void Tape::reset() {
  for (auto& node : nodes_) {
    for (auto& in : node->inputs) {
      if (in) in->grad.reset();
    }
    node->output->grad.reset();
    node->output->tape = nullptr;
    node->output->node = -1;
  }
  nodes_.clear();
  leaves_.clear();
  backward_done_ = false;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace freezelab
