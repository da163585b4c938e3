#pragma once

// Dense float64 tensors with a tape-based reverse-mode autodiff engine.
//
// A Tensor is a shared handle: copies alias the same storage, like the
// reference-counted tensors of most deep-learning runtimes. Use clone() for an
// independent copy. Operations are free functions that take the Tape they
// record onto; a node is recorded only while the tape is recording and at
// least one input requires a gradient.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace freezelab {

using Shape = std::vector<std::size_t>;
using TensorId = std::uint64_t;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tape;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  TensorId id() const;

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  // True when the tensor was not produced by a recorded operation.
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;

  // Independent copy of the values: fresh id, no gradient, not tracked.
  Tensor clone() const;

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  detail::TensorImpl& impl() const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Parameter id -> gradient, ordered by id (creation order), so reductions
// over a GradMap are deterministic.
using GradMap = std::map<TensorId, Tensor>;

// Gradient buffers handed to a node's backward function. inputs[i] is empty
// when input i does not need a gradient; otherwise backward adds into it.
struct NodeGrads {
  std::span<const double> output;
  std::vector<std::span<double>> inputs;
};

using BackwardFn = std::function<void(const NodeGrads&)>;

// Record of executed operations. Nodes are appended in execution order, so
// the list is topologically sorted and backward is a single reverse sweep.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  void set_recording(bool on) noexcept { recording_ = on; }
  std::size_t size() const noexcept;

  // Builds the result tensor of an operation and, when tracking applies,
  // records a node. `backward` may capture anything it needs by value.
  Tensor record(std::string_view op, Shape shape, std::vector<double> values,
                std::vector<Tensor> inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss. Every participating tensor with
  // requires_grad receives a gradient; the returned map holds the leaves.
  // A second call without reset() throws.
  GradMap backward(const Tensor& loss);

  // Drops all nodes and clears gradients on every tensor the tape touched.
  void reset();

 private:
  struct Node;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<std::shared_ptr<detail::TensorImpl>> leaves_;
  bool recording_ = true;
  bool backward_done_ = false;
};

// Suspends recording for a scope (validation, inference).
class NoGradScope {
 public:
  explicit NoGradScope(Tape& tape) : tape_(tape), previous_(tape.recording()) {
    tape_.set_recording(false);
  }
  ~NoGradScope() { tape_.set_recording(previous_); }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape& tape_;
  bool previous_;
};

enum class Activation { relu, silu, sigmoid };
enum class Reduction { sum, mean };

// Cross-correlation over NCHW input with OIHW weight. `bias` may be an
// undefined Tensor.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

Tensor elementwise(Tape& tape, const Tensor& x, Activation kind);
inline Tensor relu(Tape& tape, const Tensor& x) { return elementwise(tape, x, Activation::relu); }
inline Tensor silu(Tape& tape, const Tensor& x) { return elementwise(tape, x, Activation::silu); }
inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return elementwise(tape, x, Activation::sigmoid);
}

Tensor upsample_nearest2x(Tape& tape, const Tensor& x);
Tensor concat_channels(Tape& tape, std::span<const Tensor> parts);
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_channels(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);
// Stride-1 max pooling with symmetric padding; padded cells never win.
Tensor max_pool2d(Tape& tape, const Tensor& x, int kernel, int padding);

Tensor reduce(Tape& tape, const Tensor& x, Reduction kind);
inline Tensor sum(Tape& tape, const Tensor& x) { return reduce(tape, x, Reduction::sum); }
inline Tensor mean(Tape& tape, const Tensor& x) { return reduce(tape, x, Reduction::mean); }

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);

// Per-output-channel weight standardization of an OIHW kernel:
// w_hat = gain * (w - mean) / sqrt(sum((w - mean)^2) + eps), i.e. each filter
// has zero mean and norm `gain`.
Tensor standardize_weight(Tape& tape, const Tensor& weight, double gain);

double sigmoid_value(double x);

}  // namespace freezelab
