#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wellcast::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};
}  // namespace detail

/// Shared handle to a row-major float64 array with an optional gradient buffer.
///
/// Copies share storage. Leaf tensors that require grad (parameters) keep
/// accumulating gradients across tapes until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const noexcept { return impl_->shape; }
  std::size_t numel() const noexcept { return impl_->value.size(); }
  std::size_t dim(std::size_t axis) const noexcept { return impl_->shape[axis]; }
  bool requires_grad() const noexcept { return impl_->requires_grad; }

  std::span<const double> data() const noexcept { return impl_->value; }
  // Only meaningful on leaves; writing to a taped intermediate corrupts backward.
  std::span<double> mutable_data() noexcept { return impl_->value; }

  bool has_grad() const noexcept { return !impl_->grad.empty(); }
  std::span<const double> grad() const noexcept { return impl_->grad; }
  // Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad() noexcept;

  double item() const;

  /// Deep copy of values with a fresh gradient state.
  Tensor clone(bool requires_grad) const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend class Tape;
};

/// Records differentiable operations in execution order and replays them in
/// reverse for backward().
///
/// Binary elementwise ops require equal shapes, except that either operand may
/// be a single-element tensor. conv2d works on single samples: x is
/// [C, H, W], the kernel [O, C, k, k] with odd k, stride 1, zero "same" padding.
/// concat and slice act on axis 0, which is the channel axis for [C, H, W].
class Tape {
 public:
  Tape() = default;
  /// A non-recording tape computes forward values only; outputs never require grad.
  explicit Tape(bool recording) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias = {});
  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor concat(std::span<const Tensor> parts);
  Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor mse_loss(const Tensor& prediction, const Tensor& target);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor
  /// reachable from the loss that requires grad.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

 private:
  using Impl = detail::TensorImpl;
  using ImplPtr = std::shared_ptr<Impl>;

  template <class Backward>
  Tensor record(Shape shape, std::vector<double> value, bool requires_grad, Backward&& backward, const char* op);
  Tensor binary(const Tensor& a, const Tensor& b, int kind);

  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
};

/// Adam with bias correction. Moment buffers are created on the first step.
struct AdamState {
  std::int64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  bool operator==(const AdamState&) const = default;
};

/// One update of every parameter from its accumulated gradient (missing
/// gradients count as zero). Increments state.step.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace wellcast::nn
