#pragma once

#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace edgeshield {

using Shape = std::vector<std::size_t>;

/// Buffers handed to Eigen start on a SIMD boundary so vectorized reductions
/// split the same way on every run, independent of heap layout.
template <typename T>
using AlignedBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not fit the operation.
class ShapeError : public TensorError {
 public:
  using TensorError::TensorError;
};

/// An operation produced NaN or Inf.
class NumericError : public TensorError {
 public:
  using TensorError::TensorError;
};

/// Misuse of the gradient machinery (non-scalar loss, loss off the tape, missing grads).
class GradientError : public TensorError {
 public:
  using TensorError::TensorError;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class GradientTape;
template <typename T>
class NoGradScope;

/// Dense row-major tensor with optional participation in a GradientTape.
///
/// A BasicTensor is a handle: copies share the same storage, so a parameter
/// held by a layer and by an optimizer is one object. Use clone() for a
/// deep copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : BasicTensor(Shape{0}) {}

  explicit BasicTensor(Shape shape, T fill = T(0)) : storage_(std::make_shared<Storage>()) {
    check_extents(shape);
    storage_->values.assign(shape_numel(shape), fill);
    storage_->shape = std::move(shape);
  }

  BasicTensor(Shape shape, std::vector<T> values) : storage_(std::make_shared<Storage>()) {
    check_extents(shape);
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_string(shape));
    }
    storage_->shape = std::move(shape);
    storage_->values.assign(values.begin(), values.end());
  }

  BasicTensor(Shape shape, AlignedBuffer<T> values) : storage_(std::make_shared<Storage>()) {
    check_extents(shape);
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_string(shape));
    }
    storage_->shape = std::move(shape);
    storage_->values = std::move(values);
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t size() const { return storage_->values.size(); }

  std::span<T> data() { return storage_->values; }
  std::span<const T> data() const { return storage_->values; }
  std::vector<T> values() const { return {storage_->values.begin(), storage_->values.end()}; }

  T& operator[](std::size_t i) { return storage_->values[i]; }
  const T& operator[](std::size_t i) const { return storage_->values[i]; }
  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return storage_->values[0];
  }

  bool requires_grad() const { return storage_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    storage_->requires_grad = on;
    return *this;
  }

  /// Accumulated gradient; empty until a backward pass reaches this leaf.
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> mutable_grad() { return storage_->grad; }
  BasicTensor grad_tensor() const {
    if (!has_grad()) throw GradientError("tensor has no gradient");
    return BasicTensor(shape(), storage_->grad);
  }
  void zero_grad() { std::fill(storage_->grad.begin(), storage_->grad.end(), T(0)); }
  void clear_grad() { storage_->grad.clear(); }

  /// Deep copy of values; the copy is a fresh leaf with no gradient.
  BasicTensor clone() const {
    BasicTensor out(shape(), storage_->values);
    out.storage_->requires_grad = storage_->requires_grad;
    return out;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    AlignedBuffer<U> converted(storage_->values.begin(), storage_->values.end());
    return BasicTensor<U>(shape(), std::move(converted));
  }

  /// Same values viewed under another shape; shares nothing with the source.
  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), storage_->values); }

  bool shares_storage(const BasicTensor& other) const { return storage_ == other.storage_; }

  /// True for leaves that request gradients or are watched by the active tape,
  /// and for outputs recorded on the active tape.
  bool tracked() const;

 private:
  struct Storage {
    Shape shape;
    AlignedBuffer<T> values;
    AlignedBuffer<T> grad;
    bool requires_grad = false;
    std::uint64_t tape_id = 0;     // id of the tape that recorded this as an output
    std::uint64_t watched_by = 0;  // id of the tape watching this leaf
  };

  static void check_extents(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  }

  std::shared_ptr<Storage> storage_;

  friend class GradientTape<T>;
  template <typename U>
  friend class BasicTensor;
};

using Tensor = BasicTensor<float>;

/// Records differentiable operations executed while it is the active tape on
/// this thread, then replays them in reverse to populate leaf gradients.
///
/// Only operations with at least one tracked input are recorded. Leaf
/// gradients accumulate across backward() calls until zero_grad().
template <typename T>
class GradientTape {
 public:
  /// grad_inputs[i] is an accumulation buffer for input i, or empty when
  /// input i does not need a gradient. Implementations must add, not assign.
  using BackwardFn =
      std::function<void(std::span<const T> grad_output, std::span<std::span<T>> grad_inputs)>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  /// Marks a leaf so that, for this tape only, it is tracked and receives a
  /// (possibly zero) gradient on backward.
  void watch(const BasicTensor<T>& leaf);

  void backward(const BasicTensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  std::uint64_t id() const { return id_; }

  static GradientTape* active() { return active_; }

  /// Called by operations. Records `fn` if the tape is active and any input is tracked.
  static bool record(std::initializer_list<const BasicTensor<T>*> inputs, BasicTensor<T>& output,
                     BackwardFn fn);
  static bool record(const std::vector<const BasicTensor<T>*>& inputs, BasicTensor<T>& output,
                     BackwardFn fn);

 private:
  using StoragePtr = std::shared_ptr<typename BasicTensor<T>::Storage>;
  struct Entry {
    std::vector<StoragePtr> inputs;
    StoragePtr output;
    BackwardFn fn;
  };

  std::vector<Entry> entries_;
  std::vector<StoragePtr> watched_;
  std::uint64_t id_;
  GradientTape* previous_;

  static thread_local GradientTape* active_;

  friend class NoGradScope<T>;
};

template <typename T>
bool BasicTensor<T>::tracked() const {
  if (storage_->requires_grad) return true;
  auto* tape = GradientTape<T>::active();
  return tape != nullptr &&
         (storage_->tape_id == tape->id() || storage_->watched_by == tape->id());
}

/// Temporarily deactivates gradient recording on this thread.
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradientTape<T>* saved_;
};

extern template class GradientTape<float>;
extern template class GradientTape<double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;

}  // namespace edgeshield
