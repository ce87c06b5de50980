#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmhfs::numeric {

using Shape = std::vector<std::size_t>;

/// Allocates on 64-byte boundaries. Eigen's vectorized kernels peel a
/// scalar prologue whose length depends on operand alignment, so malloc's
/// 16-byte guarantee would make float results depend on heap history.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes are incompatible for an op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces NaN/Inf or a numeric precondition is violated.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor with optional participation in reverse-mode
/// differentiation.
///
/// A tensor is a shared handle: copies alias the same storage, which is how
/// parameter tensors are updated in place by the optimizer. Use clone() for
/// an independent copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  struct Impl {
    Shape shape;
    Buffer<T> data;
    Buffer<T> grad;  // empty means "no gradient"
    bool requires_grad = false;
  };

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, Buffer<T> values);
  BasicTensor(Shape shape, const std::vector<T>& values)
      : BasicTensor(std::move(shape), Buffer<T>(values.begin(), values.end())) {}
  BasicTensor(Shape shape, std::initializer_list<T> values) : BasicTensor(std::move(shape), Buffer<T>(values)) {}

  static BasicTensor scalar(T value);
  static BasicTensor from_impl(std::shared_ptr<Impl> impl);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<T> data();
  std::span<const T> data() const;
  T item() const;

  bool requires_grad() const;
  BasicTensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();
  void clear_grad();

  /// Deep copy of data (gradient dropped, requires_grad flag kept).
  BasicTensor clone() const;
  /// Deep copy that never requires grad.
  BasicTensor detach() const;

  template <typename U>
  BasicTensor<U> cast() const {
    Buffer<U> out(numel());
    auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    BasicTensor<U> result(shape(), std::move(out));
    result.set_requires_grad(requires_grad());
    return result;
  }

  bool shares_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  void require_defined() const;

  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// ---------------------------------------------------------------------------
// Gradient tape
// ---------------------------------------------------------------------------

/// Whether ops currently record onto the tape (per thread).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// When enabled (the default), every op output is scanned for NaN/Inf and a
/// NumericError is thrown naming the op.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

/// Ordered record of backward closures for one thread and scalar type.
template <typename T>
class Tape {
 public:
  static Tape& current();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  /// Propagates d(loss)/d(x) into every reachable requires_grad tensor and
  /// clears the tape.
  void backward(const BasicTensor<T>& loss);

 private:
  std::vector<std::function<void()>> entries_;
};

template <typename T>
void backward(const BasicTensor<T>& loss) {
  Tape<T>::current().backward(loss);
}

}  // namespace tmhfs::numeric
