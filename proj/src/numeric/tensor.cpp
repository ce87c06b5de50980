#include "tmhfs/numeric/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace tmhfs::numeric {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, Buffer<T> values) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{1}, Buffer<T>{value});
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_impl(std::shared_ptr<Impl> impl) {
  BasicTensor t;
  t.impl_ = std::move(impl);
  return t;
}

template <typename T>
void BasicTensor<T>::require_defined() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  require_defined();
  return impl_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  require_defined();
  return impl_->data.size();
}

template <typename T>
std::span<T> BasicTensor<T>::data() {
  require_defined();
  return impl_->data;
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  require_defined();
  return impl_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool flag) {
  require_defined();
  impl_->requires_grad = flag;
  return *this;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <typename T>
std::span<T> BasicTensor<T>::grad() {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return impl_->grad;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return impl_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  require_defined();
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
void BasicTensor<T>::clear_grad() {
  require_defined();
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  require_defined();
  BasicTensor out(impl_->shape, impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  require_defined();
  return BasicTensor(impl_->shape, impl_->data);
}

// ---------------------------------------------------------------------------

namespace {
thread_local bool t_grad_enabled = true;
bool g_finite_checks = true;
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool enabled) { g_finite_checks = enabled; }

template <typename T>
Tape<T>& Tape<T>::current() {
  thread_local Tape tape;
  return tape;
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_fn) {
  entries_.push_back(std::move(backward_fn));
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    clear();
    throw ShapeError("backward needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    clear();
    throw std::logic_error("backward: loss does not depend on any tensor that requires grad");
  }
  loss.impl()->grad.assign(1, T(1));
  // Entries whose output received no gradient are no-ops, so replaying the
  // whole tape in reverse only touches ancestors of the loss.
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  clear();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace tmhfs::numeric
