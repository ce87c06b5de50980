#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "tmhfs/numeric/tensor.hpp"

namespace tmhfs::numeric::detail {

template <typename T>
using ImplPtr = std::shared_ptr<typename BasicTensor<T>::Impl>;

template <typename Impl>
auto& grad_of(Impl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0);
  return t.grad;
}

template <typename T>
void check_finite(const Buffer<T>& values, const char* op) {
  if (!finite_checks_enabled()) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + ": non-finite output at element " + std::to_string(i));
    }
  }
}

template <typename T>
BasicTensor<T> make_output(Shape shape, Buffer<T> values, const char* op,
                           std::initializer_list<const BasicTensor<T>*> inputs) {
  check_finite(values, op);
  BasicTensor<T> out(std::move(shape), std::move(values));
  bool track = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) track = track || in->requires_grad();
  }
  out.set_requires_grad(track);
  return out;
}

template <typename T>
void record(std::function<void()> fn) {
  Tape<T>::current().record(std::move(fn));
}

}  // namespace tmhfs::numeric::detail
