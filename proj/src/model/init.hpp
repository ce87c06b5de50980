#pragma once

#include <cmath>
#include <cstddef>

#include "tmhfs/numeric/tensor.hpp"
#include "tmhfs/random.hpp"

namespace tmhfs::detail {

template <typename T>
numeric::BasicTensor<T> xavier(numeric::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  numeric::BasicTensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
numeric::BasicTensor<T> filled(numeric::Shape shape, T value, bool trainable) {
  numeric::BasicTensor<T> t(std::move(shape), value);
  t.set_requires_grad(trainable);
  return t;
}

}  // namespace tmhfs::detail
