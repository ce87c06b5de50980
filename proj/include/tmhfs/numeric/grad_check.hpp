#pragma once

#include <functional>

#include "tmhfs/numeric/tensor.hpp"

namespace tmhfs::numeric {

/// Compares the tape gradient of a scalar function against central
/// differences, coordinate by coordinate. Returns
///   max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
///
/// `x` is perturbed in place, so `f` may read it through any alias (for
/// example a parameter held inside a model). Use the double instantiation:
/// float central differences carry ~1e-3 roundoff at eps = 1e-4.
template <typename T>
T grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f, BasicTensor<T> x, T eps);

}  // namespace tmhfs::numeric
