#include "tmhfs/numeric/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace tmhfs::numeric {

namespace {

template <typename T>
T evaluate(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f, const BasicTensor<T>& x) {
  const T value = f(x).item();
  if (!std::isfinite(value)) throw NumericError("grad_check: f(x) is not finite");
  return value;
}

}  // namespace

template <typename T>
T grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f, BasicTensor<T> x, T eps) {
  if (!(eps > T(0)) || eps > T(1e-2)) throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2]");

  const bool had_flag = x.requires_grad();
  Buffer<T> saved_grad;
  if (x.has_grad()) saved_grad.assign(x.grad().begin(), x.grad().end());

  Tape<T>::current().clear();
  x.set_requires_grad(true);
  x.clear_grad();
  Buffer<T> analytic(x.numel(), T(0));
  {
    auto loss = f(x);
    if (!std::isfinite(loss.item())) {
      Tape<T>::current().clear();
      throw NumericError("grad_check: f(x) is not finite");
    }
    backward(loss);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
  }

  T worst = T(0);
  {
    NoGradGuard no_grad;
    auto values = x.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      values[i] = original + eps;
      const T up = evaluate(f, x);
      values[i] = original - eps;
      const T down = evaluate(f, x);
      values[i] = original;
      const T numeric = (up - down) / (T(2) * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(T(1), std::abs(numeric)));
    }
  }

  x.set_requires_grad(had_flag);
  if (saved_grad.empty()) {
    x.clear_grad();
  } else {
    x.zero_grad();
    std::copy(saved_grad.begin(), saved_grad.end(), x.grad().begin());
  }
  return worst;
}

template float grad_check<float>(const std::function<BasicTensor<float>(const BasicTensor<float>&)>&,
                                  BasicTensor<float>, float);
template double grad_check<double>(const std::function<BasicTensor<double>(const BasicTensor<double>&)>&,
                                   BasicTensor<double>, double);

}  // namespace tmhfs::numeric
