#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tmhfs/numeric/tensor.hpp"

namespace tmhfs::numeric {

/// Plain SGD: p <- p - lr * grad, then grads are zeroed.
/// Throws std::logic_error if any parameter has no gradient.
template <typename T>
void sgd_step(std::span<BasicTensor<T>> params, T lr);

/// Rescales all gradients together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before rescaling.
template <typename T>
double clip_grad_norm(std::span<BasicTensor<T>> params, double max_norm);

struct Milestone {
  std::size_t episode = 0;
  double lr = 0.0;
};

/// Step-wise learning rate: the lr of the last milestone at or before an
/// episode index applies.
class LrSchedule {
 public:
  LrSchedule();  // default three-step schedule (0.1, 0.006 @ 25000, 0.0012 @ 35000)
  explicit LrSchedule(std::vector<Milestone> milestones);

  /// Same lr values with milestone indices scaled by episodes / 50000.
  static LrSchedule scaled_to(std::size_t episodes);

  const std::vector<Milestone>& milestones() const { return milestones_; }

 private:
  std::vector<Milestone> milestones_;
};

double lr_at(const LrSchedule& schedule, std::size_t episode);

}  // namespace tmhfs::numeric
