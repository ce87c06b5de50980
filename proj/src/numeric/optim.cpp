#include "tmhfs/numeric/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tmhfs::numeric {

template <typename T>
void sgd_step(std::span<BasicTensor<T>> params, T lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw std::logic_error("sgd_step: parameter " + std::to_string(i) + " of shape " +
                             shape_str(params[i].shape()) + " has no gradient");
    }
  }
  for (auto& p : params) {
    auto data = p.data();
    auto grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
    std::fill(grad.begin(), grad.end(), T(0));
  }
}

template <typename T>
double clip_grad_norm(std::span<BasicTensor<T>> params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.grad()) g *= scale;
    }
  }
  return norm;
}

template void sgd_step<float>(std::span<BasicTensor<float>>, float);
template void sgd_step<double>(std::span<BasicTensor<double>>, double);
template double clip_grad_norm<float>(std::span<BasicTensor<float>>, double);
template double clip_grad_norm<double>(std::span<BasicTensor<double>>, double);

namespace {
constexpr std::size_t kFullScaleEpisodes = 50000;
}

LrSchedule::LrSchedule() : LrSchedule({{0, 0.1}, {25000, 0.006}, {35000, 0.0012}}) {}

LrSchedule::LrSchedule(std::vector<Milestone> milestones) : milestones_(std::move(milestones)) {
  if (milestones_.empty() || milestones_.front().episode != 0) {
    throw std::invalid_argument("lr schedule must start at episode 0");
  }
  for (std::size_t i = 0; i < milestones_.size(); ++i) {
    if (!(milestones_[i].lr > 0.0)) throw std::invalid_argument("lr schedule values must be positive");
    if (i > 0 && milestones_[i].episode <= milestones_[i - 1].episode) {
      throw std::invalid_argument("lr schedule episode indices must be strictly increasing");
    }
  }
}

LrSchedule LrSchedule::scaled_to(std::size_t episodes) {
  const LrSchedule full;
  std::vector<Milestone> out;
  for (const auto& m : full.milestones()) {
    const std::size_t at = m.episode * episodes / kFullScaleEpisodes;
    if (!out.empty() && at <= out.back().episode) continue;
    out.push_back({at, m.lr});
  }
  return LrSchedule(std::move(out));
}

double lr_at(const LrSchedule& schedule, std::size_t episode) {
  const auto& ms = schedule.milestones();
  auto it = std::upper_bound(ms.begin(), ms.end(), episode,
                             [](std::size_t e, const Milestone& m) { return e < m.episode; });
  return std::prev(it)->lr;
}

}  // namespace tmhfs::numeric
