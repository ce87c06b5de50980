#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "temp_dir.hpp"
#include "tmhfs/numeric/grad_check.hpp"
#include "tmhfs/pipeline.hpp"
#include "tmhfs/random.hpp"

namespace fixtures {

/// conv4, K=4, 8x8 input, two pooled blocks (8 -> 4 -> 2).
inline tmhfs::BackboneConfig tiny_backbone() { return {tmhfs::Arch::conv4, 4, 8, 2}; }

inline tmhfs::Image random_image(std::size_t side, tmhfs::Rng& rng) {
  tmhfs::Image img(side, side);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform(0, 1));
  return img;
}

/// `way`-way episode of random images with `shot` support and `query` query
/// rows per class; class c carries global label c % global_classes.
inline tmhfs::Episode random_episode(std::size_t way, std::size_t shot, std::size_t query, std::size_t side,
                                     std::size_t global_classes, std::uint64_t seed) {
  tmhfs::Rng rng(seed);
  tmhfs::Episode ep;
  std::uint64_t id = 0;
  for (std::size_t c = 0; c < way; ++c) {
    ep.class_map.push_back(c % global_classes);
    for (std::size_t i = 0; i < shot; ++i) ep.support.push_back({random_image(side, rng), c, c % global_classes, id++});
    for (std::size_t i = 0; i < query; ++i) ep.query.push_back({random_image(side, rng), c, c % global_classes, id++});
  }
  return ep;
}

/// Worst finite-difference error of `loss` over every model parameter.
/// `loss` must recompute from the model's own tensors, which grad_check
/// perturbs in place.
inline double max_grad_error(const tmhfs::BasicModel<double>& model,
                             const std::function<tmhfs::numeric::Tensor64()>& loss, double eps = 1e-6) {
  double worst = 0;
  for (auto& p : model.parameters()) {
    auto f = [&](const tmhfs::numeric::Tensor64&) { return loss(); };
    worst = std::max(worst, tmhfs::numeric::grad_check<double>(f, p, eps));
  }
  return worst;
}

}  // namespace fixtures
